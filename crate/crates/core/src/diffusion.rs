//! Diffusion maps and their out-of-sample extension by auto-adaptive pyramids.
//!
//! The embedding is built from
//!
//! ```text
//! W_ij      = exp(-||x_i - x_j||^2 / (2 sigma^2)),   g_i = sum_j W_ij
//! W^a_ij    = W_ij / (g_i^a g_j^a),                  g^a_i = sum_j W^a_ij
//! M_ij      = W^a_ij / g^a_i                         (row-stochastic)
//! ```
//!
//! `M` is similar to the symmetric `S = D^{-1/2} W^a D^{-1/2}` with
//! `D = diag(g^a)`, which is what gets eigendecomposed. Right eigenvectors
//! of `M` are recovered as `psi = v / sqrt(pi)` where `pi = g^a / sum(g^a)` is
//! the stationary distribution; this scaling makes them orthonormal in
//! `L^2(pi)`, so `psi_0 = 1` and Euclidean distances between full-spectrum
//! diffusion coordinates equal diffusion distances exactly.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::alp::{alp_predict, alp_train, AlpConfig, AlpModel};
use crate::error::{invalid, Error, Result};
use crate::kernel::{gaussian_kernel_with, pairwise_distance_percentile, pairwise_sq_dists, BandwidthConvention};

/// Practical upper bound on the sample size for the dense eigensolver.
pub const DENSE_EIGEN_CAP: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmConfig {
    /// Kernel bandwidth. `None` takes `sigma_percentile` of the pairwise distances.
    pub sigma: Option<f64>,
    pub sigma_percentile: f64,
    /// Density-normalization exponent in `[0, 1]`.
    pub alpha: f64,
    /// Diffusion time.
    pub t: u32,
    /// Spectral cutoff fraction in `(0, 1)`.
    pub delta: f64,
}

impl Default for DmConfig {
    fn default() -> Self {
        DmConfig {
            sigma: None,
            sigma_percentile: 50.0,
            alpha: 1.0,
            t: 1,
            delta: 0.1,
        }
    }
}

impl DmConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(invalid("sigma", format!("must be positive and finite, got {s}")));
            }
        }
        if !(0.0..=100.0).contains(&self.sigma_percentile) {
            return Err(invalid(
                "sigma_percentile",
                format!("must lie in [0, 100], got {}", self.sigma_percentile),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        if self.t == 0 {
            return Err(invalid("t", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

/// Intermediate matrices of the diffusion construction.
#[derive(Debug, Clone)]
pub struct DiffusionKernels {
    pub sigma: f64,
    pub w: Array2<f64>,
    pub degrees: Array1<f64>,
    pub w_alpha: Array2<f64>,
    pub degrees_alpha: Array1<f64>,
    pub markov: Array2<f64>,
}

fn resolve_sigma(x: ArrayView2<f64>, config: &DmConfig) -> Result<f64> {
    if pairwise_distance_percentile(x, 100.0)? == 0.0 {
        return Err(Error::ZeroSpread);
    }
    match config.sigma {
        Some(s) => Ok(s),
        None => {
            let s = pairwise_distance_percentile(x, config.sigma_percentile)?;
            if s > 0.0 {
                Ok(s)
            } else {
                Err(Error::ZeroSpread)
            }
        }
    }
}

pub fn diffusion_kernels(x: ArrayView2<f64>, config: &DmConfig) -> Result<DiffusionKernels> {
    config.validate()?;
    if x.nrows() < 3 {
        return Err(invalid("n", format!("diffusion maps need at least 3 points, got {}", x.nrows())));
    }
    let sigma = resolve_sigma(x, config)?;
    let d2 = pairwise_sq_dists(x, x)?;
    let w = gaussian_kernel_with(&d2, sigma, BandwidthConvention::TwoSigmaSquared)?;
    let degrees = w.sum_axis(Axis(1));
    let scale = degrees.mapv(|g| g.powf(config.alpha));
    let mut w_alpha = w.clone();
    for ((i, j), v) in w_alpha.indexed_iter_mut() {
        *v /= scale[i] * scale[j];
    }
    let degrees_alpha = w_alpha.sum_axis(Axis(1));
    let mut markov = w_alpha.clone();
    for (mut row, g) in markov.axis_iter_mut(Axis(0)).zip(degrees_alpha.iter()) {
        row /= *g;
    }
    Ok(DiffusionKernels {
        sigma,
        w,
        degrees,
        w_alpha,
        degrees_alpha,
        markov,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionEmbedding {
    eigenvalues: Array1<f64>,
    eigenvectors: Array2<f64>,
    dim: usize,
    coordinates: Array2<f64>,
    degrees: Array1<f64>,
    degrees_alpha: Array1<f64>,
    config: DmConfig,
    train_points: Array2<f64>,
}

/// Embedding dimension: the largest `l >= 1` with `|lambda_l| > delta |lambda_1|`.
pub fn retained_dimension(eigenvalues: &[f64], delta: f64) -> usize {
    if eigenvalues.len() < 2 {
        return 0;
    }
    let cut = delta * eigenvalues[1].abs();
    (1..eigenvalues.len())
        .filter(|&l| eigenvalues[l].abs() > cut)
        .max()
        .unwrap_or(0)
}

/// Flips `v` so its entry of largest magnitude (first on ties) is positive.
fn fix_sign(mut v: ndarray::ArrayViewMut1<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

impl DiffusionEmbedding {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        eigenvalues: Array1<f64>,
        eigenvectors: Array2<f64>,
        dim: usize,
        degrees: Array1<f64>,
        degrees_alpha: Array1<f64>,
        config: DmConfig,
        train_points: Array2<f64>,
    ) -> Result<Self> {
        let n = train_points.nrows();
        if eigenvalues.len() != n || eigenvectors.dim() != (n, n) || degrees.len() != n || degrees_alpha.len() != n {
            return Err(Error::Format("embedding arrays disagree with the point count".into()));
        }
        if dim >= n {
            return Err(Error::Format(format!("retained dimension {dim} must be below {n}")));
        }
        let coordinates = build_coordinates(&eigenvalues, &eigenvectors, dim, config.t);
        Ok(DiffusionEmbedding {
            eigenvalues,
            eigenvectors,
            dim,
            coordinates,
            degrees,
            degrees_alpha,
            config,
            train_points,
        })
    }

    /// All eigenvalues, `lambda_0 = 1` first, by decreasing magnitude.
    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    /// Right eigenvectors as columns, orthonormal in `L^2(pi)`.
    pub fn eigenvectors(&self) -> &Array2<f64> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// N x d matrix, column `k-1` holding `lambda_k^t psi_k`.
    pub fn coordinates(&self) -> &Array2<f64> {
        &self.coordinates
    }

    /// Coordinates over every nontrivial eigenpair.
    pub fn full_coordinates(&self) -> Array2<f64> {
        build_coordinates(&self.eigenvalues, &self.eigenvectors, self.eigenvalues.len() - 1, self.config.t)
    }

    pub fn degrees(&self) -> &Array1<f64> {
        &self.degrees
    }

    pub fn degrees_alpha(&self) -> &Array1<f64> {
        &self.degrees_alpha
    }

    /// Configuration with the bandwidth resolved.
    pub fn config(&self) -> &DmConfig {
        &self.config
    }

    pub fn sigma(&self) -> f64 {
        self.config.sigma.expect("fitted embeddings carry a resolved sigma")
    }

    pub fn train_points(&self) -> &Array2<f64> {
        &self.train_points
    }

    /// Stationary distribution of the Markov chain.
    pub fn stationary(&self) -> Array1<f64> {
        let total = self.degrees_alpha.sum();
        self.degrees_alpha.mapv(|g| g / total)
    }
}

fn build_coordinates(eigenvalues: &Array1<f64>, eigenvectors: &Array2<f64>, dim: usize, t: u32) -> Array2<f64> {
    let n = eigenvectors.nrows();
    let mut coords = Array2::zeros((n, dim));
    for k in 1..=dim {
        let scale = eigenvalues[k].powi(t as i32);
        let mut col = coords.column_mut(k - 1);
        col.assign(&eigenvectors.column(k));
        col *= scale;
    }
    coords
}

pub fn dm_fit(x: ArrayView2<f64>, config: &DmConfig) -> Result<DiffusionEmbedding> {
    let n = x.nrows();
    if n > DENSE_EIGEN_CAP {
        return Err(invalid("n", format!("dense eigendecomposition is capped at {DENSE_EIGEN_CAP} points, got {n}")));
    }
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "sample", row, col });
        }
    }
    let kernels = diffusion_kernels(x, config)?;
    let root = kernels.degrees_alpha.mapv(f64::sqrt);
    let sym = DMatrix::from_fn(n, n, |i, j| kernels.w_alpha[[i, j]] / (root[i] * root[j]));
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]))
    });

    let total = kernels.degrees_alpha.sum();
    let inv_sqrt_pi = kernels.degrees_alpha.mapv(|g| (total / g).sqrt());
    let mut eigenvalues = Array1::zeros(n);
    let mut eigenvectors = Array2::zeros((n, n));
    for (k, &src) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[src];
        if !lambda.is_finite() {
            return Err(Error::Eigen(format!("non-finite eigenvalue at position {k}")));
        }
        eigenvalues[k] = lambda;
        let mut col = eigenvectors.column_mut(k);
        for i in 0..n {
            col[i] = eig.eigenvectors[(i, src)] * inv_sqrt_pi[i];
        }
        fix_sign(col);
    }

    let dim = retained_dimension(eigenvalues.as_slice().expect("contiguous"), config.delta);
    let mut resolved = *config;
    resolved.sigma = Some(kernels.sigma);
    DiffusionEmbedding::from_parts(
        eigenvalues,
        eigenvectors,
        dim,
        kernels.degrees,
        kernels.degrees_alpha,
        resolved,
        x.to_owned(),
    )
}

/// Squared diffusion distance `sum_k lambda_k^{2t} (psi_k(i) - psi_k(j))^2`
/// over the retained components, or over every nontrivial one.
pub fn diffusion_distance(emb: &DiffusionEmbedding, i: usize, j: usize, use_full_spectrum: bool) -> Result<f64> {
    let n = emb.eigenvalues.len();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, len: n });
        }
    }
    let upper = if use_full_spectrum { n - 1 } else { emb.dim };
    let two_t = 2 * emb.config.t as i32;
    Ok((1..=upper)
        .map(|k| {
            let diff = emb.eigenvectors[[i, k]] - emb.eigenvectors[[j, k]];
            emb.eigenvalues[k].powi(two_t) * diff * diff
        })
        .sum())
}

/// Extends the listed eigenvectors (unscaled) to `x_test` with one
/// multi-output pyramid. Returns the values and the trained model.
pub fn extend_eigenvectors(
    emb: &DiffusionEmbedding,
    x_test: ArrayView2<f64>,
    components: &[usize],
    alp: &AlpConfig,
) -> Result<(Array2<f64>, AlpModel)> {
    let n = emb.eigenvalues.len();
    if components.is_empty() {
        return Err(Error::Empty("no eigenvector components requested"));
    }
    if let Some(&bad) = components.iter().find(|&&k| k >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let targets = emb.eigenvectors.select(Axis(1), components);
    let (model, _) = alp_train(emb.train_points.view(), targets.view(), alp)?;
    let values = alp_predict(&model, x_test)?;
    Ok((values, model))
}

/// Diffusion coordinates of `x_test`: each retained `psi_k` is extended by
/// the pyramid and scaled by `lambda_k^t`.
pub fn dm_extend(emb: &DiffusionEmbedding, x_test: ArrayView2<f64>, alp: &AlpConfig) -> Result<Array2<f64>> {
    if emb.dim == 0 {
        return Err(Error::Empty("embedding retains no nontrivial components"));
    }
    let components: Vec<usize> = (1..=emb.dim).collect();
    let (mut values, _) = extend_eigenvectors(emb, x_test, &components, alp)?;
    for (c, &k) in components.iter().enumerate() {
        let scale = emb.eigenvalues[k].powi(emb.config.t as i32);
        let mut col = values.column_mut(c);
        col *= scale;
    }
    Ok(values)
}
