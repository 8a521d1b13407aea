//! Laplacian pyramids and their auto-adaptive variant.
//!
//! A pyramid approximates a function sampled on `N` points by repeatedly
//! smoothing the current residual with a Gaussian operator whose bandwidth
//! shrinks by a factor `mu` at every level:
//!
//! ```text
//! fit_0 = P_0 y
//! fit_l = fit_{l-1} + P_l (y - fit_{l-1}),     sigma_l = sigma0 / mu^l
//! ```
//!
//! The auto-adaptive variant trains with zero-diagonal operators, so the
//! training error at level `l` estimates the leave-one-out error of a plain
//! pyramid at that level. Training stops once the error stops decreasing;
//! that level is the model's resolution.
//!
//! Level indices are zero-based throughout: `error_curve[l]` is the error of
//! `fit_l`, `residuals[l]` is the function smoothed at level `l`
//! (`residuals[0] = y`), and a model whose optimal level is `k` predicts with
//! levels `0..=k`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, Error, Result};
use crate::kernel::{
    gaussian_kernel, pairwise_distance_percentile, pairwise_sq_dists, DistanceMatrix, KernelMode,
    SmoothingOperator, ROW_SUM_FLOOR,
};

/// Largest sample the brute-force leave-one-out oracle accepts.
pub const EXACT_LOOCV_MAX_N: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Plain pyramid with full operators; the error curve is the training error.
    Standard,
    /// Zero-diagonal training operators; the error curve estimates LOOCV.
    #[default]
    AutoAdaptive,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::AutoAdaptive => "auto-adaptive",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Variant::Standard => 0,
            Variant::AutoAdaptive => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Standard),
            1 => Some(Variant::AutoAdaptive),
            _ => None,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "auto-adaptive" | "auto_adaptive" | "alp" => Ok(Variant::AutoAdaptive),
            other => Err(invalid("variant", format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlpConfig {
    /// Initial bandwidth. `None` selects twice the median pairwise distance.
    pub sigma0: Option<f64>,
    /// Bandwidth divisor between levels, `> 1`.
    pub mu: f64,
    /// Maximum number of levels.
    pub max_iter: usize,
    pub variant: Variant,
    /// Training operator mode for the auto-adaptive variant. The standard
    /// variant always uses [`KernelMode::Full`].
    pub kernel_mode: KernelMode,
    /// Keep iterating up to `max_iter` after every output stopped improving.
    pub run_all_levels: bool,
}

impl Default for AlpConfig {
    fn default() -> Self {
        AlpConfig {
            sigma0: None,
            mu: 2.0,
            max_iter: 50,
            variant: Variant::AutoAdaptive,
            kernel_mode: KernelMode::ZeroDiagThenNormalize,
            run_all_levels: false,
        }
    }
}

impl AlpConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.sigma0 {
            if !(s > 0.0) || !s.is_finite() {
                return Err(invalid("sigma0", format!("must be positive and finite, got {s}")));
            }
        }
        if !(self.mu > 1.0) || !self.mu.is_finite() {
            return Err(invalid("mu", format!("must be finite and > 1, got {}", self.mu)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }

    fn training_mode(&self) -> KernelMode {
        match self.variant {
            Variant::Standard => KernelMode::Full,
            Variant::AutoAdaptive => self.kernel_mode,
        }
    }
}

/// Twice the median pairwise Euclidean distance of `points`.
pub fn default_sigma0(points: ArrayView2<f64>) -> Result<f64> {
    let median = pairwise_distance_percentile(points, 50.0)?;
    if !(median > 0.0) {
        return Err(Error::ZeroSpread);
    }
    Ok(2.0 * median)
}

/// A trained pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlpModel {
    train_points: Array2<f64>,
    sigma0: f64,
    mu: f64,
    kernel_mode: KernelMode,
    variant: Variant,
    residuals: Vec<Array2<f64>>,
    error_curve: Vec<Vec<f64>>,
    optimal_iter: Vec<usize>,
}

impl AlpModel {
    /// Assembles a model from stored parts, checking shape consistency.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        train_points: Array2<f64>,
        sigma0: f64,
        mu: f64,
        kernel_mode: KernelMode,
        variant: Variant,
        residuals: Vec<Array2<f64>>,
        error_curve: Vec<Vec<f64>>,
        optimal_iter: Vec<usize>,
    ) -> Result<Self> {
        if !(sigma0 > 0.0) || !sigma0.is_finite() {
            return Err(invalid("sigma0", format!("must be positive and finite, got {sigma0}")));
        }
        if !(mu > 1.0) || !mu.is_finite() {
            return Err(invalid("mu", format!("must be finite and > 1, got {mu}")));
        }
        let n = train_points.nrows();
        if n == 0 {
            return Err(Error::Empty("model has no training points"));
        }
        let m = optimal_iter.len();
        if m == 0 {
            return Err(Error::Empty("model has no outputs"));
        }
        let needed = optimal_iter.iter().max().copied().unwrap_or(0) + 1;
        if residuals.len() < needed {
            return Err(Error::DimensionMismatch {
                context: "stored residual levels",
                expected: needed,
                got: residuals.len(),
            });
        }
        for r in &residuals {
            if r.dim() != (n, m) {
                return Err(Error::DimensionMismatch {
                    context: "residual matrix rows x outputs",
                    expected: n * m,
                    got: r.len(),
                });
            }
        }
        if !error_curve.is_empty() && error_curve.len() != m {
            return Err(Error::DimensionMismatch {
                context: "error curves per output",
                expected: m,
                got: error_curve.len(),
            });
        }
        Ok(AlpModel {
            train_points,
            sigma0,
            mu,
            kernel_mode,
            variant,
            residuals,
            error_curve,
            optimal_iter,
        })
    }

    pub fn train_points(&self) -> &Array2<f64> {
        &self.train_points
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kernel_mode(&self) -> KernelMode {
        self.kernel_mode
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn residuals(&self) -> &[Array2<f64>] {
        &self.residuals
    }

    pub fn error_curve(&self) -> &[Vec<f64>] {
        &self.error_curve
    }

    /// Zero-based optimal level per output.
    pub fn optimal_iter(&self) -> &[usize] {
        &self.optimal_iter
    }

    pub fn n_outputs(&self) -> usize {
        self.optimal_iter.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.train_points.ncols()
    }

    /// Bandwidth of level `level`.
    pub fn bandwidth(&self, level: usize) -> f64 {
        bandwidth_schedule(self.sigma0, self.mu, level + 1)[level]
    }
}

/// Diagnostics from one training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Per output, the error of every level that was computed.
    pub error_curves: Vec<Vec<f64>>,
    /// Per output, the zero-based level at which the error stopped decreasing.
    pub stopping_iter: Vec<usize>,
    /// `sigma0 / mu^l` for every computed level.
    pub bandwidths: Vec<f64>,
    /// A level was abandoned because kernel rows vanished.
    pub underflow: bool,
    /// Training fits `fit_l` for every computed level.
    pub fitted: Vec<Array2<f64>>,
}

/// `sigma0, sigma0/mu, ...` by repeated division.
pub fn bandwidth_schedule(sigma0: f64, mu: f64, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(levels);
    let mut sigma = sigma0;
    for _ in 0..levels {
        out.push(sigma);
        sigma /= mu;
    }
    out
}

fn check_sample(x: ArrayView2<f64>, f: ArrayView2<f64>, min_n: usize) -> Result<()> {
    let n = x.nrows();
    if n == 0 || x.ncols() == 0 {
        return Err(Error::Empty("training sample"));
    }
    if f.ncols() == 0 {
        return Err(Error::Empty("target matrix has no columns"));
    }
    if n < min_n {
        return Err(invalid("n", format!("need at least {min_n} points, got {n}")));
    }
    if f.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "target rows must match sample rows",
            expected: n,
            got: f.nrows(),
        });
    }
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "sample", row, col });
        }
    }
    for ((row, col), v) in f.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "targets", row, col });
        }
    }
    Ok(())
}

fn mean_sq_columns(d: &Array2<f64>) -> Vec<f64> {
    let n = d.nrows() as f64;
    d.axis_iter(Axis(1))
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / n)
        .collect()
}

/// First level after which the curve stops strictly decreasing.
fn first_local_min(curve: &[f64]) -> usize {
    curve
        .windows(2)
        .position(|w| !(w[1] < w[0]))
        .unwrap_or(curve.len().saturating_sub(1))
}

/// Trains a pyramid on sample `x` (N x D) with targets `f` (N x M).
pub fn alp_train(
    x: ArrayView2<f64>,
    f: ArrayView2<f64>,
    config: &AlpConfig,
) -> Result<(AlpModel, TrainReport)> {
    config.validate()?;
    check_sample(x, f, 3)?;
    let sigma0 = match config.sigma0 {
        Some(s) => s,
        None => default_sigma0(x)?,
    };
    let mode = config.training_mode();
    let d2 = pairwise_sq_dists(x, x)?;
    let m = f.ncols();

    let target = f.to_owned();
    let mut fit = Array2::<f64>::zeros(target.dim());
    let mut residual = target.clone();
    let mut residuals = Vec::new();
    let mut fitted = Vec::new();
    let mut curves = vec![Vec::new(); m];
    let mut bandwidths = Vec::new();
    let mut improving = vec![true; m];
    let mut underflow = false;

    let mut sigma = sigma0;
    for level in 0..config.max_iter {
        let op = SmoothingOperator::at_scale(&d2, sigma, mode)?;
        if op.underflowed() {
            if level == 0 {
                return Err(Error::InitialUnderflow { sigma0 });
            }
            underflow = true;
            break;
        }
        fit += &op.values().dot(&residual);
        residuals.push(residual);
        residual = &target - &fit;
        bandwidths.push(sigma);
        fitted.push(fit.clone());

        for (out, err) in mean_sq_columns(&residual).into_iter().enumerate() {
            let curve = &mut curves[out];
            if let Some(&prev) = curve.last() {
                if !(err < prev) {
                    improving[out] = false;
                }
            }
            curve.push(err);
        }
        if !config.run_all_levels && improving.iter().all(|s| !s) {
            break;
        }
        sigma /= config.mu;
    }

    let stopping_iter: Vec<usize> = curves.iter().map(|c| first_local_min(c)).collect();
    let keep = stopping_iter.iter().max().copied().unwrap_or(0) + 1;
    residuals.truncate(keep);

    let model = AlpModel {
        train_points: x.to_owned(),
        sigma0,
        mu: config.mu,
        kernel_mode: mode,
        variant: config.variant,
        residuals,
        error_curve: curves.clone(),
        optimal_iter: stopping_iter.clone(),
    };
    let report = TrainReport {
        error_curves: curves,
        stopping_iter,
        bandwidths,
        underflow,
        fitted,
    };
    Ok((model, report))
}

/// Evaluates the pyramid at new points with full row-normalized operators.
pub fn alp_predict(model: &AlpModel, x_test: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x_test.ncols() != model.n_inputs() {
        return Err(Error::DimensionMismatch {
            context: "test points must have the training column count",
            expected: model.n_inputs(),
            got: x_test.ncols(),
        });
    }
    let d2 = pairwise_sq_dists(x_test, model.train_points.view())?;
    predict_with_distances(model, &d2)
}

fn predict_with_distances(model: &AlpModel, d2: &DistanceMatrix) -> Result<Array2<f64>> {
    let m = model.n_outputs();
    let mut out = Array2::<f64>::zeros((d2.nrows(), m));
    let last = model.optimal_iter.iter().max().copied().unwrap_or(0);
    let mut sigma = model.sigma0;
    for level in 0..=last {
        let op = SmoothingOperator::at_scale(d2, sigma, KernelMode::Full)?;
        let contrib = op.values().dot(&model.residuals[level]);
        for (out_col, &k) in model.optimal_iter.iter().enumerate() {
            if level <= k {
                let mut col = out.column_mut(out_col);
                col += &contrib.column(out_col);
            }
        }
        sigma /= model.mu;
    }
    Ok(out)
}

/// Training error of the standard pyramid for every level `0..l_max`, per output.
pub fn lp_train_error_curve(
    x: ArrayView2<f64>,
    f: ArrayView2<f64>,
    sigma0: Option<f64>,
    mu: f64,
    l_max: usize,
) -> Result<Vec<Vec<f64>>> {
    let config = AlpConfig {
        sigma0,
        mu,
        max_iter: l_max,
        variant: Variant::Standard,
        kernel_mode: KernelMode::Full,
        run_all_levels: true,
    };
    let (_, report) = alp_train(x, f, &config)?;
    Ok(report.error_curves)
}

/// Brute-force leave-one-out error of the standard pyramid for every level
/// `0..l_max`, per output.
///
/// Each point `p` is held out in turn; a standard pyramid is trained on the
/// remaining `N - 1` points and evaluated at `x_p`. Cost is `O(L N^3)`.
pub fn exact_loocv_curve(
    x: ArrayView2<f64>,
    f: ArrayView2<f64>,
    sigma0: Option<f64>,
    mu: f64,
    l_max: usize,
) -> Result<Vec<Vec<f64>>> {
    check_sample(x, f, 3)?;
    let n = x.nrows();
    if n > EXACT_LOOCV_MAX_N {
        return Err(Error::OracleTooLarge {
            n,
            cap: EXACT_LOOCV_MAX_N,
        });
    }
    AlpConfig {
        sigma0,
        mu,
        max_iter: l_max,
        ..AlpConfig::default()
    }
    .validate()?;
    let sigma0 = match sigma0 {
        Some(s) => s,
        None => default_sigma0(x)?,
    };
    let d2 = pairwise_sq_dists(x, x)?;
    let sigmas = bandwidth_schedule(sigma0, mu, l_max);

    let mut curves = Vec::with_capacity(f.ncols());
    for target in f.axis_iter(Axis(1)) {
        // Column p holds the residual of the pyramid trained without point p;
        // its entry p stays zero so products skip the held-out point.
        let mut held = Array2::<f64>::zeros((n, n));
        for p in 0..n {
            let mut col = held.column_mut(p);
            col.assign(&target);
            col[p] = 0.0;
        }
        let mut pred = Array1::<f64>::zeros(n);
        let mut curve = Vec::with_capacity(l_max);

        for &sigma in &sigmas {
            let k = gaussian_kernel(&d2, sigma)?;
            let row_sums = k.sum_axis(Axis(1));
            let off_diag: Vec<f64> = k
                .outer_iter()
                .enumerate()
                .map(|(p, row)| row.iter().enumerate().filter(|&(j, _)| j != p).map(|(_, v)| v).sum())
                .collect();
            let smoothed = k.dot(&held);
            let mut next = held.clone();
            for p in 0..n {
                // prediction at the held-out point: weights over j != p
                let off = off_diag[p];
                pred[p] += if off >= ROW_SUM_FLOOR {
                    smoothed[[p, p]] / off
                } else {
                    held.column(p).sum() / (n - 1) as f64
                };
                for i in 0..n {
                    if i == p {
                        continue;
                    }
                    // the diagonal term keeps this sum >= 1
                    let denom = row_sums[i] - k[[i, p]];
                    next[[i, p]] -= smoothed[[i, p]] / denom;
                }
            }
            held = next;
            let err = target
                .iter()
                .zip(pred.iter())
                .map(|(y, yhat)| (y - yhat) * (y - yhat))
                .sum::<f64>()
                / n as f64;
            curve.push(err);
        }
        curves.push(curve);
    }
    Ok(curves)
}
