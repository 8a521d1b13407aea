//! Pairwise distances, Gaussian kernels and row-stochastic smoothing operators.
//!
//! Squared distances are computed once per (train, query) pair of point sets;
//! every pyramid level then only re-exponentiates with a new bandwidth.
//!
//! Three operator modes are supported:
//!
//! ```text
//! Full                    P_ij = K_ij / sum_k K_ik
//! ZeroDiagThenNormalize   P_ij = K_ij / sum_{k != i} K_ik,   P_ii = 0
//! NormalizeThenZeroDiag   P_ij = K_ij / sum_k K_ik (j != i), P_ii = 0
//! ```
//!
//! `ZeroDiagThenNormalize` gives the exact hold-one-out weights of point `i`
//! and still preserves constants. `NormalizeThenZeroDiag` leaves row `i`
//! summing to `1 - P_ii`.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{invalid, Error, Result};

/// Row sums below this floor are treated as vanished.
pub const ROW_SUM_FLOOR: f64 = 1e-300;

/// Squared Euclidean distances between the rows of two point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
}

impl DistanceMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }
}

/// Entry `(i, j)` is `sum_d (a_id - b_jd)^2`, clamped at zero.
pub fn pairwise_sq_dists(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<DistanceMatrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            context: "pairwise distances require equal column counts",
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    let mut values = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ai) in a.outer_iter().enumerate() {
        for (j, bj) in b.outer_iter().enumerate() {
            let mut acc = 0.0;
            for (x, y) in ai.iter().zip(bj.iter()) {
                let diff = x - y;
                acc += diff * diff;
            }
            values[[i, j]] = acc.max(0.0);
        }
    }
    Ok(DistanceMatrix { values })
}

/// Denominator convention of the Gaussian exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthConvention {
    /// `exp(-d^2 / sigma^2)`, used by the pyramid.
    SigmaSquared,
    /// `exp(-d^2 / (2 sigma^2))`, used by diffusion maps.
    TwoSigmaSquared,
}

impl BandwidthConvention {
    fn denominator(self, sigma: f64) -> f64 {
        match self {
            BandwidthConvention::SigmaSquared => sigma * sigma,
            BandwidthConvention::TwoSigmaSquared => 2.0 * sigma * sigma,
        }
    }
}

/// `exp(-D2 / sigma^2)` entrywise. The usual normalizing constant is left
/// out: it cancels under row normalization.
pub fn gaussian_kernel(d2: &DistanceMatrix, sigma: f64) -> Result<Array2<f64>> {
    gaussian_kernel_with(d2, sigma, BandwidthConvention::SigmaSquared)
}

pub fn gaussian_kernel_with(
    d2: &DistanceMatrix,
    sigma: f64,
    convention: BandwidthConvention,
) -> Result<Array2<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("must be positive and finite, got {sigma}")));
    }
    let denom = convention.denominator(sigma);
    Ok(d2.values.mapv(|v| (-v / denom).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelMode {
    Full,
    #[default]
    ZeroDiagThenNormalize,
    NormalizeThenZeroDiag,
}

impl KernelMode {
    pub fn touches_diagonal(self) -> bool {
        !matches!(self, KernelMode::Full)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelMode::Full => "full",
            KernelMode::ZeroDiagThenNormalize => "zero-diag-then-normalize",
            KernelMode::NormalizeThenZeroDiag => "normalize-then-zero-diag",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            KernelMode::Full => 0,
            KernelMode::ZeroDiagThenNormalize => 1,
            KernelMode::NormalizeThenZeroDiag => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(KernelMode::Full),
            1 => Some(KernelMode::ZeroDiagThenNormalize),
            2 => Some(KernelMode::NormalizeThenZeroDiag),
            _ => None,
        }
    }
}

impl std::str::FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(KernelMode::Full),
            "zero-diag-then-normalize" | "zero_diag_then_normalize" => {
                Ok(KernelMode::ZeroDiagThenNormalize)
            }
            "normalize-then-zero-diag" | "normalize_then_zero_diag" => {
                Ok(KernelMode::NormalizeThenZeroDiag)
            }
            other => Err(invalid("kernel_mode", format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for KernelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Row-normalized kernel at one scale.
#[derive(Debug, Clone)]
pub struct SmoothingOperator {
    values: Array2<f64>,
    mode: KernelMode,
    scale: Option<f64>,
    degenerate_rows: usize,
}

impl SmoothingOperator {
    /// Builds the operator straight from squared distances at bandwidth `sigma`
    /// (`exp(-d^2/sigma^2)` convention).
    pub fn at_scale(d2: &DistanceMatrix, sigma: f64, mode: KernelMode) -> Result<Self> {
        let k = gaussian_kernel(d2, sigma)?;
        let mut op = smoothing_operator(k, mode)?;
        op.scale = Some(sigma);
        Ok(op)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    /// Rows whose kernel mass vanished and were replaced by a uniform row.
    pub fn degenerate_rows(&self) -> usize {
        self.degenerate_rows
    }

    pub fn underflowed(&self) -> bool {
        self.degenerate_rows > 0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }
}

/// Row-normalizes a nonnegative kernel matrix according to `mode`.
pub fn smoothing_operator(mut k: Array2<f64>, mode: KernelMode) -> Result<SmoothingOperator> {
    let (rows, cols) = k.dim();
    if mode.touches_diagonal() && rows != cols {
        return Err(Error::NotSquare {
            mode: mode.as_str(),
            rows,
            cols,
        });
    }
    if mode == KernelMode::ZeroDiagThenNormalize {
        k.diag_mut().fill(0.0);
    }
    let mut degenerate_rows = 0;
    for (i, mut row) in k.axis_iter_mut(Axis(0)).enumerate() {
        let sum: f64 = row.sum();
        if sum < ROW_SUM_FLOOR || !sum.is_finite() {
            degenerate_rows += 1;
            let permitted = if mode == KernelMode::ZeroDiagThenNormalize {
                cols - 1
            } else {
                cols
            };
            let w = if permitted == 0 { 0.0 } else { 1.0 / permitted as f64 };
            row.fill(w);
            if mode == KernelMode::ZeroDiagThenNormalize {
                row[i] = 0.0;
            }
        } else {
            row.mapv_inplace(|v| v / sum);
        }
    }
    if mode == KernelMode::NormalizeThenZeroDiag {
        k.diag_mut().fill(0.0);
    }
    Ok(SmoothingOperator {
        values: k,
        mode,
        scale: None,
        degenerate_rows,
    })
}

/// Linear-interpolated `q`-th percentile (`q` in `[0, 100]`) of the pairwise
/// Euclidean distances `||x_i - x_j||`, `i < j`.
pub fn pairwise_distance_percentile(points: ArrayView2<f64>, q: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&q) {
        return Err(invalid("percentile", format!("must lie in [0, 100], got {q}")));
    }
    let n = points.nrows();
    if n < 2 {
        return Err(Error::Empty("at least two points are needed for pairwise distances"));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let xi = points.row(i);
        for j in (i + 1)..n {
            let xj = points.row(j);
            let d2: f64 = xi.iter().zip(xj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            dists.push(d2.sqrt());
        }
    }
    let pos = q / 100.0 * (dists.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    let (_, lo_val, upper) = dists.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_val = *lo_val;
    let hi_val = if hi == lo {
        lo_val
    } else {
        // the (lo+1)-th order statistic is the minimum of the upper partition
        upper.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(lo_val + frac * (hi_val - lo_val))
}
