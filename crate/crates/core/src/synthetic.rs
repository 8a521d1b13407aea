//! Seeded synthetic datasets.
//!
//! The composite sine has one frequency on `[0, 10pi/3]`, two on
//! `(10pi/3, 20pi/3]` and three on `(20pi/3, 10pi]`:
//!
//! ```text
//! f(x) = sin(x) + 0.5 sin(3x) 1{x > 10pi/3} + 0.25 sin(9x) 1{x > 20pi/3} + eps,
//! eps ~ U[-delta, delta]
//! ```

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};

pub const SINE_RANGE_END: f64 = 10.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_points: usize,
    /// Half-width of the uniform noise.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n_points: usize, noise: f64, seed: u64) -> Self {
        SyntheticSpec { n_points, noise, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(invalid("n_points", format!("must be at least 2, got {}", self.n_points)));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(invalid("noise", format!("must be finite and >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

/// Noise-free composite sine at `x`.
pub fn composite_sine(x: f64) -> f64 {
    let mut y = x.sin();
    if x > SINE_RANGE_END / 3.0 {
        y += 0.5 * (3.0 * x).sin();
    }
    if x > 2.0 * SINE_RANGE_END / 3.0 {
        y += 0.25 * (9.0 * x).sin();
    }
    y
}

/// Equally spaced `x` on `[0, 10pi]` (N x 1) and noisy targets (N x 1).
pub fn gen_composite_sine(spec: &SyntheticSpec) -> Result<(Array2<f64>, Array2<f64>)> {
    spec.validate()?;
    let n = spec.n_points;
    let step = SINE_RANGE_END / (n - 1) as f64;
    let x = Array2::from_shape_fn((n, 1), |(i, _)| if i == n - 1 { SINE_RANGE_END } else { i as f64 * step });
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let f = Array2::from_shape_fn((n, 1), |(i, _)| {
        let eps = if spec.noise > 0.0 {
            rng.random_range(-spec.noise..=spec.noise)
        } else {
            0.0
        };
        composite_sine(x[[i, 0]]) + eps
    });
    Ok((x, f))
}

/// Row indices `(train, test)`: 1-based odd positions train, even positions test.
pub fn odd_even_indices(n: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..n).step_by(2).collect(), (1..n).step_by(2).collect())
}

pub struct Split {
    pub train_x: Array2<f64>,
    pub train_y: Array2<f64>,
    pub test_x: Array2<f64>,
    pub test_y: Array2<f64>,
}

pub fn odd_even_split(x: ArrayView2<f64>, f: ArrayView2<f64>) -> Split {
    let (train, test) = odd_even_indices(x.nrows());
    Split {
        train_x: x.select(Axis(0), &train),
        train_y: f.select(Axis(0), &train),
        test_x: x.select(Axis(0), &test),
        test_y: f.select(Axis(0), &test),
    }
}

/// Swiss roll `(t cos t, h, t sin t)` with `t ~ U[1.5pi, 4.5pi]`,
/// `h ~ U[0, height]` and isotropic Gaussian jitter of standard deviation
/// `noise`. Returns the 3-D points and the roll parameter `t`.
pub fn gen_swiss_roll(n: usize, height: f64, noise: f64, seed: u64) -> Result<(Array2<f64>, Array1<f64>)> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(invalid("noise", format!("must be finite and >= 0, got {noise}")));
    }
    if !(height >= 0.0) || !height.is_finite() {
        return Err(invalid("height", format!("must be finite and >= 0, got {height}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut points = Array2::zeros((n, 3));
    let mut t = Array1::zeros(n);
    for i in 0..n {
        let ti = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
        let hi = height * rng.random::<f64>();
        let mut p = [ti * ti.cos(), hi, ti * ti.sin()];
        if noise > 0.0 {
            for c in &mut p {
                *c += jitter.sample(&mut rng);
            }
        }
        for (j, c) in p.iter().enumerate() {
            points[[i, j]] = *c;
        }
        t[i] = ti;
    }
    Ok((points, t))
}

/// Seeded shuffle of `0..n` cut into `(first, rest)` with `round(frac * n)` in `first`.
pub fn random_split(n: usize, frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((frac * n as f64).round() as usize).min(n);
    let rest = idx.split_off(cut);
    (idx, rest)
}
