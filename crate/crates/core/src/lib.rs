//! # alp-core
//!
//! Auto-adaptive Laplacian pyramids (ALP): multiscale Gaussian-kernel
//! function approximation whose training error doubles as a leave-one-out
//! estimate, giving an automatic stopping level at `O(L N^2)` cost.
//!
//! Also provides diffusion maps and the extension of diffusion coordinates
//! to unseen points by training one pyramid per retained eigenvector.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`kernel`] | squared distances, Gaussian kernels, row-stochastic operators |
//! | [`alp`] | pyramid training and prediction, exact LOOCV oracle |
//! | [`diffusion`] | diffusion maps, diffusion distance, out-of-sample extension |
//! | [`synthetic`] | composite-sine benchmark, swiss roll |
//! | [`eval`] | k-means, label-matched confusion matrices, regression metrics |
//! | [`persist`] | versioned binary model and embedding files |
//! | [`io`] | CSV tables |
//!
//! ```
//! use alp_core::alp::{alp_predict, alp_train, AlpConfig};
//! use alp_core::synthetic::{gen_composite_sine, odd_even_split, SyntheticSpec};
//!
//! let (x, f) = gen_composite_sine(&SyntheticSpec::new(400, 0.05, 0)).unwrap();
//! let split = odd_even_split(x.view(), f.view());
//! let (model, report) = alp_train(split.train_x.view(), split.train_y.view(), &AlpConfig::default()).unwrap();
//! let pred = alp_predict(&model, split.test_x.view()).unwrap();
//! assert_eq!(pred.nrows(), 200);
//! assert_eq!(report.stopping_iter, model.optimal_iter());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alp;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod io;
pub mod kernel;
pub mod persist;
pub mod synthetic;

pub use error::{Error, Result};
