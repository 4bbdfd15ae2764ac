//! Sparse principal component estimation over lq balls, spiked covariance
//! sampling, and the minimax-rate machinery needed to test the estimators:
//! packing sets, Fano bounds, KL formulas, deviation statistics, rate
//! formulas, and a Monte Carlo harness that fits convergence-rate exponents.
//!
//! The crate is organized as:
//! - [`linalg`]: symmetric eigensolver and the projection-distance loss;
//! - [`model`]: spiked covariances, sparsity classes, sub-Gaussian samplers;
//! - [`estimators`]: plain PCA, exact l0 search, truncated power, projected
//!   lq ascent;
//! - [`theory`]: rate formulas, packing sets, Varshamov-Gilbert codes, the
//!   generalized Fano bound;
//! - [`deviation`]: empirical-process statistics of `S - Sigma` and their
//!   bound formulas;
//! - [`harness`]: experiment configs, Monte Carlo execution, rate fitting;
//! - [`cli`]: the `spca` command-line front end.

pub mod cli;
pub mod deviation;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::{curvature_gap, projection_loss, sin_theta, sym_eig, SymMatrix, UnitVector};
pub use model::{
    lq_norm, make_spiked, sample_covariance, sample_data, sparse_unit_vector, NoiseScales,
    SamplerKind, SamplerSpec, Sigma0, SparsityClass, SpikedModel,
};
