//! Communication-free parallel MCMC via Weierstrass samplers.
//!
//! The toolkit splits a dataset across `m` subsets, runs independent MCMC
//! chains against fractionated-prior subset posteriors, and recombines the
//! subset draws into draws from an approximation of the full-data posterior.
//! Recombination is built around the Weierstrass transform
//! `W_h f = K_h * f` (convolution with a scaled smoothing kernel): the
//! product of transformed subset densities admits both a Gibbs-style
//! *refinement* sampler over tethered auxiliary variables and a *rejection*
//! sampler driven by kernel distances between aligned subset draws.
//!
//! Module map:
//! - [`kernel`]: smoothing kernels, bandwidth schedules, grid densities, the
//!   Weierstrass transform, and the Gaussian conditional update.
//! - [`models`]: the benchmark models (logistic regression, Gaussian
//!   location mixture, Beta-Bernoulli, an analytic bimodal toy) plus data
//!   generators and fractionated-prior posteriors.
//! - [`engine`]: data partitioning, adaptive Metropolis subset chains,
//!   Laplace approximations, tethered chains, and the deterministic worker
//!   pool with splittable RNG streams.
//! - [`combine`]: the Weierstrass refinement, rejection, pairwise, and
//!   sequential samplers plus baseline combiners (averaging, kernel-marginal
//!   product, Laplace).
//! - [`metrics`]: total-variation and Gaussian-KL diagnostics, error ratios,
//!   and the transform-bias bound checker.
//! - [`config`] / [`pipeline`]: TOML experiment configs, the on-disk run
//!   layout, and the staged CLI pipeline with reproducibility manifests.

pub mod combine;
pub mod config;
pub mod engine;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
