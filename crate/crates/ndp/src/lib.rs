//! Valid Bayesian and maximum-likelihood inference from differentially
//! private summaries when the sample size itself is privatized.
//!
//! Under add/delete (unbounded) adjacency the sample size `n` is protected,
//! so an analyst sees only a noisy summary `s` and a noisy count `n_dp`.
//! This crate treats the confidential records and `n` as latent variables:
//!
//! - [`mechanisms`]: the noise samplers and log-densities behind `s` and
//!   `n_dp`, clamping and sensitivity calculators, and conversions from
//!   mainline DP frameworks to total-variation (0, delta)-DP.
//! - [`models`]: the pluggable data-model contract used by the samplers,
//!   with Bernoulli, Gaussian linear-regression, Dirichlet-compositional and
//!   Poisson-multinomial instances.
//! - [`n_posterior`]: the posterior over `n` given `n_dp` under a flat
//!   prior, its closed-form deviation bounds, and the mixture likelihood.
//! - [`rjmcmc`]: the reversible-jump sampler targeting
//!   `p(theta, x_{1:n}, n | s, n_dp)`, with birth/death moves on `n`.
//! - [`mcem`]: Monte Carlo EM for the maximizer of the mixture likelihood,
//!   with closed-form and gradient M-steps.
//! - [`oracle`]: brute-force enumeration posteriors for small instances,
//!   distance estimators, and the empirical checks of the distributional
//!   convergence claims.
//!
//! Chains are strictly sequential; replicated work parallelizes by seed
//! splitting (see [`parallel`]), with rayon behind the default `parallel`
//! feature and a plain sequential fallback without it.

pub mod error;
pub mod mcem;
pub mod mechanisms;
pub mod models;
pub mod n_posterior;
pub mod oracle;
pub mod parallel;
pub mod rjmcmc;
pub mod rng;
pub mod util;

pub use error::{NdpError, Result};
pub use mechanisms::{DpSummary, NdpValue, NoiseFamily, PrivacyBudget};
