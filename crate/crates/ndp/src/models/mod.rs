//! The pluggable data-model contract used by the reversible-jump sampler and
//! the Monte Carlo EM, plus the concrete models.
//!
//! A model bundles the data distribution `p(x | theta)`, the prior, the
//! theta update, and the record-additive form of its privacy mechanism:
//! `p(s | x_{1:n}) = g(s, sum_i t(s, x_i))`, exposed through
//! [`Model::record_statistic_into`] (the per-record `t`) and
//! [`Model::summary_loglik`] (the log of `g`). Record additivity is what
//! keeps one sampler cycle at `O(n)`.

mod bernoulli;
mod dirichlet;
pub mod poisson_multinomial;
mod regression;

pub use bernoulli::BernoulliModel;
pub use dirichlet::{DirichletModel, DirichletParams};
pub use poisson_multinomial::{PmState, PoissonMultinomialModel, PoissonMultinomialParams};
pub use regression::{RegressionHyper, RegressionModel, RegressionParams, RegressionRecord};

use crate::error::Result;
use crate::mechanisms::NoiseFamily;
use crate::rng::ChainRng;

/// Whether `update_theta` is an exact draw from `p(theta | x_{1:n})` or a
/// Markov kernel that leaves it invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaUpdateKind {
    ExactConditional,
    InvariantKernel,
}

/// Sufficient statistics accumulated over E-step samples:
/// `t_sum = sum_j sum_i T(x_i^(j))`, the total record count, and the number
/// of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub t_sum: Vec<f64>,
    pub n_total: u64,
    pub num_samples: u64,
}

impl SuffStats {
    pub fn zeros(dim: usize) -> Self {
        Self { t_sum: vec![0.0; dim], n_total: 0, num_samples: 0 }
    }
}

pub trait Model {
    type Theta: Clone;
    type Datum: Clone;

    fn name(&self) -> &'static str;

    /// Dimension of the released summary vector `s`.
    fn summary_dim(&self) -> usize;

    /// Noise family of the summary mechanism (used by the acceptance audit).
    fn summary_noise_family(&self) -> NoiseFamily;

    fn sample_prior(&self, rng: &mut ChainRng) -> Self::Theta;

    fn sample_datum(&self, theta: &Self::Theta, rng: &mut ChainRng) -> Self::Datum;

    fn log_datum_density(&self, x: &Self::Datum, theta: &Self::Theta) -> f64;

    fn theta_update_kind(&self) -> ThetaUpdateKind;

    /// Draws the next theta given the data: an exact conditional draw or one
    /// sweep of a `p(theta | x_{1:n})`-invariant kernel, per
    /// [`Model::theta_update_kind`]. `current` seeds the kernel case.
    fn update_theta(
        &self,
        current: &Self::Theta,
        data: &[Self::Datum],
        rng: &mut ChainRng,
    ) -> Result<Self::Theta>;

    /// The per-record statistic `t(s, x_i)`, written into `out`
    /// (`summary_dim` long).
    fn record_statistic_into(&self, s: &[f64], x: &Self::Datum, out: &mut [f64]);

    fn record_statistic(&self, s: &[f64], x: &Self::Datum) -> Vec<f64> {
        let mut out = vec![0.0; self.summary_dim()];
        self.record_statistic_into(s, x, &mut out);
        out
    }

    /// `log g(s, t_x)`, the summary log-likelihood of the mechanism.
    fn summary_loglik(&self, s: &[f64], t_x: &[f64]) -> f64;

    /// Flattened natural components of theta, for traces and tables.
    fn theta_names(&self) -> Vec<String>;
    fn theta_to_vec(&self, theta: &Self::Theta) -> Vec<f64>;

    /// Unconstrained reparameterization used by the gradient M-step
    /// (positive components on log scale, SPD blocks via log-Cholesky).
    fn unconstrained_dim(&self) -> usize;
    fn theta_to_unconstrained(&self, theta: &Self::Theta) -> Vec<f64>;
    fn theta_from_unconstrained(&self, v: &[f64]) -> Self::Theta;

    /// Gradient of `phi -> log p(x | theta(phi))` at `phi =
    /// theta_to_unconstrained(theta)`. `None` when the model does not
    /// support gradient M-steps.
    fn grad_log_datum_unconstrained(
        &self,
        _x: &Self::Datum,
        _theta: &Self::Theta,
    ) -> Option<Vec<f64>> {
        None
    }

    /// Dimension of the per-record EM sufficient statistic `T(x)`.
    fn mstep_stat_dim(&self) -> usize;
    fn mstep_stat_into(&self, x: &Self::Datum, out: &mut [f64]);

    /// Exact maximizer of the complete-data log-likelihood given accumulated
    /// sufficient statistics, when the model has one.
    fn closed_form_mstep(&self, _stats: &SuffStats) -> Option<Result<Self::Theta>> {
        None
    }

    /// `sum_j sum_i log p(x_i^(j) | theta)` reconstructed from accumulated
    /// sufficient statistics (exact up to a theta-independent constant).
    fn loglik_from_stats(&self, stats: &SuffStats, theta: &Self::Theta) -> f64;
}

#[cfg(test)]
pub(crate) mod testkit {
    use super::Model;

    /// Central finite-difference gradient of the unconstrained log datum
    /// density; panics if the analytic gradient is unavailable.
    pub fn fd_gradient<M: Model>(model: &M, x: &M::Datum, theta: &M::Theta, h: f64) -> Vec<f64> {
        let phi = model.theta_to_unconstrained(theta);
        (0..phi.len())
            .map(|j| {
                let mut hi = phi.clone();
                let mut lo = phi.clone();
                hi[j] += h;
                lo[j] -= h;
                let fhi = model.log_datum_density(x, &model.theta_from_unconstrained(&hi));
                let flo = model.log_datum_density(x, &model.theta_from_unconstrained(&lo));
                (fhi - flo) / (2.0 * h)
            })
            .collect()
    }

    /// Asserts analytic and finite-difference gradients agree to relative
    /// tolerance at the given point.
    pub fn check_gradient<M: Model>(model: &M, x: &M::Datum, theta: &M::Theta, rel_tol: f64) {
        let analytic = model
            .grad_log_datum_unconstrained(x, theta)
            .expect("model must provide gradients");
        let numeric = fd_gradient(model, x, theta, 1e-5);
        for (j, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let denom = 1.0f64.max(a.abs()).max(n.abs());
            assert!(
                (a - n).abs() / denom < rel_tol,
                "gradient mismatch at component {j}: analytic {a}, numeric {n}"
            );
        }
    }

    /// Geweke-style successive-conditional check: the marginal stream draws
    /// `(theta, x)` from the prior predictive; the successive stream
    /// alternates the model's theta update with a full data redraw. Both
    /// target the same joint law when the theta update is invariant. Returns
    /// the z-score for a scalar summary.
    pub fn geweke_z<M: Model, F>(
        model: &M,
        n_records: usize,
        iters: usize,
        summary: F,
        seed: u64,
    ) -> f64
    where
        F: Fn(&M, &M::Theta, &[M::Datum]) -> f64,
    {
        use crate::util::{mc_standard_error, mean};
        let mut rng = crate::rng::seeded_rng(seed);
        let marginal: Vec<f64> = (0..iters)
            .map(|_| {
                let theta = model.sample_prior(&mut rng);
                let data: Vec<M::Datum> =
                    (0..n_records).map(|_| model.sample_datum(&theta, &mut rng)).collect();
                summary(model, &theta, &data)
            })
            .collect();

        let mut rng = crate::rng::seeded_rng(seed ^ 0x5eed);
        let mut theta = model.sample_prior(&mut rng);
        let mut data: Vec<M::Datum> =
            (0..n_records).map(|_| model.sample_datum(&theta, &mut rng)).collect();
        let mut successive = Vec::with_capacity(iters);
        for _ in 0..iters {
            theta = model.update_theta(&theta, &data, &mut rng).unwrap();
            for d in data.iter_mut() {
                *d = model.sample_datum(&theta, &mut rng);
            }
            successive.push(summary(model, &theta, &data));
        }

        let (m1, m2) = (mean(&marginal), mean(&successive));
        let (s1, s2) = (mc_standard_error(&marginal), mc_standard_error(&successive));
        (m1 - m2) / (s1 * s1 + s2 * s2).sqrt()
    }
}
