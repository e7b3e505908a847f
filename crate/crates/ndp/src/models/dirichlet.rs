//! Dirichlet compositional model for three-part proportions, with iid
//! Gamma priors on the concentration parameters. The released summary is the
//! coordinatewise sum of floor-clamped log-compositions plus Laplace noise
//! with scale `3 |log a| / eps_s`.
//!
//! The concentration update is a componentwise Gaussian random walk on
//! `log alpha` (one full sweep per call), which leaves the conditional
//! posterior invariant; there is no conjugate draw for this model.

use super::{Model, SuffStats, ThetaUpdateKind};
use crate::error::{NdpError, Result};
use crate::mechanisms::{dirichlet_record_statistic_into, NoiseFamily};
use crate::rng::{uniform_open, ChainRng};
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::{digamma, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletParams {
    pub alpha: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct DirichletModel {
    prior_shape: f64,
    prior_rate: f64,
    floor_a: f64,
    epsilon_s: f64,
    noise_scale: f64,
    rw_step: f64,
}

impl DirichletModel {
    pub fn new(
        prior_shape: f64,
        prior_rate: f64,
        floor_a: f64,
        epsilon_s: f64,
        rw_step: f64,
    ) -> Result<Self> {
        if !(prior_shape > 0.0 && prior_rate > 0.0) {
            return Err(NdpError::InvalidInput("Gamma prior needs positive shape and rate".into()));
        }
        if !(floor_a > 0.0 && floor_a < 1.0) {
            return Err(NdpError::InvalidFloor(floor_a));
        }
        if !(epsilon_s > 0.0) {
            return Err(NdpError::InvalidBudget(format!("epsilon_s = {epsilon_s}")));
        }
        if rw_step < 0.0 {
            return Err(NdpError::InvalidInput("random-walk step must be non-negative".into()));
        }
        let noise_scale =
            if epsilon_s.is_infinite() { 0.0 } else { -3.0 * floor_a.ln() / epsilon_s };
        Ok(Self { prior_shape, prior_rate, floor_a, epsilon_s, noise_scale, rw_step })
    }

    pub fn floor_a(&self) -> f64 {
        self.floor_a
    }

    pub fn epsilon_s(&self) -> f64 {
        self.epsilon_s
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// log p(alpha) + log p(x | alpha) given the log-composition sums
    /// `slog_j = sum_i log x_{ij}` over `n` records.
    fn log_target(&self, alpha: &[f64; 3], slog: &[f64; 3], n: usize) -> f64 {
        let a0: f64 = alpha.iter().sum();
        let mut out = 0.0;
        for j in 0..3 {
            out += (self.prior_shape - 1.0) * alpha[j].ln() - self.prior_rate * alpha[j];
            out += (alpha[j] - 1.0) * slog[j] - n as f64 * ln_gamma(alpha[j]);
        }
        out + n as f64 * ln_gamma(a0)
    }
}

impl Model for DirichletModel {
    type Theta = DirichletParams;
    type Datum = [f64; 3];

    fn name(&self) -> &'static str {
        "dirichlet"
    }

    fn summary_dim(&self) -> usize {
        3
    }

    fn summary_noise_family(&self) -> NoiseFamily {
        NoiseFamily::ContinuousLaplace
    }

    fn sample_prior(&self, rng: &mut ChainRng) -> DirichletParams {
        let g = Gamma::new(self.prior_shape, 1.0 / self.prior_rate).unwrap();
        DirichletParams { alpha: [g.sample(rng), g.sample(rng), g.sample(rng)] }
    }

    fn sample_datum(&self, theta: &DirichletParams, rng: &mut ChainRng) -> [f64; 3] {
        let mut g = [0.0; 3];
        for j in 0..3 {
            g[j] = Gamma::new(theta.alpha[j], 1.0).unwrap().sample(rng).max(1e-300);
        }
        let total: f64 = g.iter().sum();
        [g[0] / total, g[1] / total, g[2] / total]
    }

    fn log_datum_density(&self, x: &[f64; 3], theta: &DirichletParams) -> f64 {
        let a0: f64 = theta.alpha.iter().sum();
        let mut out = ln_gamma(a0);
        for j in 0..3 {
            out += (theta.alpha[j] - 1.0) * x[j].ln() - ln_gamma(theta.alpha[j]);
        }
        out
    }

    fn theta_update_kind(&self) -> ThetaUpdateKind {
        ThetaUpdateKind::InvariantKernel
    }

    fn update_theta(
        &self,
        current: &DirichletParams,
        data: &[[f64; 3]],
        rng: &mut ChainRng,
    ) -> Result<DirichletParams> {
        let n = data.len();
        let mut slog = [0.0f64; 3];
        for row in data {
            for j in 0..3 {
                slog[j] += row[j].ln();
            }
        }
        let mut alpha = current.alpha;
        let mut cur_target = self.log_target(&alpha, &slog, n);
        for j in 0..3 {
            let noise: f64 = StandardNormal.sample(rng);
            let proposed = alpha[j] * (self.rw_step * noise).exp();
            let mut cand = alpha;
            cand[j] = proposed;
            let cand_target = self.log_target(&cand, &slog, n);
            // random walk on log alpha: include the log-scale Jacobian
            let log_accept =
                cand_target - cur_target + proposed.ln() - alpha[j].ln();
            if !log_accept.is_nan() && uniform_open(rng).ln() < log_accept {
                alpha = cand;
                cur_target = cand_target;
            }
        }
        Ok(DirichletParams { alpha })
    }

    fn record_statistic_into(&self, _s: &[f64], x: &[f64; 3], out: &mut [f64]) {
        dirichlet_record_statistic_into(x, self.floor_a, out);
    }

    fn summary_loglik(&self, s: &[f64], t_x: &[f64]) -> f64 {
        let b = self.noise_scale;
        if b == 0.0 {
            let exact = s.iter().zip(t_x).all(|(a, c)| a == c);
            return if exact { 0.0 } else { f64::NEG_INFINITY };
        }
        let mut abs_sum = 0.0;
        for (a, c) in s.iter().zip(t_x) {
            abs_sum += (a - c).abs();
        }
        -3.0 * (2.0 * b).ln() - abs_sum / b
    }

    fn theta_names(&self) -> Vec<String> {
        vec!["alpha1".into(), "alpha2".into(), "alpha3".into()]
    }

    fn theta_to_vec(&self, theta: &DirichletParams) -> Vec<f64> {
        theta.alpha.to_vec()
    }

    fn unconstrained_dim(&self) -> usize {
        3
    }

    fn theta_to_unconstrained(&self, theta: &DirichletParams) -> Vec<f64> {
        theta.alpha.iter().map(|a| a.ln()).collect()
    }

    fn theta_from_unconstrained(&self, v: &[f64]) -> DirichletParams {
        DirichletParams { alpha: [v[0].exp(), v[1].exp(), v[2].exp()] }
    }

    fn grad_log_datum_unconstrained(
        &self,
        x: &[f64; 3],
        theta: &DirichletParams,
    ) -> Option<Vec<f64>> {
        let a0: f64 = theta.alpha.iter().sum();
        let d0 = digamma(a0);
        Some(
            (0..3)
                .map(|j| theta.alpha[j] * (d0 - digamma(theta.alpha[j]) + x[j].ln()))
                .collect(),
        )
    }

    fn mstep_stat_dim(&self) -> usize {
        3
    }

    fn mstep_stat_into(&self, x: &[f64; 3], out: &mut [f64]) {
        for j in 0..3 {
            out[j] = x[j].ln();
        }
    }

    fn loglik_from_stats(&self, stats: &SuffStats, theta: &DirichletParams) -> f64 {
        let n = stats.n_total as f64;
        let a0: f64 = theta.alpha.iter().sum();
        let mut out = n * ln_gamma(a0);
        for j in 0..3 {
            out += (theta.alpha[j] - 1.0) * stats.t_sum[j] - n * ln_gamma(theta.alpha[j]);
        }
        out
    }
}
