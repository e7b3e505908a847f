//! Bernoulli toy model: Beta prior on the success probability, sum statistic
//! `s = sum_i x_i + noise`. Small enough that its posterior can be
//! enumerated exactly, which makes it the reference instance for validating
//! the samplers.

use super::{Model, SuffStats, ThetaUpdateKind};
use crate::error::{NdpError, Result};
use crate::mechanisms::{NoiseFamily, NoiseSpec};
use crate::rng::ChainRng;
use rand::Rng;
use rand_distr::{Beta, Distribution};

#[derive(Debug, Clone)]
pub struct BernoulliModel {
    prior_a: f64,
    prior_b: f64,
    noise: NoiseSpec,
}

impl BernoulliModel {
    /// `noise` is the additive mechanism on the sum statistic, which has
    /// unit sensitivity under add/delete adjacency.
    pub fn new(prior_a: f64, prior_b: f64, noise: NoiseSpec) -> Result<Self> {
        if !(prior_a > 0.0 && prior_b > 0.0) {
            return Err(NdpError::InvalidInput(format!(
                "Beta prior needs positive shapes, got ({prior_a}, {prior_b})"
            )));
        }
        Ok(Self { prior_a, prior_b, noise })
    }

    pub fn with_epsilon(
        prior_a: f64,
        prior_b: f64,
        family: NoiseFamily,
        epsilon_s: f64,
    ) -> Result<Self> {
        let noise = NoiseSpec::from_sensitivity_epsilon(family, 1.0, epsilon_s)?;
        Self::new(prior_a, prior_b, noise)
    }

    pub fn prior(&self) -> (f64, f64) {
        (self.prior_a, self.prior_b)
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    /// Releases the summary for a dataset: the sum plus one noise draw.
    pub fn privatize(&self, data: &[u8], rng: &mut ChainRng) -> Vec<f64> {
        let total: u64 = data.iter().map(|&x| x as u64).sum();
        vec![total as f64 + self.noise.sample(rng)]
    }
}

impl Model for BernoulliModel {
    type Theta = f64;
    type Datum = u8;

    fn name(&self) -> &'static str {
        "bernoulli"
    }

    fn summary_dim(&self) -> usize {
        1
    }

    fn summary_noise_family(&self) -> NoiseFamily {
        self.noise.family
    }

    fn sample_prior(&self, rng: &mut ChainRng) -> f64 {
        Beta::new(self.prior_a, self.prior_b).unwrap().sample(rng)
    }

    fn sample_datum(&self, theta: &f64, rng: &mut ChainRng) -> u8 {
        u8::from(rng.random::<f64>() < *theta)
    }

    fn log_datum_density(&self, x: &u8, theta: &f64) -> f64 {
        if *x == 1 {
            theta.ln()
        } else {
            (1.0 - theta).ln()
        }
    }

    fn theta_update_kind(&self) -> ThetaUpdateKind {
        ThetaUpdateKind::ExactConditional
    }

    fn update_theta(&self, _current: &f64, data: &[u8], rng: &mut ChainRng) -> Result<f64> {
        let k: u64 = data.iter().map(|&x| x as u64).sum();
        let n = data.len() as u64;
        let beta = Beta::new(self.prior_a + k as f64, self.prior_b + (n - k) as f64)
            .map_err(|e| NdpError::NumericBreakdown(format!("Beta draw: {e}")))?;
        Ok(beta.sample(rng))
    }

    fn record_statistic_into(&self, _s: &[f64], x: &u8, out: &mut [f64]) {
        out[0] = *x as f64;
    }

    fn summary_loglik(&self, s: &[f64], t_x: &[f64]) -> f64 {
        self.noise.log_density(s[0] - t_x[0])
    }

    fn theta_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }

    fn theta_to_vec(&self, theta: &f64) -> Vec<f64> {
        vec![*theta]
    }

    fn unconstrained_dim(&self) -> usize {
        1
    }

    fn theta_to_unconstrained(&self, theta: &f64) -> Vec<f64> {
        vec![(theta / (1.0 - theta)).ln()]
    }

    fn theta_from_unconstrained(&self, v: &[f64]) -> f64 {
        1.0 / (1.0 + (-v[0]).exp())
    }

    fn grad_log_datum_unconstrained(&self, x: &u8, theta: &f64) -> Option<Vec<f64>> {
        // d/dphi log p(x | logistic(phi)) = x - theta
        Some(vec![*x as f64 - theta])
    }

    fn mstep_stat_dim(&self) -> usize {
        1
    }

    fn mstep_stat_into(&self, x: &u8, out: &mut [f64]) {
        out[0] = *x as f64;
    }

    fn closed_form_mstep(&self, stats: &SuffStats) -> Option<Result<f64>> {
        if stats.n_total == 0 {
            return Some(Err(NdpError::NumericBreakdown("no records in M-step".into())));
        }
        let p = stats.t_sum[0] / stats.n_total as f64;
        Some(Ok(p.clamp(1e-12, 1.0 - 1e-12)))
    }

    fn loglik_from_stats(&self, stats: &SuffStats, theta: &f64) -> f64 {
        let k = stats.t_sum[0];
        let n = stats.n_total as f64;
        k * theta.ln() + (n - k) * (1.0 - theta).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testkit;
    use crate::rng::seeded_rng;
    use crate::util::mean;

    fn toy(eps: f64) -> BernoulliModel {
        BernoulliModel::with_epsilon(1.0, 1.0, NoiseFamily::DiscreteLaplace, eps).unwrap()
    }

    #[test]
    fn record_statistic_sums() {
        let m = toy(1.0);
        let data = [1u8, 0, 1];
        let t: f64 = data.iter().map(|x| m.record_statistic(&[0.0], x)[0]).sum();
        assert_eq!(t, 2.0);
    }

    #[test]
    fn degenerate_mechanism_is_a_point_mass() {
        let noise = NoiseSpec { family: NoiseFamily::DiscreteLaplace, scale: 0.0, sensitivity: 1.0 };
        let m = BernoulliModel::new(1.0, 1.0, noise).unwrap();
        assert_eq!(m.summary_loglik(&[2.0], &[2.0]), 0.0);
        assert_eq!(m.summary_loglik(&[2.0], &[1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn posterior_update_matches_conjugacy() {
        // a = b = 1, x = (1, 1): posterior Beta(3, 1), mean 0.75
        let m = toy(1.0);
        let mut rng = seeded_rng(21);
        let draws: Vec<f64> = (0..200_000)
            .map(|_| m.update_theta(&0.5, &[1, 1], &mut rng).unwrap())
            .collect();
        let mu = mean(&draws);
        let se = (crate::util::variance(&draws) / draws.len() as f64).sqrt();
        assert!((mu - 0.75).abs() < 4.0 * se, "mean={mu}");
    }

    #[test]
    fn a3_consistency_on_random_small_datasets() {
        // g(s, sum_i t_i) must equal the mechanism's log-density computed
        // directly from the raw dataset.
        let m = toy(0.7);
        let mut rng = seeded_rng(22);
        for _ in 0..100 {
            let n = 1 + (rand::Rng::random::<u64>(&mut rng) % 6) as usize;
            let theta = 0.3;
            let data: Vec<u8> = (0..n).map(|_| m.sample_datum(&theta, &mut rng)).collect();
            let s = m.privatize(&data, &mut rng);
            let t: f64 = data.iter().map(|&x| x as f64).sum();
            // direct path: discrete Laplace pmf at s - sum(x), rate eps
            let direct = crate::mechanisms::discrete_laplace_log_pmf((s[0] - t) as i64, 0.7);
            let via_t = m.summary_loglik(&s, &[t]);
            assert!((direct - via_t).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = toy(1.0);
        let mut rng = seeded_rng(23);
        for _ in 0..50 {
            let theta = 0.05 + 0.9 * rand::Rng::random::<f64>(&mut rng);
            let x = m.sample_datum(&theta, &mut rng);
            testkit::check_gradient(&m, &x, &theta, 1e-5);
        }
    }

    #[test]
    fn prior_predictive_round_trip_is_stationary() {
        let m = toy(1.0);
        let z = testkit::geweke_z(
            &m,
            6,
            20_000,
            |_, theta, data| theta + data.iter().map(|&x| x as f64).sum::<f64>(),
            31,
        );
        assert!(z.abs() < 4.0, "Geweke z = {z}");
    }

    #[test]
    fn closed_form_mstep_is_the_sample_proportion() {
        let m = toy(1.0);
        let stats = SuffStats { t_sum: vec![7.0], n_total: 10, num_samples: 2 };
        let p = m.closed_form_mstep(&stats).unwrap().unwrap();
        assert!((p - 0.7).abs() < 1e-12);
    }
}
