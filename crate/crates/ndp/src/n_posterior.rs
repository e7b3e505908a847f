//! The posterior over the true sample size `n` given its privatized release,
//! under a flat prior, together with the closed-form expectation bounds and
//! the mixture log-likelihood that defines the unbounded-DP MLE objective.

use crate::error::{NdpError, Result};
use crate::mechanisms::{truncation_half_width, CountMechanism, NdpValue, NoiseFamily};
use crate::rng::{uniform_open, ChainRng};
use crate::util::log_sum_exp;

/// Prior on the unknown sample size. The unbounded variant is realized as a
/// flat prior over `[1, N_max]` with
/// `N_max = max(2 ceil(max(n_dp, 1)), ceil(n_dp) + ceil(40/eps_n))`,
/// wide enough that all excluded tail mass is below 1e-12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NPrior {
    FlatUnbounded,
    FlatRange(u64),
}

/// Default cap on the number of supported states in `build_n_posterior`.
pub const DEFAULT_WINDOW_CAP: u64 = 5_000_000;

/// A normalized posterior over an integer interval of sample sizes.
#[derive(Debug, Clone)]
pub struct NPosterior {
    n_lo: u64,
    log_probs: Vec<f64>,
}

impl NPosterior {
    /// Inclusive support `[n_lo, n_hi]`.
    pub fn support(&self) -> (u64, u64) {
        (self.n_lo, self.n_lo + self.log_probs.len() as u64 - 1)
    }

    pub fn log_prob(&self, n: u64) -> f64 {
        if n < self.n_lo {
            return f64::NEG_INFINITY;
        }
        let idx = (n - self.n_lo) as usize;
        self.log_probs.get(idx).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn prob(&self, n: u64) -> f64 {
        self.log_prob(n).exp()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.log_probs
            .iter()
            .enumerate()
            .map(|(i, lp)| (self.n_lo + i as u64, lp.exp()))
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(n, p)| n as f64 * p).sum()
    }

    /// Exact `E|n - n_0|` under the posterior.
    pub fn expected_abs_deviation(&self, n0: u64) -> f64 {
        self.iter()
            .map(|(n, p)| (n as f64 - n0 as f64).abs() * p)
            .sum()
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut ChainRng) -> u64 {
        let u = uniform_open(rng);
        let mut acc = 0.0;
        for (n, p) in self.iter() {
            acc += p;
            if acc >= u {
                return n;
            }
        }
        self.support().1
    }
}

/// Builds `p(n | n_dp)` with weights proportional to `eta(n_dp | n)` over the
/// flat prior, truncated to `n >= 1`.
pub fn build_n_posterior(
    n_dp: &NdpValue,
    mech: &CountMechanism,
    prior: NPrior,
) -> Result<NPosterior> {
    build_n_posterior_capped(n_dp, mech, prior, DEFAULT_WINDOW_CAP)
}

pub fn build_n_posterior_capped(
    n_dp: &NdpValue,
    mech: &CountMechanism,
    prior: NPrior,
    cap: u64,
) -> Result<NPosterior> {
    let ndp = n_dp.as_f64();
    if let CountMechanism::Exact = mech {
        let n = (ndp.round().max(1.0)) as u64;
        return Ok(NPosterior { n_lo: n, log_probs: vec![0.0] });
    }
    let half = truncation_half_width(mech.epsilon());
    let center_hi = ndp.max(1.0).ceil() as u64;
    let prior_max = match prior {
        NPrior::FlatUnbounded => (2 * center_hi).max(center_hi + half),
        NPrior::FlatRange(n_max) => {
            if n_max == 0 {
                return Err(NdpError::InvalidInput("flat range prior needs N_max >= 1".into()));
            }
            n_max
        }
    };
    let n_lo = (ndp.floor() as i64 - half as i64).max(1) as u64;
    let n_lo = n_lo.min(prior_max);
    let n_hi = ((ndp.ceil() as i64 + half as i64).max(1) as u64).min(prior_max);
    let n_hi = n_hi.max(n_lo);
    let needed = n_hi - n_lo + 1;
    if needed > cap {
        return Err(NdpError::WindowOverflow { needed, cap });
    }
    let mut log_w: Vec<f64> = (n_lo..=n_hi).map(|n| mech.log_density(n_dp, n)).collect();
    let norm = log_sum_exp(&log_w);
    if !norm.is_finite() {
        return Err(NdpError::NumericBreakdown(format!(
            "n-posterior weights vanished for n_dp = {ndp}"
        )));
    }
    for lw in log_w.iter_mut() {
        *lw -= norm;
    }
    Ok(NPosterior { n_lo, log_probs: log_w })
}

/// The closed-form bounds on `E|n - n_0|`: `2/(e^eps - 1)` for the discrete
/// Laplace posterior family and `2/eps` for the discrete Gaussian one.
pub fn lemma_a12_bound(family: NoiseFamily, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(NdpError::InvalidBudget(format!("eps = {eps}")));
    }
    match family {
        NoiseFamily::DiscreteLaplace => Ok(2.0 / eps.exp_m1()),
        NoiseFamily::DiscreteGaussian => Ok(2.0 / eps),
        other => Err(NdpError::Unsupported(format!(
            "no closed-form deviation bound for {other:?}"
        ))),
    }
}

/// `log sum_k p(n = k | n_dp) exp(loglik(k))` via log-sum-exp: the mixture
/// log-likelihood of the unbounded-DP objective.
pub fn mixture_loglik<F: FnMut(u64) -> f64>(post: &NPosterior, mut per_n: F) -> Result<f64> {
    let (lo, hi) = post.support();
    let terms: Vec<f64> = (lo..=hi).map(|n| post.log_prob(n) + per_n(n)).collect();
    let out = log_sum_exp(&terms);
    if out == f64::NEG_INFINITY {
        return Err(NdpError::DegenerateLikelihood);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::discrete_laplace_log_pmf;

    fn dl(eps: f64) -> CountMechanism {
        CountMechanism::new(NoiseFamily::DiscreteLaplace, eps).unwrap()
    }

    fn dg(eps: f64) -> CountMechanism {
        CountMechanism::new(NoiseFamily::DiscreteGaussian, eps).unwrap()
    }

    #[test]
    fn large_budget_gives_point_mass() {
        let post =
            build_n_posterior(&NdpValue::Discrete(10), &dl(35.0), NPrior::FlatUnbounded).unwrap();
        assert!(post.prob(10) > 1.0 - 1e-10);
        assert!(post.expected_abs_deviation(10) < 1e-10);
    }

    #[test]
    fn exact_mechanism_is_a_point_mass() {
        let post = build_n_posterior(
            &NdpValue::Discrete(7),
            &CountMechanism::Exact,
            NPrior::FlatUnbounded,
        )
        .unwrap();
        assert_eq!(post.support(), (7, 7));
        assert_eq!(post.prob(7), 1.0);
    }

    #[test]
    fn boundary_truncation_puts_mode_at_one() {
        let post = build_n_posterior(
            &NdpValue::Continuous(0.3),
            &CountMechanism::new(NoiseFamily::ContinuousLaplace, 1.0).unwrap(),
            NPrior::FlatUnbounded,
        )
        .unwrap();
        let (lo, hi) = post.support();
        assert_eq!(lo, 1);
        let mode = (lo..=hi).max_by(|&a, &b| post.prob(a).total_cmp(&post.prob(b))).unwrap();
        assert_eq!(mode, 1);
    }

    #[test]
    fn probabilities_normalize() {
        for mech in [dl(0.5), dg(0.7)] {
            let post =
                build_n_posterior(&NdpValue::Discrete(50), &mech, NPrior::FlatUnbounded).unwrap();
            let total: f64 = post.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-10, "total={total}");
        }
    }

    #[test]
    fn symmetric_away_from_boundary() {
        let n0 = 200u64;
        let post = build_n_posterior(&NdpValue::Discrete(n0 as i64), &dl(1.0), NPrior::FlatUnbounded)
            .unwrap();
        for k in 1..=10u64 {
            let (a, b) = (post.prob(n0 + k), post.prob(n0 - k));
            assert!((a - b).abs() < 1e-15, "k={k}");
        }
        // restricted to the interior, p(n | n_dp = n0) recovers eta(n | n0)
        for k in 0..=5i64 {
            let lhs = post.log_prob((n0 as i64 + k) as u64);
            let rhs = discrete_laplace_log_pmf(k, 1.0);
            assert!((lhs - rhs).abs() < 1e-9, "k={k} lhs={lhs} rhs={rhs}");
        }
    }

    #[test]
    fn deviation_respects_lemma_bounds() {
        for &eps in &[0.5, 1.0, 2.0] {
            let bound_dl = lemma_a12_bound(NoiseFamily::DiscreteLaplace, eps).unwrap();
            let bound_dg = lemma_a12_bound(NoiseFamily::DiscreteGaussian, eps).unwrap();
            for n0 in (50..1050).step_by(50) {
                let ndp = NdpValue::Discrete(n0);
                let dev_dl = build_n_posterior(&ndp, &dl(eps), NPrior::FlatUnbounded)
                    .unwrap()
                    .expected_abs_deviation(n0 as u64);
                assert!(dev_dl <= bound_dl + 1e-9, "dl eps={eps} n0={n0}");
                let dev_dg = build_n_posterior(&ndp, &dg(eps), NPrior::FlatUnbounded)
                    .unwrap()
                    .expected_abs_deviation(n0 as u64);
                assert!(dev_dg <= bound_dg + 1e-9, "dg eps={eps} n0={n0}");
            }
        }
    }

    #[test]
    fn lemma_bound_reference_values_and_monotonicity() {
        let b = lemma_a12_bound(NoiseFamily::DiscreteLaplace, 2.0f64.ln()).unwrap();
        assert!((b - 2.0).abs() < 1e-12);
        let b = lemma_a12_bound(NoiseFamily::DiscreteGaussian, 4.0).unwrap();
        assert!((b - 0.5).abs() < 1e-15);
        for fam in [NoiseFamily::DiscreteLaplace, NoiseFamily::DiscreteGaussian] {
            let mut last = f64::INFINITY;
            let mut eps = 0.5;
            while eps <= 8.0 {
                let b = lemma_a12_bound(fam, eps).unwrap();
                assert!(b < last, "{fam:?} not strictly decreasing at eps={eps}");
                last = b;
                eps += 0.25;
            }
        }
        assert!(lemma_a12_bound(NoiseFamily::ContinuousLaplace, 1.0).is_err());
    }

    #[test]
    fn deviation_stable_under_wider_window() {
        let ndp = NdpValue::Discrete(80);
        let narrow = build_n_posterior(&ndp, &dl(1.0), NPrior::FlatUnbounded).unwrap();
        let wide = build_n_posterior(&ndp, &dl(1.0), NPrior::FlatRange(100_000)).unwrap();
        let (a, b) = (narrow.expected_abs_deviation(80), wide.expected_abs_deviation(80));
        assert!((a - b).abs() < 1e-10, "narrow={a} wide={b}");
    }

    #[test]
    fn window_overflow_is_reported() {
        let err = build_n_posterior_capped(
            &NdpValue::Continuous(1000.0),
            &CountMechanism::new(NoiseFamily::ContinuousLaplace, 1e-4).unwrap(),
            NPrior::FlatUnbounded,
            1_000,
        )
        .unwrap_err();
        assert!(matches!(err, NdpError::WindowOverflow { .. }));
    }

    #[test]
    fn mixture_loglik_matches_direct_summation() {
        let post = build_n_posterior(&NdpValue::Discrete(12), &dl(0.8), NPrior::FlatUnbounded)
            .unwrap();
        let loglik = |n: u64| -> f64 { -0.1 * (n as f64 - 11.0).powi(2) };
        let got = mixture_loglik(&post, loglik).unwrap();
        let naive: f64 = post
            .iter()
            .map(|(n, p)| p * loglik(n).exp())
            .sum::<f64>()
            .ln();
        assert!((got - naive).abs() < 1e-10, "got={got} naive={naive}");
    }

    #[test]
    fn mixture_loglik_point_mass_and_degenerate_cases() {
        let point = build_n_posterior(
            &NdpValue::Discrete(5),
            &CountMechanism::Exact,
            NPrior::FlatUnbounded,
        )
        .unwrap();
        let v = mixture_loglik(&point, |n| if n == 5 { -1.25 } else { f64::NEG_INFINITY })
            .unwrap();
        assert!((v + 1.25).abs() < 1e-12);
        assert!(matches!(
            mixture_loglik(&point, |_| f64::NEG_INFINITY),
            Err(NdpError::DegenerateLikelihood)
        ));
    }

    #[test]
    fn sampling_matches_probabilities() {
        let post =
            build_n_posterior(&NdpValue::Discrete(20), &dl(1.2), NPrior::FlatUnbounded).unwrap();
        let mut rng = crate::rng::seeded_rng(17);
        let reps = 100_000;
        let mut hits = 0u64;
        for _ in 0..reps {
            if post.sample(&mut rng) == 20 {
                hits += 1;
            }
        }
        let expected = post.prob(20);
        let got = hits as f64 / reps as f64;
        let se = (expected * (1.0 - expected) / reps as f64).sqrt();
        assert!((got - expected).abs() < 5.0 * se, "got={got} expected={expected}");
    }
}
