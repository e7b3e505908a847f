//! Privacy mechanisms: every source of randomness injected for privacy,
//! with log-densities, clamping and sensitivity calculators, and conversions
//! between DP frameworks.

mod convert;
mod noise;
mod privatize;

pub use convert::{dp_to_tv_delta, DpFramework};
pub use noise::{
    discrete_gaussian_log_norm, discrete_gaussian_log_pmf, discrete_gaussian_log_weight,
    discrete_laplace_log_pmf, kng_mean_sample, laplace_log_density, sample_discrete_gaussian,
    sample_discrete_laplace, sample_laplace, truncated_laplace_cdf, truncated_laplace_inv_cdf,
    truncation_half_width,
};
pub use privatize::{
    clamp_normalize, dirichlet_record_statistic, dirichlet_record_statistic_into,
    privatize_dirichlet_summaries, privatize_regression_summaries, regression_record_statistic,
    regression_record_statistic_into, regression_sensitivity, regression_summary_dim, ClampMap,
    MAX_COVARIATES,
};

use crate::error::{NdpError, Result};
use crate::rng::ChainRng;
use serde::{Deserialize, Serialize};

/// The noise families used by the mechanisms in this crate. The serialized
/// names appear verbatim in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    ContinuousLaplace,
    DiscreteLaplace,
    DiscreteGaussian,
    #[serde(rename = "kng")]
    TruncatedLaplaceKng,
}

impl NoiseFamily {
    /// Whether the family satisfies pure eps-DP (the hypothesis of the
    /// acceptance-probability floors). The discrete Gaussian does not.
    pub fn is_pure_dp(self) -> bool {
        !matches!(self, NoiseFamily::DiscreteGaussian)
    }

    pub fn is_discrete(self) -> bool {
        matches!(self, NoiseFamily::DiscreteLaplace | NoiseFamily::DiscreteGaussian)
    }
}

/// Privacy budgets for the summary release and the sample-size release.
/// `epsilon_n = inf` means `n` is released exactly (bounded DP).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon_s: f64,
    pub epsilon_n: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon_s: f64, epsilon_n: f64) -> Result<Self> {
        if !(epsilon_s > 0.0) || epsilon_s.is_nan() {
            return Err(NdpError::InvalidBudget(format!("epsilon_s = {epsilon_s}")));
        }
        if !(epsilon_n > 0.0) || epsilon_n.is_nan() {
            return Err(NdpError::InvalidBudget(format!("epsilon_n = {epsilon_n}")));
        }
        Ok(Self { epsilon_s, epsilon_n })
    }

    pub fn bounded_dp(&self) -> bool {
        self.epsilon_n.is_infinite()
    }
}

/// Description of an additive noise mechanism: family, scale, and the
/// sensitivity it was calibrated for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub scale: f64,
    pub sensitivity: f64,
}

impl NoiseSpec {
    /// Calibrates `scale = sensitivity / epsilon` for the Laplace families.
    /// An infinite epsilon gives scale 0, the degenerate no-noise release.
    pub fn from_sensitivity_epsilon(
        family: NoiseFamily,
        sensitivity: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(sensitivity > 0.0) {
            return Err(NdpError::InvalidInput(format!("sensitivity = {sensitivity}")));
        }
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(NdpError::InvalidBudget(format!("epsilon = {epsilon}")));
        }
        let scale = if epsilon.is_infinite() { 0.0 } else { sensitivity / epsilon };
        Ok(Self { family, scale, sensitivity })
    }

    /// The noise rate `sensitivity/scale` in the exponent of the discrete
    /// families; infinite for the degenerate scale-0 release.
    fn rate(&self) -> f64 {
        if self.scale == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.scale
        }
    }

    /// Log-density (or log-pmf) of the additive noise at offset `z`.
    /// Scale 0 is a point mass at 0. Not defined for KNG, which is not an
    /// additive mechanism.
    pub fn log_density(&self, z: f64) -> f64 {
        if self.scale == 0.0 {
            return if z == 0.0 { 0.0 } else { f64::NEG_INFINITY };
        }
        match self.family {
            NoiseFamily::ContinuousLaplace => laplace_log_density(z, self.scale),
            NoiseFamily::DiscreteLaplace => {
                debug_assert!(z.fract() == 0.0, "discrete noise needs an integer offset");
                discrete_laplace_log_pmf(z as i64, self.rate())
            }
            NoiseFamily::DiscreteGaussian => {
                debug_assert!(z.fract() == 0.0, "discrete noise needs an integer offset");
                discrete_gaussian_log_pmf(z as i64, self.rate())
            }
            NoiseFamily::TruncatedLaplaceKng => {
                unreachable!("KNG is not an additive noise family")
            }
        }
    }

    /// Draws one additive noise value.
    pub fn sample(&self, rng: &mut ChainRng) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        match self.family {
            NoiseFamily::ContinuousLaplace => sample_laplace(self.scale, rng),
            NoiseFamily::DiscreteLaplace => sample_discrete_laplace(self.rate(), rng) as f64,
            NoiseFamily::DiscreteGaussian => sample_discrete_gaussian(self.rate(), rng) as f64,
            NoiseFamily::TruncatedLaplaceKng => {
                unreachable!("KNG is not an additive noise family")
            }
        }
    }
}

/// The privatized sample size: continuous mechanisms release a real,
/// discrete mechanisms an integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NdpValue {
    Continuous(f64),
    Discrete(i64),
}

impl NdpValue {
    pub fn as_f64(&self) -> f64 {
        match *self {
            NdpValue::Continuous(x) => x,
            NdpValue::Discrete(k) => k as f64,
        }
    }
}

/// A released pair: the noisy summary vector and the noisy sample size,
/// generated by conditionally independent mechanisms given `(x, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSummary {
    pub s: Vec<f64>,
    pub n_dp: NdpValue,
}

/// The mechanism `eta(n_dp | n)` releasing the sample size. `Exact` is the
/// `epsilon_n = inf` limit where `n` is released without noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountMechanism {
    Exact,
    ContinuousLaplace { epsilon: f64 },
    DiscreteLaplace { epsilon: f64 },
    DiscreteGaussian { epsilon: f64 },
}

impl CountMechanism {
    pub fn new(family: NoiseFamily, epsilon: f64) -> Result<Self> {
        if epsilon.is_infinite() && epsilon > 0.0 {
            return Ok(CountMechanism::Exact);
        }
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(NdpError::InvalidBudget(format!("epsilon_n = {epsilon}")));
        }
        match family {
            NoiseFamily::ContinuousLaplace => Ok(CountMechanism::ContinuousLaplace { epsilon }),
            NoiseFamily::DiscreteLaplace => Ok(CountMechanism::DiscreteLaplace { epsilon }),
            NoiseFamily::DiscreteGaussian => Ok(CountMechanism::DiscreteGaussian { epsilon }),
            NoiseFamily::TruncatedLaplaceKng => Err(NdpError::Unsupported(
                "KNG is a mean mechanism, not a count mechanism".into(),
            )),
        }
    }

    pub fn epsilon(&self) -> f64 {
        match *self {
            CountMechanism::Exact => f64::INFINITY,
            CountMechanism::ContinuousLaplace { epsilon }
            | CountMechanism::DiscreteLaplace { epsilon }
            | CountMechanism::DiscreteGaussian { epsilon } => epsilon,
        }
    }

    pub fn family(&self) -> Option<NoiseFamily> {
        match *self {
            CountMechanism::Exact => None,
            CountMechanism::ContinuousLaplace { .. } => Some(NoiseFamily::ContinuousLaplace),
            CountMechanism::DiscreteLaplace { .. } => Some(NoiseFamily::DiscreteLaplace),
            CountMechanism::DiscreteGaussian { .. } => Some(NoiseFamily::DiscreteGaussian),
        }
    }

    /// Whether the acceptance-floor hypothesis (pure eps-DP) holds. The exact
    /// release is the `epsilon_n = inf` limit, for which the floor is zero.
    pub fn is_pure_dp(&self) -> bool {
        self.family().map_or(true, NoiseFamily::is_pure_dp)
    }

    /// Releases `n_dp` given the true count. Sensitivity of `n` under
    /// add/delete adjacency is 1.
    pub fn sample(&self, n: u64, rng: &mut ChainRng) -> NdpValue {
        match *self {
            CountMechanism::Exact => NdpValue::Discrete(n as i64),
            CountMechanism::ContinuousLaplace { epsilon } => {
                NdpValue::Continuous(n as f64 + sample_laplace(1.0 / epsilon, rng))
            }
            CountMechanism::DiscreteLaplace { epsilon } => {
                NdpValue::Discrete(n as i64 + sample_discrete_laplace(epsilon, rng))
            }
            CountMechanism::DiscreteGaussian { epsilon } => {
                NdpValue::Discrete(n as i64 + sample_discrete_gaussian(epsilon, rng))
            }
        }
    }

    /// `log eta(n_dp | n)`. Continuous releases are evaluated with the
    /// continuous density at `n_dp - n`; they are never rounded.
    pub fn log_density(&self, n_dp: &NdpValue, n: u64) -> f64 {
        let diff = n_dp.as_f64() - n as f64;
        match *self {
            CountMechanism::Exact => {
                if diff == 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            CountMechanism::ContinuousLaplace { epsilon } => {
                laplace_log_density(diff, 1.0 / epsilon)
            }
            CountMechanism::DiscreteLaplace { epsilon } => {
                debug_assert!(diff.fract() == 0.0, "discrete mechanism saw non-integer n_dp");
                discrete_laplace_log_pmf(diff as i64, epsilon)
            }
            CountMechanism::DiscreteGaussian { epsilon } => {
                debug_assert!(diff.fract() == 0.0, "discrete mechanism saw non-integer n_dp");
                discrete_gaussian_log_pmf(diff as i64, epsilon)
            }
        }
    }
}

/// One-shot release of a privatized count.
pub fn privatize_count(
    n: u64,
    epsilon_n: f64,
    family: NoiseFamily,
    rng: &mut ChainRng,
) -> Result<NdpValue> {
    if n == 0 {
        return Err(NdpError::InvalidInput("count must be at least 1".into()));
    }
    Ok(CountMechanism::new(family, epsilon_n)?.sample(n, rng))
}

/// Max over outputs `k` in the `±ceil(40/eps)` window of
/// `|log pmf(k|n) - log pmf(k|n+1)|` for a count mechanism: the realized
/// privacy-loss audit for adjacent inputs.
pub fn count_ratio_audit(family: NoiseFamily, epsilon: f64, n: u64) -> Result<f64> {
    let mech = CountMechanism::new(family, epsilon)?;
    if matches!(mech, CountMechanism::Exact) {
        return Err(NdpError::InvalidBudget("ratio audit needs finite epsilon".into()));
    }
    let w = truncation_half_width(epsilon) as i64;
    let center = n as i64;
    let mut worst = 0.0f64;
    for k in (center - w)..=(center + w + 1) {
        let (a, b) = match mech {
            CountMechanism::ContinuousLaplace { .. } => {
                let v = NdpValue::Continuous(k as f64);
                (mech.log_density(&v, n), mech.log_density(&v, n + 1))
            }
            _ => {
                let v = NdpValue::Discrete(k);
                (mech.log_density(&v, n), mech.log_density(&v, n + 1))
            }
        };
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn noise_spec_reproduces_scale_from_sensitivity_and_epsilon() {
        let spec =
            NoiseSpec::from_sensitivity_epsilon(NoiseFamily::ContinuousLaplace, 9.0, 1.0).unwrap();
        assert_eq!(spec.scale, 9.0);
        let spec =
            NoiseSpec::from_sensitivity_epsilon(NoiseFamily::DiscreteLaplace, 1.0, 0.25).unwrap();
        assert_eq!(spec.scale, 4.0);
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(1.0, f64::INFINITY).unwrap().bounded_dp());
        assert!(PrivacyBudget::new(0.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, -1.0).is_err());
    }

    #[test]
    fn family_names_serialize_verbatim() {
        let json = serde_json::to_string(&NoiseFamily::TruncatedLaplaceKng).unwrap();
        assert_eq!(json, "\"kng\"");
        let json = serde_json::to_string(&NoiseFamily::ContinuousLaplace).unwrap();
        assert_eq!(json, "\"continuous_laplace\"");
        let back: NoiseFamily = serde_json::from_str("\"discrete_gaussian\"").unwrap();
        assert_eq!(back, NoiseFamily::DiscreteGaussian);
    }

    #[test]
    fn infinite_budget_releases_n_exactly() {
        let mut rng = seeded_rng(9);
        let v = privatize_count(17, f64::INFINITY, NoiseFamily::ContinuousLaplace, &mut rng)
            .unwrap();
        assert_eq!(v, NdpValue::Discrete(17));
    }

    #[test]
    fn continuous_laplace_count_is_median_centered() {
        let mut rng = seeded_rng(10);
        let n = 40u64;
        let draws: Vec<f64> = (0..40_001)
            .map(|_| {
                privatize_count(n, 1.0, NoiseFamily::ContinuousLaplace, &mut rng)
                    .unwrap()
                    .as_f64()
            })
            .collect();
        let mut sorted = draws;
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        assert!((median - n as f64).abs() < 0.1, "median={median}");
    }

    #[test]
    fn discrete_laplace_ratio_audit_is_tight() {
        for &eps in &[0.5, 1.0, 2.0] {
            let worst = count_ratio_audit(NoiseFamily::DiscreteLaplace, eps, 30).unwrap();
            assert!(worst <= eps + 1e-9, "eps={eps} worst={worst}");
            assert!(worst >= eps - 1e-9, "supremum should be attained, worst={worst}");
        }
    }

    #[test]
    fn continuous_laplace_ratio_audit_within_budget() {
        let worst = count_ratio_audit(NoiseFamily::ContinuousLaplace, 0.7, 30).unwrap();
        assert!(worst <= 0.7 + 1e-9, "worst={worst}");
    }

    #[test]
    fn count_log_density_matches_between_families() {
        let mech = CountMechanism::new(NoiseFamily::DiscreteLaplace, 1.0).unwrap();
        let v = NdpValue::Discrete(12);
        assert!(
            (mech.log_density(&v, 10) - discrete_laplace_log_pmf(2, 1.0)).abs() < 1e-15
        );
        let exact = CountMechanism::Exact;
        assert_eq!(exact.log_density(&NdpValue::Discrete(5), 5), 0.0);
        assert_eq!(exact.log_density(&NdpValue::Discrete(6), 5), f64::NEG_INFINITY);
    }

    #[test]
    fn seed_determinism_of_samplers() {
        let run = |seed: u64| -> Vec<f64> {
            let mut rng = seeded_rng(seed);
            let mut out = Vec::new();
            out.push(sample_laplace(2.0, &mut rng));
            out.push(sample_discrete_laplace(0.7, &mut rng) as f64);
            out.push(sample_discrete_gaussian(1.3, &mut rng) as f64);
            out.push(kng_mean_sample(0.4, 100, 1.0, &mut rng).unwrap());
            out
        };
        assert_eq!(run(99), run(99));
        assert_ne!(run(99), run(100));
    }
}
