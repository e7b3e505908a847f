//! Monte Carlo and exact verification of the distributional claims: the
//! standardized-summary convergence as the sample size grows, the coupling
//! bound on the joint law, the total-variation bound through (0, delta)-DP,
//! and the conditional-posterior (ABC-type) convergence as the count budget
//! grows.

use super::ks_distance_1d;
use crate::error::{NdpError, Result};
use crate::mechanisms::{
    discrete_gaussian_log_pmf, discrete_laplace_log_pmf, dp_to_tv_delta, kng_mean_sample,
    sample_laplace, truncation_half_width, CountMechanism, DpFramework, NdpValue, NoiseFamily,
};
use crate::n_posterior::{build_n_posterior, NPosterior, NPrior};
use crate::rng::{derive_seed, seeded_rng, ChainRng};
use crate::util::{kendall_tau, mean, variance};
use rand_distr::{Beta, Binomial, Distribution};

/// The scaling declaration of a summary mechanism: `n^b (n^{-a} s - g(theta))`
/// converges to a mean-zero limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A1Declaration {
    pub a: f64,
    pub b: f64,
}

/// Mean-release mechanisms for Bernoulli data on `[0, 1]`: the additive
/// Laplace release of the sum, and the KNG release of the mean.
#[derive(Debug, Clone, Copy)]
pub enum MeanSummaryMechanism {
    /// `s = sum x_i + Laplace(1/eps)`; a = 1, b = 1/2.
    LaplaceSum { epsilon: f64 },
    /// `s ~ Laplace_[0,1](mean(x), 2/(n eps))`; a = 0, b = 1/2.
    KngMean { epsilon: f64 },
}

impl MeanSummaryMechanism {
    pub fn a1(&self) -> A1Declaration {
        match self {
            MeanSummaryMechanism::LaplaceSum { .. } => A1Declaration { a: 1.0, b: 0.5 },
            MeanSummaryMechanism::KngMean { .. } => A1Declaration { a: 0.0, b: 0.5 },
        }
    }

    /// Releases `s` for a Bernoulli(theta) dataset of size `n`.
    pub fn sample(&self, theta: f64, n: u64, rng: &mut ChainRng) -> f64 {
        let k = Binomial::new(n, theta).unwrap().sample(rng);
        match *self {
            MeanSummaryMechanism::LaplaceSum { epsilon } => {
                k as f64 + sample_laplace(1.0 / epsilon, rng)
            }
            MeanSummaryMechanism::KngMean { epsilon } => {
                kng_mean_sample(k as f64 / n as f64, n, epsilon, rng)
                    .expect("binomial mean lies in [0, 1]")
            }
        }
    }

    /// `n0^b (n0^{-a} s - theta)`.
    pub fn standardize(&self, s: f64, n0: u64, theta: f64) -> f64 {
        let A1Declaration { a, b } = self.a1();
        let n0 = n0 as f64;
        n0.powf(b) * (s / n0.powf(a) - theta)
    }
}

#[derive(Debug, Clone)]
pub struct Theorem31Row {
    pub n0: u64,
    pub ks_mean: f64,
    pub ks_se: f64,
}

#[derive(Debug, Clone)]
pub struct Theorem31Report {
    pub rows: Vec<Theorem31Row>,
    /// Kendall tau of the KS means against `n0`; convergence shows as -1.
    pub kendall_tau: f64,
}

/// For each `n0`, compares the standardized summary under the true count
/// (`s | theta, n = n0`) against the plug-in mixture
/// (`s | theta, n_dp = n0`, with `n` drawn from its posterior), by the
/// empirical KS distance over `samples` draws per side, repeated
/// `repetitions` times for error bars.
pub fn theorem31_convergence_check(
    mech: MeanSummaryMechanism,
    theta: f64,
    count_mech: &CountMechanism,
    n0_grid: &[u64],
    samples: usize,
    repetitions: usize,
    seed: u64,
) -> Result<Theorem31Report> {
    if n0_grid.is_empty() || samples == 0 || repetitions == 0 {
        return Err(NdpError::InvalidInput("empty grid or zero sizes".into()));
    }
    let mut rows = Vec::with_capacity(n0_grid.len());
    for (gi, &n0) in n0_grid.iter().enumerate() {
        let posterior =
            build_n_posterior(&NdpValue::Discrete(n0 as i64), count_mech, NPrior::FlatUnbounded)?;
        let mut ks_values = Vec::with_capacity(repetitions);
        for rep in 0..repetitions {
            let mut rng = seeded_rng(derive_seed(seed, &[gi as u64, rep as u64]));
            let exact: Vec<f64> = (0..samples)
                .map(|_| mech.standardize(mech.sample(theta, n0, &mut rng), n0, theta))
                .collect();
            let mixture: Vec<f64> = (0..samples)
                .map(|_| {
                    let n = posterior.sample(&mut rng);
                    mech.standardize(mech.sample(theta, n, &mut rng), n0, theta)
                })
                .collect();
            ks_values.push(ks_distance_1d(&exact, &mixture));
        }
        rows.push(Theorem31Row {
            n0,
            ks_mean: mean(&ks_values),
            ks_se: (variance(&ks_values) / repetitions as f64).sqrt(),
        });
    }
    let n0s: Vec<f64> = rows.iter().map(|r| r.n0 as f64).collect();
    let ks: Vec<f64> = rows.iter().map(|r| r.ks_mean).collect();
    Ok(Theorem31Report { rows, kendall_tau: kendall_tau(&n0s, &ks) })
}

#[derive(Debug, Clone, Copy)]
pub struct Prop41Check {
    /// Exact `TV(p(s, n | theta), p(s, n_dp | theta))`.
    pub tv: f64,
    /// Exact `P(n_dp != n)`.
    pub bound: f64,
}

fn count_noise_log_pmf(family: NoiseFamily, eps: f64, k: i64) -> Result<f64> {
    match family {
        NoiseFamily::DiscreteLaplace => Ok(discrete_laplace_log_pmf(k, eps)),
        NoiseFamily::DiscreteGaussian => Ok(discrete_gaussian_log_pmf(k, eps)),
        other => Err(NdpError::Unsupported(format!("{other:?} is not a discrete count family"))),
    }
}

/// Exact check of the coupling bound on a discrete Bernoulli instance:
/// `n` uniform on the given range, `s = Binomial(n, theta) + discrete
/// Laplace(s_epsilon)`, `n_dp = n + noise(epsilon_n)`.
pub fn prop41_coupling_check(
    n_prior_range: (u64, u64),
    epsilon_n: f64,
    family: NoiseFamily,
    theta: f64,
    s_epsilon: f64,
) -> Result<Prop41Check> {
    let (n_lo, n_hi) = n_prior_range;
    if n_lo < 1 || n_lo > n_hi {
        return Err(NdpError::InvalidInput(format!("bad n range [{n_lo}, {n_hi}]")));
    }
    let w_s = truncation_half_width(s_epsilon) as i64;
    let w_n = truncation_half_width(epsilon_n) as i64;
    let prior = 1.0 / (n_hi - n_lo + 1) as f64;
    // p(s | n) over the joint support of counts and noise
    let s_lo = -w_s;
    let s_hi = n_hi as i64 + w_s;
    let p_s_given_n = |n: u64| -> Vec<f64> {
        let mut out = vec![0.0f64; (s_hi - s_lo + 1) as usize];
        for k in 0..=n {
            let pk = ln_binom_pmf(k, n, theta).exp();
            if pk == 0.0 {
                continue;
            }
            for (i, out_v) in out.iter_mut().enumerate() {
                let s = s_lo + i as i64;
                *out_v += pk * discrete_laplace_log_pmf(s - k as i64, s_epsilon).exp();
            }
        }
        out
    };
    let conditionals: Vec<Vec<f64>> = (n_lo..=n_hi).map(p_s_given_n).collect();
    // joint over (s, second coordinate) on the union grid
    let a_lo = (n_lo as i64 - w_n).min(n_lo as i64);
    let a_hi = (n_hi as i64 + w_n).max(n_hi as i64);
    let mut tv = 0.0;
    for si in 0..conditionals[0].len() {
        for a in a_lo..=a_hi {
            // P(s, n = a)
            let p1 = if a >= n_lo as i64 && a <= n_hi as i64 {
                prior * conditionals[(a - n_lo as i64) as usize][si]
            } else {
                0.0
            };
            // P(s, n_dp = a) = sum_n prior eta(a | n) p(s | n)
            let mut p2 = 0.0;
            for n in n_lo..=n_hi {
                let eta = count_noise_log_pmf(family, epsilon_n, a - n as i64)?.exp();
                p2 += prior * eta * conditionals[(n - n_lo) as usize][si];
            }
            tv += (p1 - p2).abs();
        }
    }
    let bound = 1.0 - count_noise_log_pmf(family, epsilon_n, 0)?.exp();
    Ok(Prop41Check { tv: 0.5 * tv, bound })
}

fn ln_binom_pmf(k: u64, n: u64, theta: f64) -> f64 {
    super::ln_choose(n, k) + k as f64 * theta.ln() + (n - k) as f64 * (1.0 - theta).ln()
}

#[derive(Debug, Clone, Copy)]
pub struct Theorem42Check {
    /// Exact `TV(p(s | theta, n = n0), p(s | theta, n_dp = n0))`.
    pub tv: f64,
    /// `delta * E|n - n0|`.
    pub bound: f64,
    pub delta: f64,
    pub expected_deviation: f64,
}

/// Exact evaluation of the total-variation bound on the Bernoulli instance
/// with a discrete Laplace summary of budget `s_epsilon` (so
/// `delta = (e^eps - 1)/(e^eps + 1)`) and a discrete count mechanism.
pub fn theorem42_tv_check(
    theta: f64,
    s_epsilon: f64,
    count_mech: &CountMechanism,
    n0: u64,
) -> Result<Theorem42Check> {
    let posterior = build_n_posterior(&NdpValue::Discrete(n0 as i64), count_mech, NPrior::FlatUnbounded)?;
    let (lo, hi) = posterior.support();
    let w_s = truncation_half_width(s_epsilon) as i64;
    let s_lo = -w_s;
    let s_hi = hi as i64 + w_s;
    let p_s_given_n = |n: u64| -> Vec<f64> {
        let mut out = vec![0.0f64; (s_hi - s_lo + 1) as usize];
        for k in 0..=n {
            let pk = ln_binom_pmf(k, n, theta).exp();
            if pk == 0.0 {
                continue;
            }
            for (i, out_v) in out.iter_mut().enumerate() {
                let s = s_lo + i as i64;
                *out_v += pk * discrete_laplace_log_pmf(s - k as i64, s_epsilon).exp();
            }
        }
        out
    };
    let exact = p_s_given_n(n0);
    let mut mixture = vec![0.0f64; exact.len()];
    for n in lo..=hi {
        let w = posterior.prob(n);
        if w < 1e-16 {
            continue;
        }
        for (m, v) in mixture.iter_mut().zip(p_s_given_n(n)) {
            *m += w * v;
        }
    }
    let tv = 0.5 * exact.iter().zip(&mixture).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let delta = dp_to_tv_delta(DpFramework::PureEps, &[s_epsilon])?;
    let expected_deviation = posterior.expected_abs_deviation(n0);
    Ok(Theorem42Check { tv, bound: delta * expected_deviation, delta, expected_deviation })
}

#[derive(Debug, Clone)]
pub struct AbcRow {
    pub epsilon_n: f64,
    pub tv_mean: f64,
    pub tv_se: f64,
    /// Estimated TV between two independent draws of the same conditional:
    /// the binning noise floor of the estimator.
    pub null_tv: f64,
    pub acceptance_rate: f64,
}

/// Rejection-sampling comparison of the conditional (ABC-type) posteriors
/// `p(theta | s in R, n = n0)` and `p(theta | s in R, n_dp = n0)` on the
/// Bernoulli toy, across a grid of count budgets. TV is estimated on a
/// binned histogram over `[0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn abc_posterior_check(
    prior_a: f64,
    prior_b: f64,
    s_mech: MeanSummaryMechanism,
    rect: (f64, f64),
    n0: u64,
    epsilon_n_grid: &[f64],
    accepted_per_side: usize,
    repetitions: usize,
    bins: usize,
    seed: u64,
) -> Result<Vec<AbcRow>> {
    let (lo, hi) = rect;
    if !(lo < hi) {
        return Err(NdpError::InvalidBounds { lo, hi });
    }
    let beta = Beta::new(prior_a, prior_b)
        .map_err(|e| NdpError::InvalidInput(format!("Beta prior: {e}")))?;
    let max_attempts = accepted_per_side.saturating_mul(1000);
    let draw_conditional = |n_post: Option<&NPosterior>,
                                rng: &mut ChainRng|
     -> Result<(Vec<f64>, f64)> {
        let mut kept = Vec::with_capacity(accepted_per_side);
        let mut attempts = 0usize;
        while kept.len() < accepted_per_side {
            attempts += 1;
            if attempts > max_attempts {
                return Err(NdpError::RectangleTooSmall(
                    kept.len() as f64 / attempts as f64,
                ));
            }
            let theta = beta.sample(rng);
            let n = match n_post {
                Some(post) => post.sample(rng),
                None => n0,
            };
            let s = s_mech.sample(theta, n, rng);
            if s >= lo && s <= hi {
                kept.push(theta);
            }
        }
        Ok((kept, accepted_per_side as f64 / attempts as f64))
    };
    let binned_tv = |a: &[f64], b: &[f64]| -> f64 {
        let mut ha = vec![0.0f64; bins];
        let mut hb = vec![0.0f64; bins];
        for &x in a {
            ha[((x * bins as f64) as usize).min(bins - 1)] += 1.0 / a.len() as f64;
        }
        for &x in b {
            hb[((x * bins as f64) as usize).min(bins - 1)] += 1.0 / b.len() as f64;
        }
        0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>()
    };
    let mut rows = Vec::with_capacity(epsilon_n_grid.len());
    for (gi, &eps_n) in epsilon_n_grid.iter().enumerate() {
        let count_mech = if eps_n.is_infinite() {
            CountMechanism::Exact
        } else {
            CountMechanism::new(NoiseFamily::DiscreteLaplace, eps_n)?
        };
        let posterior =
            build_n_posterior(&NdpValue::Discrete(n0 as i64), &count_mech, NPrior::FlatUnbounded)?;
        let mut tvs = Vec::with_capacity(repetitions);
        let mut nulls = Vec::with_capacity(repetitions);
        let mut acc_rate = 0.0;
        for rep in 0..repetitions {
            let mut rng = seeded_rng(derive_seed(seed, &[gi as u64, rep as u64]));
            let (exact, rate1) = draw_conditional(None, &mut rng)?;
            let (exact2, _) = draw_conditional(None, &mut rng)?;
            let (mixture, rate2) = draw_conditional(Some(&posterior), &mut rng)?;
            tvs.push(binned_tv(&exact, &mixture));
            nulls.push(binned_tv(&exact, &exact2));
            acc_rate += 0.5 * (rate1 + rate2) / repetitions as f64;
        }
        rows.push(AbcRow {
            epsilon_n: eps_n,
            tv_mean: mean(&tvs),
            tv_se: (variance(&tvs) / repetitions as f64).sqrt(),
            null_tv: mean(&nulls),
            acceptance_rate: acc_rate,
        });
    }
    Ok(rows)
}
