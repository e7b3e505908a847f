//! Brute-force ground truth for small instances: exact enumeration
//! posteriors, empirical distance estimators, and the Monte Carlo harness
//! for the distributional convergence checks.

mod checks;

pub use checks::{
    abc_posterior_check, prop41_coupling_check, theorem31_convergence_check, theorem42_tv_check,
    A1Declaration, AbcRow, MeanSummaryMechanism, Prop41Check, Theorem31Report, Theorem31Row,
    Theorem42Check,
};

use crate::error::{NdpError, Result};
use crate::mechanisms::{discrete_laplace_log_pmf, CountMechanism, DpSummary};
use crate::models::{BernoulliModel, PoissonMultinomialModel};
use crate::util::log_sum_exp;
use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;
use std::hash::Hash;

/// An exactly enumerated posterior over a finite grid of discrete states.
#[derive(Debug, Clone)]
pub struct EnumeratedPosterior<K> {
    pub states: Vec<K>,
    pub probs: Vec<f64>,
}

impl<K: Clone + PartialEq> EnumeratedPosterior<K> {
    pub fn from_log_weights(states: Vec<K>, log_weights: Vec<f64>) -> Result<Self> {
        assert_eq!(states.len(), log_weights.len());
        let norm = log_sum_exp(&log_weights);
        if !norm.is_finite() {
            return Err(NdpError::DegenerateLikelihood);
        }
        let probs = log_weights.iter().map(|lw| (lw - norm).exp()).collect();
        Ok(Self { states, probs })
    }

    pub fn prob_of(&self, state: &K) -> f64 {
        self.states
            .iter()
            .position(|s| s == state)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn mode(&self) -> &K {
        let idx = self
            .probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        &self.states[idx]
    }
}

/// Exact total variation distance `(1/2) sum |p - q|` over the union of the
/// two supports.
pub fn tv_distance_discrete<K: Clone + Eq + Hash>(
    p: &EnumeratedPosterior<K>,
    q: &EnumeratedPosterior<K>,
) -> f64 {
    let mut table: HashMap<K, (f64, f64)> = HashMap::new();
    for (state, &prob) in p.states.iter().zip(&p.probs) {
        table.entry(state.clone()).or_insert((0.0, 0.0)).0 += prob;
    }
    for (state, &prob) in q.states.iter().zip(&q.probs) {
        table.entry(state.clone()).or_insert((0.0, 0.0)).1 += prob;
    }
    0.5 * table.values().map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical TV between a sample-based distribution over discrete states and
/// an enumerated posterior.
pub fn tv_from_samples<K: Clone + Eq + Hash>(
    samples: &[K],
    reference: &EnumeratedPosterior<K>,
) -> f64 {
    let mut counts: HashMap<K, f64> = HashMap::new();
    let w = 1.0 / samples.len() as f64;
    for s in samples {
        *counts.entry(s.clone()).or_insert(0.0) += w;
    }
    let mut tv = 0.0;
    for (state, &prob) in reference.states.iter().zip(&reference.probs) {
        let emp = counts.remove(state).unwrap_or(0.0);
        tv += (emp - prob).abs();
    }
    tv += counts.values().sum::<f64>();
    0.5 * tv
}

/// Two-sample Kolmogorov-Smirnov statistic in one dimension.
pub fn ks_distance_1d(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs non-empty samples");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// Per-coordinate two-sample KS with the max over coordinates reported: a
/// lower bound on the rectangle-sup distance, adequate for trend checks.
pub fn ks_distance_max_coord(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let dim = a[0].len();
    (0..dim)
        .map(|j| {
            let xa: Vec<f64> = a.iter().map(|row| row[j]).collect();
            let xb: Vec<f64> = b.iter().map(|row| row[j]).collect();
            ks_distance_1d(&xa, &xb)
        })
        .fold(0.0, f64::max)
}

fn ln_beta(x: f64, y: f64) -> f64 {
    ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)
}

pub(crate) fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `log BetaBinomial(k; n, a, b)`: the Beta-marginalized count distribution.
pub fn beta_binomial_log_pmf(k: u64, n: u64, a: f64, b: f64) -> f64 {
    ln_choose(n, k) + ln_beta(k as f64 + a, (n - k) as f64 + b) - ln_beta(a, b)
}

/// Exact posterior `p(n, k | s, n_dp)` of the Bernoulli toy over a finite
/// `n` range under a flat prior, with theta marginalized through the
/// Beta-Binomial.
pub fn enumerate_bernoulli_posterior(
    model: &BernoulliModel,
    summary: &DpSummary,
    count_mech: &CountMechanism,
    n_range: (u64, u64),
) -> Result<EnumeratedPosterior<(u64, u64)>> {
    let (n_lo, n_hi) = n_range;
    if n_lo < 1 || n_lo > n_hi {
        return Err(NdpError::InvalidInput(format!("bad n range [{n_lo}, {n_hi}]")));
    }
    let (a, b) = model.prior();
    let mut states = Vec::new();
    let mut log_w = Vec::new();
    for n in n_lo..=n_hi {
        let eta = count_mech.log_density(&summary.n_dp, n);
        for k in 0..=n {
            states.push((n, k));
            log_w.push(
                beta_binomial_log_pmf(k, n, a, b)
                    + model.noise().log_density(summary.s[0] - k as f64)
                    + eta,
            );
        }
    }
    EnumeratedPosterior::from_log_weights(states, log_w)
}

/// `log NegBinomial(x; shape, rate)`: the Gamma-marginalized Poisson cell.
pub fn neg_binomial_log_pmf(x: u64, shape: f64, rate: f64) -> f64 {
    let xf = x as f64;
    ln_gamma(shape + xf) - ln_gamma(shape) - ln_gamma(xf + 1.0)
        + shape * (rate / (rate + 1.0)).ln()
        - xf * (rate + 1.0).ln()
}

/// Exact posterior over count vectors `{0..cap}^k` for the Poissonized
/// multinomial, with rates marginalized. Returns the posterior together with
/// an estimate of the probability mass beyond the cap.
pub fn enumerate_poisson_multinomial_posterior(
    model: &PoissonMultinomialModel,
    s: &[i64],
    count_cap: u64,
) -> Result<(EnumeratedPosterior<Vec<u64>>, f64)> {
    let k = model.k();
    if s.len() != k {
        return Err(NdpError::InvalidInput("summary dimension mismatch".into()));
    }
    let grid = (count_cap + 1).checked_pow(k as u32).unwrap_or(u64::MAX);
    if grid > 100_000 {
        return Err(NdpError::CapExceeded { needed: grid, cap: 100_000 });
    }
    let (alpha, rate) = model.hyper();
    let eps = model.epsilon_s();
    // per-cell log factors
    let factor = |i: usize, x: u64| -> f64 {
        neg_binomial_log_pmf(x, alpha[i], rate) + discrete_laplace_log_pmf(s[i] - x as i64, eps)
    };
    let mut states: Vec<Vec<u64>> = vec![Vec::new()];
    let mut log_w = vec![0.0f64];
    for i in 0..k {
        let mut next_states = Vec::with_capacity(states.len() * (count_cap as usize + 1));
        let mut next_w = Vec::with_capacity(log_w.len() * (count_cap as usize + 1));
        for (state, &w) in states.iter().zip(&log_w) {
            for x in 0..=count_cap {
                let mut s2 = state.clone();
                s2.push(x);
                next_states.push(s2);
                next_w.push(w + factor(i, x));
            }
        }
        states = next_states;
        log_w = next_w;
    }
    // tail estimate: per-cell mass beyond the cap, extended well past it
    let mut within = 1.0;
    for i in 0..k {
        let capped: Vec<f64> = (0..=count_cap).map(|x| factor(i, x)).collect();
        let extended: Vec<f64> = (0..=count_cap + 400).map(|x| factor(i, x)).collect();
        within *= (log_sum_exp(&capped) - log_sum_exp(&extended)).exp();
    }
    let posterior = EnumeratedPosterior::from_log_weights(states, log_w)?;
    Ok((posterior, 1.0 - within))
}
