//! Poissonized multinomial model for privatized contingency tables with
//! unknown total: independent `x_i ~ Pois(lambda_i)` cells with conjugate
//! `lambda_i ~ Gamma(alpha_i, theta)` (shape-rate) priors, and per-cell
//! discrete Laplace noise on the counts. The total `n = sum x_i`, the
//! overall rate and the cell probabilities are all derivable but never
//! appear in the sampler state, so one sampler cycle costs `O(k)`
//! regardless of `n`.

use crate::error::{NdpError, Result};
use crate::mechanisms::{discrete_laplace_log_pmf, sample_discrete_laplace};
use crate::rng::{seeded_rng, uniform_open, ChainRng};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

/// Per-cell Poisson rates `lambda_i = lambda p_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonMultinomialParams {
    pub lambda_tilde: Vec<f64>,
}

impl PoissonMultinomialParams {
    /// Implied multinomial total rate.
    pub fn total_rate(&self) -> f64 {
        self.lambda_tilde.iter().sum()
    }

    /// Implied cell probabilities.
    pub fn cell_probs(&self) -> Vec<f64> {
        let total = self.total_rate();
        self.lambda_tilde.iter().map(|l| l / total).collect()
    }
}

/// Augmented sampler state: latent counts and their cell rates.
#[derive(Debug, Clone)]
pub struct PmState {
    pub counts: Vec<u64>,
    pub params: PoissonMultinomialParams,
}

#[derive(Debug, Clone)]
pub struct PoissonMultinomialModel {
    alpha: Vec<f64>,
    rate: f64,
    epsilon_s: f64,
}

/// Outcome of one `+/-1` cell proposal.
#[derive(Debug, Clone, Copy)]
pub struct CountMove {
    pub direction: i8,
    pub log_accept: f64,
    pub accepted: bool,
}

/// Chain output: post burn-in snapshots of the latent counts.
#[derive(Debug, Clone)]
pub struct PmTrace {
    pub counts: Vec<Vec<u64>>,
    pub lambda: Vec<Vec<f64>>,
    pub accept_rate: f64,
}

impl PoissonMultinomialModel {
    pub fn new(alpha: Vec<f64>, rate: f64, epsilon_s: f64) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(NdpError::InvalidInput("cell shapes must be positive".into()));
        }
        if !(rate > 0.0) {
            return Err(NdpError::InvalidInput(format!("prior rate = {rate}")));
        }
        if !(epsilon_s > 0.0) || epsilon_s.is_infinite() {
            return Err(NdpError::InvalidBudget(format!("epsilon_s = {epsilon_s}")));
        }
        Ok(Self { alpha, rate, epsilon_s })
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn hyper(&self) -> (&[f64], f64) {
        (&self.alpha, self.rate)
    }

    pub fn epsilon_s(&self) -> f64 {
        self.epsilon_s
    }

    pub fn sample_prior(&self, rng: &mut ChainRng) -> PoissonMultinomialParams {
        let lambda_tilde = self
            .alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0 / self.rate).unwrap().sample(rng))
            .collect();
        PoissonMultinomialParams { lambda_tilde }
    }

    pub fn sample_counts(
        &self,
        params: &PoissonMultinomialParams,
        rng: &mut ChainRng,
    ) -> Vec<u64> {
        params
            .lambda_tilde
            .iter()
            .map(|&l| Poisson::new(l).unwrap().sample(rng) as u64)
            .collect()
    }

    /// Per-cell discrete Laplace release of the count table; the table has
    /// unit l1 sensitivity under add/delete adjacency.
    pub fn privatize(&self, counts: &[u64], rng: &mut ChainRng) -> Vec<i64> {
        counts
            .iter()
            .map(|&x| x as i64 + sample_discrete_laplace(self.epsilon_s, rng))
            .collect()
    }

    /// Exact conjugate draw `lambda_i | x_i ~ Gamma(alpha_i + x_i, theta + 1)`.
    pub fn update_theta(&self, counts: &[u64], rng: &mut ChainRng) -> PoissonMultinomialParams {
        let lambda_tilde = self
            .alpha
            .iter()
            .zip(counts)
            .map(|(&a, &x)| Gamma::new(a + x as f64, 1.0 / (self.rate + 1.0)).unwrap().sample(rng))
            .collect();
        PoissonMultinomialParams { lambda_tilde }
    }

    /// One `+/-1` Metropolis move on cell `i`. Down-moves from zero are never
    /// proposed; the up-move from zero carries the 1/2 proposal correction.
    pub fn count_move(
        &self,
        counts: &mut [u64],
        params: &PoissonMultinomialParams,
        i: usize,
        s: &[i64],
        rng: &mut ChainRng,
    ) -> CountMove {
        let x = counts[i];
        let lambda = params.lambda_tilde[i];
        let up = if x == 0 { true } else { rng.random::<f64>() < 0.5 };
        let (x_new, log_data, log_proposal) = if up {
            let forward_from_zero = x == 0;
            let log_data = lambda.ln() - ((x + 1) as f64).ln();
            // q(down | x+1) = 1/2 always (x+1 >= 1); q(up | 0) = 1
            let log_proposal = if forward_from_zero { (0.5f64).ln() } else { 0.0 };
            (x + 1, log_data, log_proposal)
        } else {
            let log_data = (x as f64).ln() - lambda.ln();
            // reverse up-move from x-1 = 0 has probability 1, forward 1/2
            let log_proposal = if x == 1 { (2.0f64).ln() } else { 0.0 };
            (x - 1, log_data, log_proposal)
        };
        let log_mech = discrete_laplace_log_pmf(s[i] - x_new as i64, self.epsilon_s)
            - discrete_laplace_log_pmf(s[i] - counts[i] as i64, self.epsilon_s);
        let log_accept = log_data + log_mech + log_proposal;
        let accepted = uniform_open(rng).ln() < log_accept;
        if accepted {
            counts[i] = x_new;
        }
        CountMove { direction: if up { 1 } else { -1 }, log_accept, accepted }
    }

    /// One sampler cycle: the conjugate rate draw followed by one count move
    /// per cell. `O(k)` independent of the latent total.
    pub fn cycle(&self, state: &mut PmState, s: &[i64], rng: &mut ChainRng) -> usize {
        state.params = self.update_theta(&state.counts, rng);
        let mut accepted = 0;
        for i in 0..self.k() {
            if self.count_move(&mut state.counts, &state.params, i, s, rng).accepted {
                accepted += 1;
            }
        }
        accepted
    }

    pub fn init_state(&self, s: &[i64], rng: &mut ChainRng) -> PmState {
        let counts: Vec<u64> = s.iter().map(|&v| v.max(0) as u64).collect();
        let params = self.update_theta(&counts, rng);
        PmState { counts, params }
    }

    pub fn run_chain(
        &self,
        s: &[i64],
        iterations: usize,
        burn_in: usize,
        seed: u64,
        init: Option<PmState>,
    ) -> Result<PmTrace> {
        if s.len() != self.k() {
            return Err(NdpError::InvalidInput(format!(
                "summary has {} cells, model has {}",
                s.len(),
                self.k()
            )));
        }
        if burn_in >= iterations {
            return Err(NdpError::InvalidInput("burn-in must be below iterations".into()));
        }
        let mut rng = seeded_rng(seed);
        let mut state = init.unwrap_or_else(|| self.init_state(s, &mut rng));
        let mut counts = Vec::with_capacity(iterations - burn_in);
        let mut lambda = Vec::with_capacity(iterations - burn_in);
        let mut accepted = 0usize;
        for it in 0..iterations {
            accepted += self.cycle(&mut state, s, &mut rng);
            if it >= burn_in {
                counts.push(state.counts.clone());
                lambda.push(state.params.lambda_tilde.clone());
            }
        }
        Ok(PmTrace {
            counts,
            lambda,
            accept_rate: accepted as f64 / (iterations * self.k()) as f64,
        })
    }
}
