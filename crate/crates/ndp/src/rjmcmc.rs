//! Privacy-aware reversible-jump MCMC targeting
//! `p(theta, x_{1:n}, n | s, n_dp)`.
//!
//! Each iteration runs one within-model sweep (a theta draw followed by a
//! sequential refresh of every latent record, accepted on the summary
//! likelihood ratio `g(s, t_x*)/g(s, t_x)`) and one between-models move (a
//! birth appending a fresh record or a death dropping the last one, accepted
//! on the full reversible-jump ratio). Record additivity keeps a full cycle
//! at `O(n)`: the running statistic `t_x` is updated incrementally and
//! re-derived from scratch only at refresh points, where the accumulated
//! drift is audited.
//!
//! The prior on `n` is flat over `[1, n_max]`; proposals beyond `n_max`
//! auto-reject, which preserves a valid kernel on the truncated support.

use crate::error::{NdpError, Result};
use crate::mechanisms::{CountMechanism, DpSummary, NoiseFamily, PrivacyBudget};
use crate::models::Model;
use crate::rng::{seeded_rng, uniform_open, ChainRng};
use crate::util::{effective_sample_size, mean, variance};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

const LN_HALF: f64 = -std::f64::consts::LN_2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Recompute `t_x` from scratch every this many iterations.
    pub t_refresh_period: usize,
    /// Upper end of the flat prior on `n`.
    pub n_max: u64,
    /// Record per-iteration acceptance probabilities for the floor audit.
    pub record_acceptance: bool,
}

impl SamplerConfig {
    pub fn new(iterations: usize, burn_in: usize, seed: u64, n_max: u64) -> Self {
        Self { iterations, burn_in, seed, t_refresh_period: 1000, n_max, record_acceptance: false }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(NdpError::InvalidInput(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.t_refresh_period == 0 {
            return Err(NdpError::InvalidInput("t_refresh_period must be positive".into()));
        }
        if self.n_max == 0 {
            return Err(NdpError::InvalidInput("n_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// The augmented chain state. Record storage is capacity-doubled: deaths
/// leave the trailing slot logically dead, births reuse it, and growth past
/// the reserved capacity doubles the allocation.
#[derive(Debug, Clone)]
pub struct LatentState<M: Model> {
    pub theta: M::Theta,
    records: Vec<M::Datum>,
    n: usize,
    pub t_x: Vec<f64>,
}

impl<M: Model> LatentState<M> {
    /// Default initialization: theta from the prior,
    /// `n = max(1, round(n_dp))` clipped to `[1, n_max]`, records drawn iid
    /// from `p(x | theta)`.
    pub fn init(model: &M, summary: &DpSummary, n_max: u64, rng: &mut ChainRng) -> Self {
        let theta = model.sample_prior(rng);
        Self::init_with_theta(model, summary, theta, n_max, rng)
    }

    pub fn init_with_theta(
        model: &M,
        summary: &DpSummary,
        theta: M::Theta,
        n_max: u64,
        rng: &mut ChainRng,
    ) -> Self {
        let ndp = summary.n_dp.as_f64();
        let n = (ndp.round().max(1.0) as u64).min(n_max).max(1) as usize;
        let capacity = (2.0 * ndp.max(1.0).ceil()) as usize;
        let mut records = Vec::with_capacity(capacity.max(n));
        for _ in 0..n {
            records.push(model.sample_datum(&theta, rng));
        }
        let mut state = Self { theta, records, n, t_x: vec![0.0; model.summary_dim()] };
        state.refresh_t(model, &summary.s);
        state
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The live records `x_{1:n}`.
    pub fn records(&self) -> &[M::Datum] {
        &self.records[..self.n]
    }

    fn push_record(&mut self, rec: M::Datum) {
        if self.n < self.records.len() {
            self.records[self.n] = rec;
        } else {
            self.records.push(rec);
        }
        self.n += 1;
    }

    fn pop_record(&mut self) {
        debug_assert!(self.n > 1);
        self.n -= 1;
    }

    /// Recomputes `t_x` from scratch; returns the l-infinity drift of the
    /// incrementally maintained value.
    pub fn refresh_t(&mut self, model: &M, s: &[f64]) -> f64 {
        let d = self.t_x.len();
        let mut fresh = vec![0.0; d];
        let mut buf = vec![0.0; d];
        for rec in &self.records[..self.n] {
            model.record_statistic_into(s, rec, &mut buf);
            for (f, b) in fresh.iter_mut().zip(&buf) {
                *f += b;
            }
        }
        let drift = self
            .t_x
            .iter()
            .zip(&fresh)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        self.t_x = fresh;
        drift
    }
}

/// Acceptance statistics of one within-model sweep.
#[derive(Debug, Clone, Copy)]
pub struct WithinStats {
    pub proposals: u32,
    pub accepts: u32,
    pub min_prob: f64,
}

/// Acceptance outcome of one between-models move.
#[derive(Debug, Clone, Copy)]
pub struct BetweenStats {
    pub direction: i8,
    pub accepted: bool,
    pub prob: f64,
    /// Proposal exceeded `n_max` and was auto-rejected; `prob` is NaN.
    pub truncated: bool,
    pub from_n: u64,
}

fn accept_prob(log_g_new: f64, log_g_cur: f64, extra_log_ratio: f64) -> f64 {
    if log_g_new == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_g_cur == f64::NEG_INFINITY {
        return 1.0;
    }
    let log_alpha = log_g_new - log_g_cur + extra_log_ratio;
    if log_alpha >= 0.0 {
        1.0
    } else {
        log_alpha.exp()
    }
}

/// One within-model sweep: a theta update (suppressed during E-steps)
/// followed by a sequential refresh proposal for each record, accepted with
/// `min(1, g(s, t_x*)/g(s, t_x))`.
pub fn within_model_sweep<M: Model>(
    model: &M,
    s: &[f64],
    state: &mut LatentState<M>,
    update_theta: bool,
    rng: &mut ChainRng,
) -> Result<WithinStats> {
    if update_theta {
        let records: &[M::Datum] = &state.records[..state.n];
        state.theta = model.update_theta(&state.theta, records, rng)?;
    }
    let d = model.summary_dim();
    let mut t_old = vec![0.0; d];
    let mut t_prop = vec![0.0; d];
    let mut t_new = vec![0.0; d];
    let mut g_cur = model.summary_loglik(s, &state.t_x);
    if g_cur.is_nan() {
        return Err(NdpError::NumericBreakdown("summary log-likelihood is NaN".into()));
    }
    let mut stats = WithinStats { proposals: 0, accepts: 0, min_prob: 1.0 };
    for i in 0..state.n {
        let proposal = model.sample_datum(&state.theta, rng);
        model.record_statistic_into(s, &state.records[i], &mut t_old);
        model.record_statistic_into(s, &proposal, &mut t_prop);
        for j in 0..d {
            t_new[j] = state.t_x[j] - t_old[j] + t_prop[j];
        }
        let g_new = model.summary_loglik(s, &t_new);
        if g_new.is_nan() {
            return Err(NdpError::NumericBreakdown(format!(
                "summary log-likelihood is NaN at record {i}"
            )));
        }
        let prob = accept_prob(g_new, g_cur, 0.0);
        stats.proposals += 1;
        stats.min_prob = stats.min_prob.min(prob);
        if uniform_open(rng) <= prob {
            state.records[i] = proposal;
            state.t_x.copy_from_slice(&t_new);
            g_cur = g_new;
            stats.accepts += 1;
        }
    }
    Ok(stats)
}

/// One between-models move. The jump proposal is `n* = 2` with probability 1
/// from `n = 1`, else `n +- 1` with probability 1/2 each; a birth appends a
/// fresh prior-predictive record, a death drops the last record. Acceptance
/// combines the summary ratio, the count-mechanism ratio for `n_dp`, the
/// flat prior ratio (1 inside the support) and the jump-proposal ratio.
pub fn between_model_move<M: Model>(
    model: &M,
    summary: &DpSummary,
    count_mech: &CountMechanism,
    n_max: u64,
    state: &mut LatentState<M>,
    rng: &mut ChainRng,
) -> Result<BetweenStats> {
    let n = state.n as u64;
    let (n_star, log_q_fwd, log_q_rev) = if n == 1 {
        // q(2|1) = 1; reverse q(1|2) = 1/2
        (2u64, 0.0, LN_HALF)
    } else if uniform_open(rng) <= 0.5 {
        // up-move from n >= 2; reverse from n+1 >= 3 proposes down w.p. 1/2
        (n + 1, LN_HALF, LN_HALF)
    } else {
        // down-move; reverse is up from n-1, which is forced when n-1 = 1
        let rev = if n - 1 == 1 { 0.0 } else { LN_HALF };
        (n - 1, LN_HALF, rev)
    };
    let direction = if n_star > n { 1i8 } else { -1 };
    if n_star > n_max {
        return Ok(BetweenStats {
            direction,
            accepted: false,
            prob: f64::NAN,
            truncated: true,
            from_n: n,
        });
    }
    let s = &summary.s;
    let d = model.summary_dim();
    let g_cur = model.summary_loglik(s, &state.t_x);
    let mut t_new = vec![0.0; d];
    let mut t_buf = vec![0.0; d];
    let birth_record = if direction == 1 {
        let rec = model.sample_datum(&state.theta, rng);
        model.record_statistic_into(s, &rec, &mut t_buf);
        for j in 0..d {
            t_new[j] = state.t_x[j] + t_buf[j];
        }
        Some(rec)
    } else {
        model.record_statistic_into(s, &state.records[state.n - 1], &mut t_buf);
        for j in 0..d {
            t_new[j] = state.t_x[j] - t_buf[j];
        }
        None
    };
    let g_new = model.summary_loglik(s, &t_new);
    if g_new.is_nan() {
        return Err(NdpError::NumericBreakdown("summary log-likelihood is NaN in jump".into()));
    }
    let log_eta_ratio = count_mech.log_density(&summary.n_dp, n_star)
        - count_mech.log_density(&summary.n_dp, n);
    let extra = log_eta_ratio + log_q_rev - log_q_fwd;
    let prob = if extra == f64::NEG_INFINITY {
        0.0
    } else {
        accept_prob(g_new, g_cur, extra)
    };
    let accepted = uniform_open(rng) <= prob;
    if accepted {
        match birth_record {
            Some(rec) => state.push_record(rec),
            None => state.pop_record(),
        }
        state.t_x.copy_from_slice(&t_new);
    }
    Ok(BetweenStats { direction, accepted, prob, truncated: false, from_n: n })
}

/// Per-iteration acceptance probabilities, kept when
/// `record_acceptance = true`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AcceptanceLog {
    /// Minimum within-sweep acceptance probability of the iteration.
    pub within_min_prob: Vec<f64>,
    /// Between-move acceptance probability; NaN for truncated proposals.
    pub between_prob: Vec<f64>,
    /// The value of `n` the between move was proposed from.
    pub between_from_n: Vec<u64>,
}

/// Per-iteration record of the chain.
#[derive(Debug, Clone)]
pub struct Trace {
    pub model_name: String,
    pub theta_names: Vec<String>,
    pub theta: Vec<Vec<f64>>,
    pub n: Vec<u64>,
    pub within_accepts: Vec<u32>,
    pub within_proposals: Vec<u32>,
    pub between_accepted: Vec<bool>,
    pub between_direction: Vec<i8>,
    pub acceptance: Option<AcceptanceLog>,
    pub config: SamplerConfig,
    pub count_family: Option<NoiseFamily>,
    pub epsilon_n: f64,
    pub max_t_drift: f64,
}

impl Trace {
    fn with_capacity(
        model_name: &str,
        theta_names: Vec<String>,
        config: &SamplerConfig,
        count_mech: &CountMechanism,
    ) -> Self {
        let it = config.iterations;
        Self {
            model_name: model_name.to_string(),
            theta_names,
            theta: Vec::with_capacity(it),
            n: Vec::with_capacity(it),
            within_accepts: Vec::with_capacity(it),
            within_proposals: Vec::with_capacity(it),
            between_accepted: Vec::with_capacity(it),
            between_direction: Vec::with_capacity(it),
            acceptance: config.record_acceptance.then(AcceptanceLog::default),
            config: config.clone(),
            count_family: count_mech.family(),
            epsilon_n: count_mech.epsilon(),
            max_t_drift: 0.0,
        }
    }

    pub fn iterations(&self) -> usize {
        self.n.len()
    }

    /// Post burn-in draws of one theta component.
    pub fn theta_column(&self, idx: usize) -> Vec<f64> {
        self.theta[self.config.burn_in..].iter().map(|row| row[idx]).collect()
    }

    pub fn n_values(&self) -> Vec<f64> {
        self.n[self.config.burn_in..].iter().map(|&v| v as f64).collect()
    }

    /// Posterior mean and variance of a theta component, post burn-in.
    pub fn theta_mean_var(&self, idx: usize) -> (f64, f64) {
        let xs = self.theta_column(idx);
        (mean(&xs), variance(&xs))
    }

    pub fn n_mean_var(&self) -> (f64, f64) {
        let xs = self.n_values();
        (mean(&xs), variance(&xs))
    }

    pub fn ess(&self, idx: usize) -> f64 {
        effective_sample_size(&self.theta_column(idx))
    }

    pub fn within_accept_rate(&self) -> f64 {
        let accepts: u64 = self.within_accepts.iter().map(|&a| a as u64).sum();
        let proposals: u64 = self.within_proposals.iter().map(|&a| a as u64).sum();
        accepts as f64 / proposals.max(1) as f64
    }

    pub fn between_accept_rate(&self) -> f64 {
        let accepts = self.between_accepted.iter().filter(|&&a| a).count();
        accepts as f64 / self.between_accepted.len().max(1) as f64
    }

    /// One CSV row per iteration: flattened theta components, `n`, the
    /// within-sweep acceptance rate, and the between-move accept flag.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.theta_names.clone();
        header.push("n".into());
        header.push("within_accept_rate".into());
        header.push("between_accept".into());
        w.write_record(&header).map_err(io_err)?;
        for i in 0..self.iterations() {
            let mut row: Vec<String> = self.theta[i].iter().map(|v| format!("{v}")).collect();
            row.push(self.n[i].to_string());
            let rate = self.within_accepts[i] as f64 / self.within_proposals[i].max(1) as f64;
            row.push(format!("{rate}"));
            row.push((self.between_accepted[i] as u8).to_string());
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| NdpError::InvalidInput(format!("csv flush: {e}")))?;
        Ok(())
    }

    /// Sidecar metadata: config echo, seed, model name.
    pub fn write_metadata<W: Write>(&self, writer: W) -> Result<()> {
        let meta = serde_json::json!({
            "model": self.model_name,
            "seed": self.config.seed,
            "config": self.config,
            "theta_names": self.theta_names,
            "count_family": self.count_family,
            "epsilon_n": if self.epsilon_n.is_finite() {
                serde_json::json!(self.epsilon_n)
            } else {
                serde_json::json!("inf")
            },
            "max_t_drift": self.max_t_drift,
        });
        serde_json::to_writer_pretty(writer, &meta)
            .map_err(|e| NdpError::InvalidInput(format!("metadata: {e}")))
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| NdpError::InvalidInput(e.to_string()))?;
        self.write_csv(f)
    }

    pub fn write_metadata_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| NdpError::InvalidInput(e.to_string()))?;
        self.write_metadata(f)
    }
}

fn io_err(e: csv::Error) -> NdpError {
    NdpError::InvalidInput(format!("csv write: {e}"))
}

/// Runs the chain: one within-model sweep and one between-models move per
/// iteration. Deterministic given the config seed.
pub fn run_chain<M: Model>(
    model: &M,
    summary: &DpSummary,
    count_mech: &CountMechanism,
    config: &SamplerConfig,
    init: Option<LatentState<M>>,
) -> Result<Trace> {
    run_chain_with(model, summary, count_mech, config, init, true, |_, _| {}).map(|(t, _)| t)
}

/// Chain driver shared with the E-step: optionally suppresses the theta
/// update and invokes `visit` after every completed iteration.
pub fn run_chain_with<M: Model, F>(
    model: &M,
    summary: &DpSummary,
    count_mech: &CountMechanism,
    config: &SamplerConfig,
    init: Option<LatentState<M>>,
    update_theta: bool,
    mut visit: F,
) -> Result<(Trace, LatentState<M>)>
where
    F: FnMut(usize, &LatentState<M>),
{
    config.validate()?;
    if summary.s.len() != model.summary_dim() {
        return Err(NdpError::InvalidInput(format!(
            "summary has {} components, model expects {}",
            summary.s.len(),
            model.summary_dim()
        )));
    }
    let mut rng = seeded_rng(config.seed);
    let mut state = match init {
        Some(st) => {
            if st.n() as u64 > config.n_max {
                return Err(NdpError::InvalidInit(format!(
                    "initial n = {} exceeds n_max = {}",
                    st.n(),
                    config.n_max
                )));
            }
            st
        }
        None => LatentState::init(model, summary, config.n_max, &mut rng),
    };
    let mut trace = Trace::with_capacity(model.name(), model.theta_names(), config, count_mech);
    for it in 0..config.iterations {
        let within = within_model_sweep(model, &summary.s, &mut state, update_theta, &mut rng)
            .map_err(|e| NdpError::NumericBreakdown(format!("iteration {it}: {e}")))?;
        let between = between_model_move(model, summary, count_mech, config.n_max, &mut state, &mut rng)
            .map_err(|e| NdpError::NumericBreakdown(format!("iteration {it}: {e}")))?;
        trace.theta.push(model.theta_to_vec(&state.theta));
        trace.n.push(state.n() as u64);
        trace.within_accepts.push(within.accepts);
        trace.within_proposals.push(within.proposals);
        trace.between_accepted.push(between.accepted);
        trace.between_direction.push(between.direction);
        if let Some(log) = trace.acceptance.as_mut() {
            log.within_min_prob.push(within.min_prob);
            log.between_prob.push(between.prob);
            log.between_from_n.push(between.from_n);
        }
        if (it + 1) % config.t_refresh_period == 0 {
            let drift = state.refresh_t(model, &summary.s);
            trace.max_t_drift = trace.max_t_drift.max(drift);
            if drift > 1e-6 {
                return Err(NdpError::NumericBreakdown(format!(
                    "t_x drift {drift} at iteration {it}"
                )));
            }
        }
        visit(it, &state);
    }
    Ok((trace, state))
}

/// Result of auditing recorded acceptance probabilities against the
/// theoretical floors for pure eps-DP mechanisms with a flat n-prior.
#[derive(Debug, Clone)]
pub struct AuditReport {
    pub applicable: bool,
    pub note: Option<String>,
    pub within_floor: f64,
    pub between_floor_interior: f64,
    pub between_floor_boundary: f64,
    /// (iteration, recorded probability) pairs below the floor.
    pub within_violations: Vec<(usize, f64)>,
    pub between_violations: Vec<(usize, f64)>,
    /// Between proposals auto-rejected at the `n_max` truncation boundary,
    /// excluded from the audit.
    pub truncated_skipped: usize,
}

/// Checks every recorded acceptance probability against its floor:
/// `exp(-2 eps_s)` within-model, `exp(-(eps_s + eps_n))` between models for
/// `n >= 2` and half that for the forced `1 -> 2` move. Mechanisms outside
/// pure eps-DP make the floors inapplicable.
pub fn acceptance_audit(trace: &Trace, budget: &PrivacyBudget, s_family: NoiseFamily) -> AuditReport {
    let mut report = AuditReport {
        applicable: false,
        note: None,
        within_floor: (-2.0 * budget.epsilon_s).exp(),
        between_floor_interior: (-(budget.epsilon_s + budget.epsilon_n)).exp(),
        between_floor_boundary: 0.5 * (-(budget.epsilon_s + budget.epsilon_n)).exp(),
        within_violations: Vec::new(),
        between_violations: Vec::new(),
        truncated_skipped: 0,
    };
    let Some(log) = trace.acceptance.as_ref() else {
        report.note = Some("no acceptance probabilities recorded".into());
        return report;
    };
    let count_pure = trace.count_family.map_or(true, NoiseFamily::is_pure_dp);
    if !s_family.is_pure_dp() || !count_pure {
        report.note = Some("floor not applicable: mechanism is not pure eps-DP".into());
        return report;
    }
    report.applicable = true;
    const TOL: f64 = 1e-12;
    for (it, &p) in log.within_min_prob.iter().enumerate() {
        if p < report.within_floor - TOL {
            report.within_violations.push((it, p));
        }
    }
    for (it, (&p, &from_n)) in log.between_prob.iter().zip(&log.between_from_n).enumerate() {
        if p.is_nan() {
            report.truncated_skipped += 1;
            continue;
        }
        let floor = if from_n == 1 {
            report.between_floor_boundary
        } else {
            report.between_floor_interior
        };
        if p < floor - TOL {
            report.between_violations.push((it, p));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{NdpValue, NoiseSpec, PrivacyBudget};
    use crate::models::BernoulliModel;
    use crate::rng::seeded_rng;

    fn toy_model(eps_s: f64) -> BernoulliModel {
        BernoulliModel::with_epsilon(1.0, 1.0, NoiseFamily::DiscreteLaplace, eps_s).unwrap()
    }

    fn toy_summary(s: f64, n_dp: i64) -> DpSummary {
        DpSummary { s: vec![s], n_dp: NdpValue::Discrete(n_dp) }
    }

    #[test]
    fn identical_statistic_proposal_is_always_accepted() {
        // With a zero-noise mechanism and matched statistic, any proposal
        // with the same record statistic has acceptance probability 1.
        let p = accept_prob(-3.5, -3.5, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn between_move_with_all_ratios_cancelling_accepts() {
        // flat prior, g ratio 1, eta ratio 1, interior move: probability 1
        let p = accept_prob(-1.0, -1.0, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn within_acceptance_respects_the_dp_floor() {
        let model = toy_model(1.0);
        let mech = CountMechanism::new(NoiseFamily::DiscreteLaplace, 1.0).unwrap();
        let summary = toy_summary(3.0, 5);
        let mut config = SamplerConfig::new(4000, 100, 7, 12);
        config.record_acceptance = true;
        let trace = run_chain(&model, &summary, &mech, &config, None).unwrap();
        let budget = PrivacyBudget::new(1.0, 1.0).unwrap();
        let report = acceptance_audit(&trace, &budget, model.summary_noise_family());
        assert!(report.applicable);
        assert!(
            report.within_violations.is_empty(),
            "within floor violations: {:?}",
            &report.within_violations[..report.within_violations.len().min(5)]
        );
        assert!(
            report.between_violations.is_empty(),
            "between floor violations: {:?}",
            &report.between_violations[..report.between_violations.len().min(5)]
        );
    }

    #[test]
    fn audit_reports_not_applicable_for_gaussian_noise() {
        let model = BernoulliModel::with_epsilon(1.0, 1.0, NoiseFamily::DiscreteGaussian, 1.0)
            .unwrap();
        let mech = CountMechanism::new(NoiseFamily::DiscreteLaplace, 1.0).unwrap();
        let summary = toy_summary(3.0, 5);
        let mut config = SamplerConfig::new(500, 100, 7, 12);
        config.record_acceptance = true;
        let trace = run_chain(&model, &summary, &mech, &config, None).unwrap();
        let budget = PrivacyBudget::new(1.0, 1.0).unwrap();
        let report = acceptance_audit(&trace, &budget, model.summary_noise_family());
        assert!(!report.applicable);
        assert!(report.note.as_deref().unwrap_or("").contains("not applicable"));
    }

    #[test]
    fn bounded_dp_chain_never_moves_n() {
        let model = toy_model(1.0);
        let summary = toy_summary(3.0, 5);
        let config = SamplerConfig::new(2000, 100, 8, 12);
        let trace = run_chain(&model, &summary, &CountMechanism::Exact, &config, None).unwrap();
        assert!(trace.n.iter().all(|&n| n == 5));
        assert!(trace.between_accepted.iter().all(|&a| !a));
    }

    #[test]
    fn default_initialization_starts_at_rounded_ndp() {
        let model = toy_model(1.0);
        let summary = DpSummary { s: vec![3.0], n_dp: NdpValue::Continuous(938.4) };
        let mut rng = seeded_rng(9);
        let state = LatentState::init(&model, &summary, 5000, &mut rng);
        assert_eq!(state.n(), 938);
        // negative release clips to 1
        let summary = DpSummary { s: vec![3.0], n_dp: NdpValue::Continuous(-7.2) };
        let state = LatentState::init(&model, &summary, 5000, &mut rng);
        assert_eq!(state.n(), 1);
    }

    #[test]
    fn initial_n_above_n_max_is_rejected() {
        let model = toy_model(1.0);
        let summary = toy_summary(3.0, 5);
        let mut rng = seeded_rng(10);
        let state = LatentState::init(&model, &summary, 500, &mut rng);
        let config = SamplerConfig::new(100, 10, 11, 3);
        let err = run_chain(&model, &summary, &CountMechanism::Exact, &config, Some(state))
            .unwrap_err();
        assert!(matches!(err, NdpError::InvalidInit(_)));
    }

    #[test]
    fn seed_determinism_is_bit_exact() {
        let model = toy_model(1.0);
        let mech = CountMechanism::new(NoiseFamily::DiscreteLaplace, 1.0).unwrap();
        let summary = toy_summary(2.0, 4);
        let config = SamplerConfig::new(3000, 500, 1234, 10);
        let a = run_chain(&model, &summary, &mech, &config, None).unwrap();
        let b = run_chain(&model, &summary, &mech, &config, None).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.n, b.n);
        assert_eq!(a.between_accepted, b.between_accepted);
        let mut other = config.clone();
        other.seed = 1235;
        let c = run_chain(&model, &summary, &mech, &other, None).unwrap();
        assert_ne!(a.theta, c.theta);
    }

    #[test]
    fn t_drift_stays_negligible() {
        let model = toy_model(1.0);
        let mech = CountMechanism::new(NoiseFamily::DiscreteLaplace, 1.0).unwrap();
        let summary = toy_summary(4.0, 6);
        let mut config = SamplerConfig::new(5000, 100, 21, 14);
        config.t_refresh_period = 250;
        let trace = run_chain(&model, &summary, &mech, &config, None).unwrap();
        assert!(trace.max_t_drift < 1e-8, "drift = {}", trace.max_t_drift);
    }

    #[test]
    fn trace_csv_and_metadata_round_out() {
        let model = toy_model(1.0);
        let mech = CountMechanism::new(NoiseFamily::DiscreteLaplace, 1.0).unwrap();
        let summary = toy_summary(2.0, 3);
        let config = SamplerConfig::new(50, 10, 3, 8);
        let trace = run_chain(&model, &summary, &mech, &config, None).unwrap();
        let mut csv_buf = Vec::new();
        trace.write_csv(&mut csv_buf).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "theta,n,within_accept_rate,between_accept");
        assert_eq!(text.lines().count(), 51);
        let mut meta_buf = Vec::new();
        trace.write_metadata(&mut meta_buf).unwrap();
        let meta: serde_json::Value = serde_json::from_slice(&meta_buf).unwrap();
        assert_eq!(meta["model"], "bernoulli");
        assert_eq!(meta["seed"], 3);
    }

    #[test]
    fn degenerate_zero_noise_mechanism_pins_the_statistic() {
        // With point-mass noise the chain can only move between datasets
        // that reproduce s exactly.
        let noise = NoiseSpec { family: NoiseFamily::DiscreteLaplace, scale: 0.0, sensitivity: 1.0 };
        let model = BernoulliModel::new(1.0, 1.0, noise).unwrap();
        let summary = toy_summary(2.0, 4);
        let mech = CountMechanism::new(NoiseFamily::DiscreteLaplace, 1.0).unwrap();
        let config = SamplerConfig::new(2000, 200, 5, 10);
        let trace = run_chain(&model, &summary, &mech, &config, None).unwrap();
        // after the first accepted move onto the constraint set, every state
        // has sum(x) = 2, so n never drops below 2
        let late = &trace.n[trace.n.len() / 2..];
        assert!(late.iter().all(|&n| n >= 2));
    }
}
