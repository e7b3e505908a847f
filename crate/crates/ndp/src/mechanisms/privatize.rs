//! Clamping, sensitivity calculators, and the one-shot privatization of the
//! regression and compositional summary statistics.

use super::noise::sample_laplace;
use super::{DpSummary, NdpValue, PrivacyBudget};
use crate::error::{NdpError, Result};
use crate::rng::ChainRng;

/// Clamp `x` into `[lo, hi]` and rescale affinely onto `[-1, 1]`.
pub fn clamp_normalize(x: f64, lo: f64, hi: f64) -> Result<f64> {
    Ok(ClampMap::new(lo, hi)?.apply(x))
}

/// A validated clamp-normalize map `f(x; L, U) = 2([x]_L^U - L)/(U - L) - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampMap {
    lo: f64,
    hi: f64,
}

impl ClampMap {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(NdpError::InvalidBounds { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        let clamped = x.clamp(self.lo, self.hi);
        2.0 * (clamped - self.lo) / (self.hi - self.lo) - 1.0
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// l1 sensitivity of the unique clamped cross-product entries under
/// add/delete adjacency: `p^2/2 + (5/2) p + 2`, equivalently the count
/// `p + p + C(p,2) + p + 1 + 1` of unique entries, each with sensitivity 1.
pub fn regression_sensitivity(p: usize) -> Result<f64> {
    if p == 0 {
        return Err(NdpError::Unsupported("regression needs at least one covariate".into()));
    }
    let pf = p as f64;
    Ok(pf * pf / 2.0 + 2.5 * pf + 2.0)
}

/// Number of released summary components for `p` covariates.
pub fn regression_summary_dim(p: usize) -> usize {
    3 * p + p * (p - 1) / 2 + 2
}

/// Largest supported number of covariates; keeps per-record buffers on the
/// stack in the sampler's inner loop.
pub const MAX_COVARIATES: usize = 32;

/// Per-record contribution to the regression summary: clamped-normalized
/// `[x_j, x_j^2, x_j x_k (j<k), x_j y, y, y^2]`. Every component lies in
/// `[-1, 1]`, and the noise-free summary is the sum of these over records.
pub fn regression_record_statistic_into(clamp: &ClampMap, x: &[f64], y: f64, out: &mut [f64]) {
    let p = x.len();
    debug_assert!(p <= MAX_COVARIATES);
    debug_assert_eq!(out.len(), regression_summary_dim(p));
    let mut xt = [0.0f64; MAX_COVARIATES];
    for j in 0..p {
        xt[j] = clamp.apply(x[j]);
    }
    let yt = clamp.apply(y);
    let mut idx = 0;
    for j in 0..p {
        out[idx] = xt[j];
        idx += 1;
    }
    for j in 0..p {
        out[idx] = xt[j] * xt[j];
        idx += 1;
    }
    for j in 0..p {
        for k in (j + 1)..p {
            out[idx] = xt[j] * xt[k];
            idx += 1;
        }
    }
    for j in 0..p {
        out[idx] = xt[j] * yt;
        idx += 1;
    }
    out[idx] = yt;
    out[idx + 1] = yt * yt;
}

pub fn regression_record_statistic(clamp: &ClampMap, x: &[f64], y: f64) -> Vec<f64> {
    let mut out = vec![0.0; regression_summary_dim(x.len())];
    regression_record_statistic_into(clamp, x, y, &mut out);
    out
}

/// Privatizes the unique entries of the clamped cross-products (count cell
/// excluded) with iid Laplace(0, Delta/eps_s) noise, and the sample size with
/// Laplace(0, 1/eps_n). `eps_s = inf` or `eps_n = inf` yield noise-free
/// releases, used by tests to recover the true statistic.
pub fn privatize_regression_summaries(
    x_rows: &[Vec<f64>],
    y: &[f64],
    lo: f64,
    hi: f64,
    budget: &PrivacyBudget,
    rng: &mut ChainRng,
) -> Result<DpSummary> {
    if x_rows.is_empty() || x_rows.len() != y.len() {
        return Err(NdpError::InvalidInput(format!(
            "need matching non-empty X ({} rows) and Y ({} rows)",
            x_rows.len(),
            y.len()
        )));
    }
    let p = x_rows[0].len();
    if p == 0 || x_rows.iter().any(|r| r.len() != p) {
        return Err(NdpError::InvalidInput("ragged or empty covariate rows".into()));
    }
    if p > MAX_COVARIATES {
        return Err(NdpError::Unsupported(format!(
            "at most {MAX_COVARIATES} covariates supported, got {p}"
        )));
    }
    let clamp = ClampMap::new(lo, hi)?;
    let d = regression_summary_dim(p);
    let mut s = vec![0.0; d];
    let mut record = vec![0.0; d];
    for (row, &yi) in x_rows.iter().zip(y) {
        regression_record_statistic_into(&clamp, row, yi, &mut record);
        for (acc, r) in s.iter_mut().zip(&record) {
            *acc += r;
        }
    }
    let scale = if budget.epsilon_s.is_infinite() {
        0.0
    } else {
        regression_sensitivity(p)? / budget.epsilon_s
    };
    for v in s.iter_mut() {
        *v += sample_laplace(scale, rng);
    }
    let n = x_rows.len() as u64;
    let n_dp = if budget.bounded_dp() {
        NdpValue::Discrete(n as i64)
    } else {
        NdpValue::Continuous(n as f64 + sample_laplace(1.0 / budget.epsilon_n, rng))
    };
    Ok(DpSummary { s, n_dp })
}

/// Per-record contribution to the compositional summary: floor-clamped logs
/// `[log [x_1]_a^1, log [x_2]_a^1, log [x_3]_a^1]`, each in `[log a, 0]`.
pub fn dirichlet_record_statistic_into(row: &[f64; 3], floor_a: f64, out: &mut [f64]) {
    debug_assert!(out.len() == 3);
    for j in 0..3 {
        out[j] = row[j].clamp(floor_a, 1.0).ln();
    }
}

pub fn dirichlet_record_statistic(row: &[f64; 3], floor_a: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    dirichlet_record_statistic_into(row, floor_a, &mut out);
    out
}

/// Sums the floor-clamped log-compositions and adds iid
/// Laplace(0, -3 log(a)/eps_s) noise per coordinate. The l1 sensitivity of
/// the 3-vector under add/delete adjacency is `3 |log a|`.
pub fn privatize_dirichlet_summaries(
    rows: &[[f64; 3]],
    floor_a: f64,
    epsilon_s: f64,
    rng: &mut ChainRng,
) -> Result<[f64; 3]> {
    if !(floor_a > 0.0 && floor_a < 1.0) {
        return Err(NdpError::InvalidFloor(floor_a));
    }
    if !(epsilon_s > 0.0) {
        return Err(NdpError::InvalidBudget(format!("epsilon_s = {epsilon_s}")));
    }
    for (i, row) in rows.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(NdpError::InvalidInput(format!(
                "row {i} sums to {total}, not 1"
            )));
        }
    }
    let mut s = [0.0f64; 3];
    let mut record = [0.0f64; 3];
    for row in rows {
        dirichlet_record_statistic_into(row, floor_a, &mut record);
        for j in 0..3 {
            s[j] += record[j];
        }
    }
    let scale = if epsilon_s.is_infinite() {
        0.0
    } else {
        -3.0 * floor_a.ln() / epsilon_s
    };
    for v in s.iter_mut() {
        *v += sample_laplace(scale, rng);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use proptest::prelude::*;

    #[test]
    fn clamp_normalize_reference_values() {
        assert_eq!(clamp_normalize(0.0, -5.0, 5.0).unwrap(), 0.0);
        assert_eq!(clamp_normalize(7.0, -5.0, 5.0).unwrap(), 1.0);
        assert_eq!(clamp_normalize(-9.0, -5.0, 5.0).unwrap(), -1.0);
        // 2 * 5.5 / 10 - 1 = 0.1
        assert!((clamp_normalize(0.5, -5.0, 5.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(clamp_normalize(0.0, 1.0, 1.0).is_err());
        assert!(clamp_normalize(0.0, 2.0, -2.0).is_err());
    }

    proptest! {
        #[test]
        fn clamp_is_monotone_and_bounded(a in -100.0f64..100.0, b in -100.0f64..100.0) {
            let clamp = ClampMap::new(-5.0, 5.0).unwrap();
            let (fa, fb) = (clamp.apply(a), clamp.apply(b));
            prop_assert!((-1.0..=1.0).contains(&fa));
            if a <= b {
                prop_assert!(fa <= fb);
            }
        }

        #[test]
        fn clamp_is_idempotent_after_first_application(x in -50.0f64..50.0) {
            // the image [-1,1] is a fixed set of the map with bounds [-1,1]
            let outer = ClampMap::new(-1.0, 1.0).unwrap();
            let once = outer.apply(ClampMap::new(-5.0, 5.0).unwrap().apply(x));
            let twice = outer.apply(once);
            prop_assert!((once - twice).abs() < 1e-15);
        }

        #[test]
        fn clamp_is_lipschitz_inside_bounds(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let clamp = ClampMap::new(-5.0, 5.0).unwrap();
            let lhs = (clamp.apply(a) - clamp.apply(b)).abs();
            prop_assert!(lhs <= 2.0 / 10.0 * (a - b).abs() + 1e-12);
        }
    }

    #[test]
    fn sensitivity_closed_form_matches_category_count() {
        assert_eq!(regression_sensitivity(2).unwrap(), 9.0);
        assert_eq!(regression_sensitivity(1).unwrap(), 5.0);
        assert_eq!(regression_sensitivity(3).unwrap(), 14.0);
        assert!(regression_sensitivity(0).is_err());
        for p in 1..=10usize {
            let by_category = p + p + p * (p - 1) / 2 + p + 1 + 1;
            assert_eq!(regression_sensitivity(p).unwrap(), by_category as f64);
            assert_eq!(regression_summary_dim(p), by_category);
        }
    }

    #[test]
    fn zero_noise_regression_summary_recovers_truth() {
        let mut rng = seeded_rng(3);
        let x = vec![vec![9.0, 9.0]]; // clamps to (1, 1)
        let y = vec![9.0]; // clamps to 1
        let budget = PrivacyBudget::new(f64::INFINITY, f64::INFINITY).unwrap();
        let released = privatize_regression_summaries(&x, &y, -5.0, 5.0, &budget, &mut rng)
            .unwrap();
        assert_eq!(released.s.len(), 9);
        for v in &released.s {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert_eq!(released.n_dp, NdpValue::Discrete(1));
    }

    #[test]
    fn regression_noise_scale_is_sensitivity_over_epsilon() {
        // With eps_s = 1 and p = 2 the Laplace scale is 9; check the spread of
        // repeated releases of a zero summary against the known variance 2b^2.
        let mut rng = seeded_rng(4);
        let x = vec![vec![0.0, 0.0]];
        let y = vec![0.0];
        let budget = PrivacyBudget::new(1.0, f64::INFINITY).unwrap();
        let reps = 20_000;
        let mut acc = 0.0;
        for _ in 0..reps {
            let rel =
                privatize_regression_summaries(&x, &y, -5.0, 5.0, &budget, &mut rng).unwrap();
            acc += rel.s[0] * rel.s[0];
        }
        let var = acc / reps as f64;
        let expected = 2.0 * 9.0 * 9.0;
        assert!(
            (var - expected).abs() < 0.1 * expected,
            "var={var} expected={expected}"
        );
    }

    #[test]
    fn privatize_rejects_bad_input() {
        let mut rng = seeded_rng(5);
        let budget = PrivacyBudget::new(1.0, 1.0).unwrap();
        assert!(privatize_regression_summaries(&[], &[], -5.0, 5.0, &budget, &mut rng).is_err());
        let x = vec![vec![1.0, 2.0]];
        assert!(
            privatize_regression_summaries(&x, &[1.0, 2.0], -5.0, 5.0, &budget, &mut rng)
                .is_err()
        );
    }

    #[test]
    fn dirichlet_single_record_zero_noise() {
        let mut rng = seeded_rng(6);
        let third = 1.0 / 3.0;
        let rows = [[third, third, third]];
        let s = privatize_dirichlet_summaries(&rows, 0.0006, f64::INFINITY, &mut rng).unwrap();
        for v in s {
            assert!((v - third.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_floor_clamps_tiny_coordinates() {
        let a = 0.01;
        let row = [0.001, 0.499, 0.5];
        let t = dirichlet_record_statistic(&row, a);
        assert!((t[0] - a.ln()).abs() < 1e-15);
        for v in t {
            assert!(v <= 0.0 && v >= a.ln());
        }
    }

    #[test]
    fn dirichlet_sensitivity_and_scale() {
        // worst-case per-record l1 change is 3 |log a|
        let a: f64 = 0.0006;
        let hi = dirichlet_record_statistic(&[1.0, 0.0, 0.0], a);
        let lo = dirichlet_record_statistic(&[0.0, 1.0, 0.0], a);
        let l1: f64 = hi.iter().zip(&lo).map(|(x, y)| (x - y).abs()).sum();
        assert!(l1 <= 3.0 * a.ln().abs() + 1e-12);
        // quoted scale for a = 0.0006, eps_s = 1
        assert!((-3.0 * a.ln() - 22.26).abs() < 0.01);
    }

    #[test]
    fn dirichlet_rejects_bad_floor_and_rows() {
        let mut rng = seeded_rng(7);
        let rows = [[0.2, 0.3, 0.5]];
        assert!(privatize_dirichlet_summaries(&rows, 1.5, 1.0, &mut rng).is_err());
        assert!(privatize_dirichlet_summaries(&rows, 0.0, 1.0, &mut rng).is_err());
        let bad = [[0.2, 0.3, 0.6]];
        assert!(privatize_dirichlet_summaries(&bad, 0.01, 1.0, &mut rng).is_err());
    }
}
