//! Small numeric helpers shared across modules.

/// Log of the sum of exponentials, stable against underflow. Returns
/// `f64::NEG_INFINITY` for an empty slice or all-(-inf) input.
pub fn log_sum_exp(log_terms: &[f64]) -> f64 {
    let m = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = log_terms.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Sample mean; 0 for empty input.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 when fewer than two points.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Kendall's tau rank correlation (tau-a). Ties count as neither concordant
/// nor discordant. NaN when fewer than two points.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let mut num = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let sx = (xs[j] - xs[i]).signum();
            let sy = (ys[j] - ys[i]).signum();
            num += (sx * sy) as i64;
        }
    }
    num as f64 / (n * (n - 1) / 2) as f64
}

/// Effective sample size by the initial-positive-sequence estimator on the
/// autocovariances of a single chain. Clamped to `xs.len()`.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let c0: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let acov = |lag: usize| -> f64 {
        xs[..n - lag]
            .iter()
            .zip(&xs[lag..])
            .map(|(a, b)| (a - m) * (b - m))
            .sum::<f64>()
            / n as f64
    };
    let mut sum_rho = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = (acov(lag) + acov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        sum_rho += pair;
        lag += 2;
    }
    let ess = n as f64 / (1.0 + 2.0 * sum_rho);
    ess.min(n as f64).max(1.0)
}

/// Standard error of the mean of a correlated sequence, via ESS.
pub fn mc_standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    (variance(xs) / effective_sample_size(xs)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_naive_on_moderate_values() {
        let terms: [f64; 3] = [-1.0, -2.0, -0.5];
        let naive: f64 = terms.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&terms) - naive).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let shifted = log_sum_exp(&[-1000.0, -1001.0]);
        assert!((shifted - (-1000.0 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-12);
    }

    #[test]
    fn kendall_tau_detects_monotone_sequences() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[0.3, 0.2, 0.1]), -1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[5.0, 6.0, 9.0]), 1.0);
    }

    #[test]
    fn ess_of_iid_sequence_is_near_n() {
        let mut rng = crate::rng::seeded_rng(3);
        let xs: Vec<f64> = (0..4000).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 2000.0, "ess={ess}");
    }
}
