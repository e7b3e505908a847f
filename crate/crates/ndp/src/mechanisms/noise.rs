//! Noise distributions used by privacy mechanisms: continuous and discrete
//! Laplace, the discrete Gaussian, and the truncated-Laplace draw produced by
//! the KNG mechanism for a bounded mean.
//!
//! All densities are exposed in log form only; acceptance ratios downstream
//! are computed in log space to survive small privacy budgets. Discrete
//! samplers use inverse-CDF draws; truncation windows are `±ceil(40/eps)`
//! around the mode, which leaves tail mass below `exp(-40)`.

use crate::error::{NdpError, Result};
use crate::rng::{uniform_open, ChainRng};

/// Scale 0 is the degenerate no-noise limit (`eps = inf`): a point mass.
#[inline]
pub fn laplace_log_density(z: f64, scale: f64) -> f64 {
    assert!(scale >= 0.0, "laplace scale must be non-negative");
    if scale == 0.0 {
        return if z == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -(2.0 * scale).ln() - z.abs() / scale
}

/// Inverse-CDF Laplace draw with location 0.
pub fn sample_laplace(scale: f64, rng: &mut ChainRng) -> f64 {
    assert!(scale >= 0.0);
    if scale == 0.0 {
        return 0.0;
    }
    let u = uniform_open(rng) - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Log-pmf of the discrete Laplace on the integers:
/// `pmf(k) = (1-q)/(1+q) * q^|k|` with `q = exp(-eps)`.
#[inline]
pub fn discrete_laplace_log_pmf(k: i64, eps: f64) -> f64 {
    assert!(eps > 0.0, "discrete Laplace requires eps > 0");
    let log_1mq = (-(-eps).exp_m1()).ln(); // ln(1 - e^-eps)
    let log_1pq = (-eps).exp().ln_1p(); // ln(1 + e^-eps)
    log_1mq - log_1pq - eps * k.unsigned_abs() as f64
}

/// Inverse-CDF draw of the two-sided geometric (discrete Laplace).
pub fn sample_discrete_laplace(eps: f64, rng: &mut ChainRng) -> i64 {
    assert!(eps > 0.0);
    let q = (-eps).exp();
    let u = uniform_open(rng);
    let p_side = q / (1.0 + q); // mass of each open half-line
    let magnitude = |v: f64| -> i64 {
        // smallest m >= 1 with 1 - q^m >= v
        let m = ((-(1.0 - v).ln()) / eps).floor() as i64 + 1;
        m.max(1)
    };
    if u < p_side {
        -magnitude(u / p_side)
    } else if u < 1.0 - p_side {
        0
    } else {
        magnitude((u - (1.0 - p_side)) / p_side)
    }
}

/// Unnormalized log-weight of the discrete Gaussian family, `-(eps^2/2) k^2`.
#[inline]
pub fn discrete_gaussian_log_weight(k: i64, eps: f64) -> f64 {
    assert!(eps > 0.0, "discrete Gaussian requires eps > 0");
    let kf = k as f64;
    -0.5 * eps * eps * kf * kf
}

/// Half-width of the truncation window used by discrete samplers and
/// normalizations; excluded tail mass is below `exp(-40)`.
#[inline]
pub fn truncation_half_width(eps: f64) -> u64 {
    assert!(eps > 0.0);
    ((40.0 / eps).ceil() as u64).max(1)
}

/// Log normalizing constant of the discrete Gaussian, summed over the
/// truncation window.
pub fn discrete_gaussian_log_norm(eps: f64) -> f64 {
    let w = truncation_half_width(eps) as i64;
    let mut sum = 1.0; // k = 0
    for k in 1..=w {
        sum += 2.0 * discrete_gaussian_log_weight(k, eps).exp();
    }
    sum.ln()
}

/// Normalized log-pmf of the discrete Gaussian.
pub fn discrete_gaussian_log_pmf(k: i64, eps: f64) -> f64 {
    discrete_gaussian_log_weight(k, eps) - discrete_gaussian_log_norm(eps)
}

/// Inverse-CDF draw of the discrete Gaussian over its truncation window.
pub fn sample_discrete_gaussian(eps: f64, rng: &mut ChainRng) -> i64 {
    let w = truncation_half_width(eps) as i64;
    let norm = discrete_gaussian_log_norm(eps).exp();
    let u = uniform_open(rng) * norm;
    let mut acc = 0.0;
    for k in -w..=w {
        acc += discrete_gaussian_log_weight(k, eps).exp();
        if acc >= u {
            return k;
        }
    }
    w
}

/// CDF of the Laplace(center, scale) truncated to `[lo, hi]`.
pub fn truncated_laplace_cdf(x: f64, center: f64, scale: f64, lo: f64, hi: f64) -> f64 {
    assert!(lo < hi && scale > 0.0);
    let plain = |t: f64| -> f64 {
        let z = (t - center) / scale;
        if z < 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    };
    let (flo, fhi) = (plain(lo), plain(hi));
    if x <= lo {
        0.0
    } else if x >= hi {
        1.0
    } else {
        (plain(x) - flo) / (fhi - flo)
    }
}

/// Inverse CDF of the Laplace(center, scale) truncated to `[lo, hi]`.
pub fn truncated_laplace_inv_cdf(u: f64, center: f64, scale: f64, lo: f64, hi: f64) -> f64 {
    assert!(lo < hi && scale > 0.0);
    assert!((0.0..=1.0).contains(&u));
    let plain = |t: f64| -> f64 {
        let z = (t - center) / scale;
        if z < 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    };
    let (flo, fhi) = (plain(lo), plain(hi));
    let p = flo + u * (fhi - flo);
    let x = if p < 0.5 {
        center + scale * (2.0 * p).ln()
    } else {
        center - scale * (2.0 * (1.0 - p)).ln()
    };
    x.clamp(lo, hi)
}

/// Draws the K-Norm-Gradient release of a bounded sample mean:
/// `s ~ Laplace_[0,1](xbar, 2/(n*eps))` via the inverse CDF.
pub fn kng_mean_sample(xbar: f64, n: u64, eps: f64, rng: &mut ChainRng) -> Result<f64> {
    if !(0.0..=1.0).contains(&xbar) {
        return Err(NdpError::InvalidStatistic(format!(
            "KNG mean statistic {xbar} outside [0, 1]"
        )));
    }
    if n == 0 || eps <= 0.0 {
        return Err(NdpError::InvalidBudget(format!(
            "KNG requires n >= 1 and eps > 0 (got n={n}, eps={eps})"
        )));
    }
    let scale = 2.0 / (n as f64 * eps);
    Ok(truncated_laplace_inv_cdf(
        uniform_open(rng),
        xbar,
        scale,
        0.0,
        1.0,
    ))
}
