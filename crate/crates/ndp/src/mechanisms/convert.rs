//! Conversions from mainline DP frameworks to the total-variation form
//! (0, delta)-DP. The Renyi conversion goes through its KL bound, so it uses
//! the same min formula as zCDP with the RDP epsilon in place of rho.

use crate::error::{NdpError, Result};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpFramework {
    /// eps-DP; parameter `[eps]`.
    PureEps,
    /// (eps, delta)-DP; parameters `[eps, delta]`.
    ApproxEpsDelta,
    /// mu-Gaussian DP; parameter `[mu]`.
    Gdp,
    /// rho-zero-concentrated DP; parameter `[rho]`.
    Zcdp,
    /// Renyi DP through its KL bound; parameter `[eps]`.
    RenyiKl,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// The delta of the implied (0, delta)-DP guarantee.
pub fn dp_to_tv_delta(framework: DpFramework, params: &[f64]) -> Result<f64> {
    let positive = |name: &str, v: f64| -> Result<f64> {
        if v < 0.0 || v.is_nan() {
            Err(NdpError::InvalidBudget(format!("{name} = {v}")))
        } else {
            Ok(v)
        }
    };
    let delta = match framework {
        DpFramework::PureEps => {
            let [eps] = take_params::<1>(params)?;
            let eps = positive("eps", eps)?;
            // (e^eps - 1)/(e^eps + 1)
            (eps / 2.0).tanh()
        }
        DpFramework::ApproxEpsDelta => {
            let [eps, d] = take_params::<2>(params)?;
            let eps = positive("eps", eps)?;
            let d = positive("delta", d)?;
            if d > 1.0 {
                return Err(NdpError::InvalidBudget(format!("delta = {d}")));
            }
            (2.0 * d + eps.exp() - 1.0) / (eps.exp() + 1.0)
        }
        DpFramework::Gdp => {
            let [mu] = take_params::<1>(params)?;
            let mu = positive("mu", mu)?;
            2.0 * std_normal_cdf(mu / 2.0) - 1.0
        }
        DpFramework::Zcdp => {
            let [rho] = take_params::<1>(params)?;
            let rho = positive("rho", rho)?;
            ((rho / 2.0).sqrt()).min((-(-rho).exp_m1()).sqrt())
        }
        DpFramework::RenyiKl => {
            let [eps] = take_params::<1>(params)?;
            let eps = positive("eps", eps)?;
            ((eps / 2.0).sqrt()).min((-(-eps).exp_m1()).sqrt())
        }
    };
    Ok(delta.clamp(0.0, 1.0))
}

fn take_params<const N: usize>(params: &[f64]) -> Result<[f64; N]> {
    params
        .try_into()
        .map_err(|_| NdpError::InvalidBudget(format!("expected {N} parameters, got {}", params.len())))
}
