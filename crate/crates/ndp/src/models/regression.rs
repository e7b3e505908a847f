//! Bayesian linear regression with Gaussian covariates:
//! `y_i | x_i ~ N((1, x_i)' beta, 1/tau)`, `x_i ~ N_p(mu, Phi^{-1})`, with
//! conjugate priors `beta | tau ~ N(m, (tau V)^{-1})`,
//! `tau ~ Gamma(a/2, b/2)` (shape-rate), `mu ~ N(theta0, Sigma)` and
//! `Phi ~ Wishart_p(d, W)`.
//!
//! The released summary is the vector of unique entries of the clamped
//! cross-products (count cell excluded) plus iid Laplace noise with scale
//! `Delta/eps_s`. Clamping applies only to the summary statistic; the data
//! model itself is for the raw, unclamped Gaussian records.

use super::{Model, SuffStats, ThetaUpdateKind};
use crate::error::{NdpError, Result};
use crate::mechanisms::{
    regression_record_statistic_into, regression_sensitivity, regression_summary_dim, ClampMap,
    NoiseFamily, MAX_COVARIATES,
};
use crate::rng::ChainRng;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

const LN_2PI: f64 = 1.8378770664093453;

/// Hyperparameters `(m, V, a, b, theta0, Sigma, d, W)` plus the clamp bounds
/// `[L, U]` used by the summary mechanism.
#[derive(Debug, Clone)]
pub struct RegressionHyper {
    pub m: DVector<f64>,
    pub v: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
    pub theta0: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub d: f64,
    pub w: DMatrix<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl RegressionHyper {
    /// Identity-scale hyperparameters for `p` covariates: `m = 0`,
    /// `V = I`, `a = b = 2`, `theta0 = 0`, `Sigma = I`, `d = p`, `W = I`.
    pub fn unit(p: usize, lo: f64, hi: f64) -> Self {
        Self {
            m: DVector::zeros(p + 1),
            v: DMatrix::identity(p + 1, p + 1),
            a: 2.0,
            b: 2.0,
            theta0: DVector::zeros(p),
            sigma: DMatrix::identity(p, p),
            d: p as f64,
            w: DMatrix::identity(p, p),
            lo,
            hi,
        }
    }

    /// Builds from row-major nested arrays, as read from config files.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        m: Vec<f64>,
        v: Vec<Vec<f64>>,
        a: f64,
        b: f64,
        theta0: Vec<f64>,
        sigma: Vec<Vec<f64>>,
        d: f64,
        w: Vec<Vec<f64>>,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        Ok(Self {
            m: DVector::from_vec(m),
            v: matrix_from_rows(v)?,
            a,
            b,
            theta0: DVector::from_vec(theta0),
            sigma: matrix_from_rows(sigma)?,
            d,
            w: matrix_from_rows(w)?,
            lo,
            hi,
        })
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.m.len() != p + 1 || self.theta0.len() != p {
            return Err(NdpError::InvalidInput("hyperparameter dimensions disagree with p".into()));
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(NdpError::InvalidInput("Gamma hyperparameters must be positive".into()));
        }
        if !(self.d > p as f64 - 1.0) {
            return Err(NdpError::InvalidInput(format!(
                "Wishart degrees of freedom {} must exceed p - 1",
                self.d
            )));
        }
        if !(self.lo < self.hi) {
            return Err(NdpError::InvalidBounds { lo: self.lo, hi: self.hi });
        }
        for (name, mat, dim) in [
            ("V", &self.v, p + 1),
            ("Sigma", &self.sigma, p),
            ("W", &self.w, p),
        ] {
            if mat.nrows() != dim || mat.ncols() != dim {
                return Err(NdpError::InvalidInput(format!("{name} must be {dim}x{dim}")));
            }
            spd_cholesky(mat).map_err(|_| {
                NdpError::InvalidInput(format!("{name} must be symmetric positive-definite"))
            })?;
        }
        Ok(())
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if r == 0 || rows.iter().any(|row| row.len() != rows[0].len()) {
        return Err(NdpError::InvalidInput("matrix rows must be non-empty and rectangular".into()));
    }
    let c = rows[0].len();
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn spd_cholesky(mat: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = mat.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-10 {
                return Err(NdpError::NumericBreakdown("matrix is not symmetric".into()));
            }
        }
    }
    Cholesky::new(mat.clone())
        .ok_or_else(|| NdpError::NumericBreakdown("Cholesky factorization failed".into()))
}

/// Model parameters `(beta, tau, mu, Phi)` with cached factorizations of the
/// covariate precision.
#[derive(Debug, Clone)]
pub struct RegressionParams {
    pub beta: DVector<f64>,
    pub tau: f64,
    pub mu: DVector<f64>,
    pub phi: DMatrix<f64>,
    phi_chol_l: DMatrix<f64>,
    phi_log_det: f64,
    phi_inv: DMatrix<f64>,
}

impl RegressionParams {
    pub fn new(beta: DVector<f64>, tau: f64, mu: DVector<f64>, phi: DMatrix<f64>) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(NdpError::NumericBreakdown(format!("tau = {tau} must be positive")));
        }
        let chol = spd_cholesky(&phi)?;
        let l = chol.l();
        let phi_log_det = 2.0 * (0..phi.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
        let phi_inv = chol.inverse();
        Ok(Self { beta, tau, mu, phi, phi_chol_l: l, phi_log_det, phi_inv })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }
}

/// One data record: raw covariates and response.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRecord {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct RegressionModel {
    p: usize,
    hyper: RegressionHyper,
    epsilon_s: f64,
    noise_scale: f64,
    clamp: ClampMap,
    // cached prior quantities used by the conjugate updates
    sigma_inv: DMatrix<f64>,
    sigma_inv_theta0: DVector<f64>,
    sigma_chol_l: DMatrix<f64>,
    w_inv: DMatrix<f64>,
    v_chol_l: DMatrix<f64>,
    v_m: DVector<f64>,
    m_v_m: f64,
}

impl RegressionModel {
    /// `epsilon_s = inf` gives the noise-free mechanism used in tests.
    pub fn new(p: usize, hyper: RegressionHyper, epsilon_s: f64) -> Result<Self> {
        if p == 0 || p > MAX_COVARIATES {
            return Err(NdpError::Unsupported(format!(
                "need 1..={MAX_COVARIATES} covariates, got {p}"
            )));
        }
        if !(epsilon_s > 0.0) {
            return Err(NdpError::InvalidBudget(format!("epsilon_s = {epsilon_s}")));
        }
        hyper.validate(p)?;
        let noise_scale = if epsilon_s.is_infinite() {
            0.0
        } else {
            regression_sensitivity(p)? / epsilon_s
        };
        let clamp = ClampMap::new(hyper.lo, hyper.hi)?;
        let sigma_chol = spd_cholesky(&hyper.sigma)?;
        let sigma_inv = sigma_chol.inverse();
        let sigma_inv_theta0 = &sigma_inv * &hyper.theta0;
        let sigma_chol_l = sigma_chol.l();
        let w_inv = spd_cholesky(&hyper.w)?.inverse();
        let v_chol_l = spd_cholesky(&hyper.v)?.l();
        let v_m = &hyper.v * &hyper.m;
        let m_v_m = hyper.m.dot(&v_m);
        Ok(Self {
            p,
            hyper,
            epsilon_s,
            noise_scale,
            clamp,
            sigma_inv,
            sigma_inv_theta0,
            sigma_chol_l,
            w_inv,
            v_chol_l,
            v_m,
            m_v_m,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn hyper(&self) -> &RegressionHyper {
        &self.hyper
    }

    pub fn epsilon_s(&self) -> f64 {
        self.epsilon_s
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    fn std_normal_vec(dim: usize, rng: &mut ChainRng) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
    }

    /// Draw from `N(mean, P^{-1})` given the Cholesky lower factor of the
    /// precision `P = L L'`.
    fn normal_from_precision_chol(
        mean: &DVector<f64>,
        l: &DMatrix<f64>,
        rng: &mut ChainRng,
    ) -> DVector<f64> {
        let z = Self::std_normal_vec(mean.len(), rng);
        let u = l
            .transpose()
            .solve_upper_triangular(&z)
            .expect("triangular solve on a Cholesky factor");
        mean + u
    }

    /// Bartlett draw from `Wishart_p(df, scale)` given `scale = L L'`.
    fn wishart_from_chol(df: f64, scale_l: &DMatrix<f64>, rng: &mut ChainRng) -> Result<DMatrix<f64>> {
        let p = scale_l.nrows();
        let mut a = DMatrix::zeros(p, p);
        for i in 0..p {
            let chi = ChiSquared::new(df - i as f64)
                .map_err(|e| NdpError::NumericBreakdown(format!("Wishart df: {e}")))?;
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let la = scale_l * a;
        Ok(&la * la.transpose())
    }

    fn draw_mu_phi(
        &self,
        phi_current: &DMatrix<f64>,
        data: &[RegressionRecord],
        rng: &mut ChainRng,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = data.len();
        // mu | Phi, x
        let mu = if n == 0 {
            &self.hyper.theta0 + &self.sigma_chol_l * Self::std_normal_vec(self.p, rng)
        } else {
            let mut sum_x = DVector::zeros(self.p);
            for rec in data {
                for j in 0..self.p {
                    sum_x[j] += rec.x[j];
                }
            }
            let precision = &self.sigma_inv + phi_current * n as f64;
            let h = &self.sigma_inv_theta0 + phi_current * sum_x;
            let chol = spd_cholesky(&precision)?;
            let mean = chol.solve(&h);
            Self::normal_from_precision_chol(&mean, &chol.l(), rng)
        };
        // Phi | mu, x
        let mut s_mu = self.w_inv.clone();
        for rec in data {
            let d = DVector::from_fn(self.p, |j, _| rec.x[j] - mu[j]);
            s_mu += &d * d.transpose();
        }
        let scale = spd_cholesky(&s_mu)?.inverse();
        let scale_l = spd_cholesky(&scale)?.l();
        let phi = Self::wishart_from_chol(self.hyper.d + n as f64, &scale_l, rng)?;
        Ok((mu, phi))
    }

    fn draw_beta_tau(
        &self,
        data: &[RegressionRecord],
        rng: &mut ChainRng,
    ) -> Result<(DVector<f64>, f64)> {
        let n = data.len();
        let q = self.p + 1;
        let mut v_n = self.hyper.v.clone();
        let mut rhs = self.v_m.clone();
        let mut yy = 0.0;
        for rec in data {
            let mut a_row = vec![1.0; q];
            a_row[1..].copy_from_slice(&rec.x);
            for i in 0..q {
                for j in 0..q {
                    v_n[(i, j)] += a_row[i] * a_row[j];
                }
                rhs[i] += a_row[i] * rec.y;
            }
            yy += rec.y * rec.y;
        }
        let chol = spd_cholesky(&v_n)?;
        let m_n = chol.solve(&rhs);
        let a_n = self.hyper.a + n as f64;
        let b_n = self.hyper.b + yy + self.m_v_m - m_n.dot(&(&v_n * &m_n));
        if !(b_n > 0.0) {
            return Err(NdpError::NumericBreakdown(format!("posterior rate b_n = {b_n}")));
        }
        let tau = Gamma::new(a_n / 2.0, 2.0 / b_n)
            .map_err(|e| NdpError::NumericBreakdown(format!("Gamma draw: {e}")))?
            .sample(rng);
        if !(tau > 0.0) {
            return Err(NdpError::NumericBreakdown(format!("tau draw = {tau}")));
        }
        // beta | tau ~ N(m_n, (tau V_n)^{-1})
        let z = Self::std_normal_vec(q, rng);
        let u = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("triangular solve on a Cholesky factor");
        let beta = &m_n + u / tau.sqrt();
        Ok((beta, tau))
    }

    /// Analytic posterior mean of beta on fixed data (conjugate formula),
    /// used as an oracle in tests.
    pub fn posterior_beta_mean(&self, data: &[RegressionRecord]) -> Result<DVector<f64>> {
        let q = self.p + 1;
        let mut v_n = self.hyper.v.clone();
        let mut rhs = self.v_m.clone();
        for rec in data {
            let mut a_row = vec![1.0; q];
            a_row[1..].copy_from_slice(&rec.x);
            for i in 0..q {
                for j in 0..q {
                    v_n[(i, j)] += a_row[i] * a_row[j];
                }
                rhs[i] += a_row[i] * rec.y;
            }
        }
        Ok(spd_cholesky(&v_n)?.solve(&rhs))
    }
}

impl Model for RegressionModel {
    type Theta = RegressionParams;
    type Datum = RegressionRecord;

    fn name(&self) -> &'static str {
        "regression"
    }

    fn summary_dim(&self) -> usize {
        regression_summary_dim(self.p)
    }

    fn summary_noise_family(&self) -> NoiseFamily {
        NoiseFamily::ContinuousLaplace
    }

    fn sample_prior(&self, rng: &mut ChainRng) -> RegressionParams {
        let tau = Gamma::new(self.hyper.a / 2.0, 2.0 / self.hyper.b).unwrap().sample(rng);
        let z = Self::std_normal_vec(self.p + 1, rng);
        let u = self
            .v_chol_l
            .transpose()
            .solve_upper_triangular(&z)
            .expect("triangular solve on a Cholesky factor");
        let beta = &self.hyper.m + u / tau.sqrt();
        let mu = &self.hyper.theta0 + &self.sigma_chol_l * Self::std_normal_vec(self.p, rng);
        let w_chol_l = spd_cholesky(&self.hyper.w).unwrap().l();
        let phi = Self::wishart_from_chol(self.hyper.d, &w_chol_l, rng).unwrap();
        RegressionParams::new(beta, tau, mu, phi).expect("prior draw is valid")
    }

    fn sample_datum(&self, theta: &RegressionParams, rng: &mut ChainRng) -> RegressionRecord {
        let z = Self::std_normal_vec(self.p, rng);
        let u = theta
            .phi_chol_l
            .transpose()
            .solve_upper_triangular(&z)
            .expect("triangular solve on a Cholesky factor");
        let mut x = vec![0.0; self.p];
        let mut mean_y = theta.beta[0];
        for j in 0..self.p {
            x[j] = theta.mu[j] + u[j];
            mean_y += theta.beta[j + 1] * x[j];
        }
        let noise: f64 = StandardNormal.sample(rng);
        RegressionRecord { x, y: mean_y + noise / theta.tau.sqrt() }
    }

    fn log_datum_density(&self, rec: &RegressionRecord, theta: &RegressionParams) -> f64 {
        let p = self.p;
        let mut resid = rec.y - theta.beta[0];
        for j in 0..p {
            resid -= theta.beta[j + 1] * rec.x[j];
        }
        let y_part = 0.5 * theta.tau.ln() - 0.5 * LN_2PI - 0.5 * theta.tau * resid * resid;
        let mut quad = 0.0;
        for i in 0..p {
            for j in 0..p {
                quad += (rec.x[i] - theta.mu[i]) * theta.phi[(i, j)] * (rec.x[j] - theta.mu[j]);
            }
        }
        let x_part = 0.5 * theta.phi_log_det - 0.5 * p as f64 * LN_2PI - 0.5 * quad;
        y_part + x_part
    }

    fn theta_update_kind(&self) -> ThetaUpdateKind {
        ThetaUpdateKind::ExactConditional
    }

    fn update_theta(
        &self,
        current: &RegressionParams,
        data: &[RegressionRecord],
        rng: &mut ChainRng,
    ) -> Result<RegressionParams> {
        let (mu, phi) = self.draw_mu_phi(&current.phi, data, rng)?;
        let (beta, tau) = self.draw_beta_tau(data, rng)?;
        RegressionParams::new(beta, tau, mu, phi)
    }

    fn record_statistic_into(&self, _s: &[f64], rec: &RegressionRecord, out: &mut [f64]) {
        regression_record_statistic_into(&self.clamp, &rec.x, rec.y, out);
    }

    fn summary_loglik(&self, s: &[f64], t_x: &[f64]) -> f64 {
        let b = self.noise_scale;
        if b == 0.0 {
            let exact = s.iter().zip(t_x).all(|(a, c)| a == c);
            return if exact { 0.0 } else { f64::NEG_INFINITY };
        }
        let mut abs_sum = 0.0;
        for (a, c) in s.iter().zip(t_x) {
            abs_sum += (a - c).abs();
        }
        -(s.len() as f64) * (2.0 * b).ln() - abs_sum / b
    }

    fn theta_names(&self) -> Vec<String> {
        let p = self.p;
        let mut names: Vec<String> = (0..=p).map(|j| format!("beta{j}")).collect();
        names.push("tau".into());
        names.extend((1..=p).map(|j| format!("mu{j}")));
        for i in 1..=p {
            for j in i..=p {
                names.push(format!("phi{i}{j}"));
            }
        }
        names
    }

    fn theta_to_vec(&self, theta: &RegressionParams) -> Vec<f64> {
        let p = self.p;
        let mut out = Vec::with_capacity((p + 1) + 1 + p + p * (p + 1) / 2);
        out.extend(theta.beta.iter().copied());
        out.push(theta.tau);
        out.extend(theta.mu.iter().copied());
        for i in 0..p {
            for j in i..p {
                out.push(theta.phi[(i, j)]);
            }
        }
        out
    }

    fn unconstrained_dim(&self) -> usize {
        let p = self.p;
        (p + 1) + 1 + p + p * (p + 1) / 2
    }

    fn theta_to_unconstrained(&self, theta: &RegressionParams) -> Vec<f64> {
        let p = self.p;
        let mut out = Vec::with_capacity(self.unconstrained_dim());
        out.extend(theta.beta.iter().copied());
        out.push(theta.tau.ln());
        out.extend(theta.mu.iter().copied());
        // log-Cholesky of Phi: lower triangle row-major, log on the diagonal
        for i in 0..p {
            for j in 0..=i {
                let l = theta.phi_chol_l[(i, j)];
                out.push(if i == j { l.ln() } else { l });
            }
        }
        out
    }

    fn theta_from_unconstrained(&self, v: &[f64]) -> RegressionParams {
        let p = self.p;
        debug_assert_eq!(v.len(), self.unconstrained_dim());
        let beta = DVector::from_iterator(p + 1, v[..p + 1].iter().copied());
        let tau = v[p + 1].exp();
        let mu = DVector::from_iterator(p, v[p + 2..p + 2 + p].iter().copied());
        let mut l = DMatrix::zeros(p, p);
        let mut idx = 2 * p + 2;
        for i in 0..p {
            for j in 0..=i {
                l[(i, j)] = if i == j { v[idx].exp() } else { v[idx] };
                idx += 1;
            }
        }
        let phi = &l * l.transpose();
        RegressionParams::new(beta, tau, mu, phi)
            .expect("log-Cholesky reconstruction is positive-definite")
    }

    fn grad_log_datum_unconstrained(
        &self,
        rec: &RegressionRecord,
        theta: &RegressionParams,
    ) -> Option<Vec<f64>> {
        let p = self.p;
        let mut out = Vec::with_capacity(self.unconstrained_dim());
        let mut resid = rec.y - theta.beta[0];
        for j in 0..p {
            resid -= theta.beta[j + 1] * rec.x[j];
        }
        // beta block
        out.push(theta.tau * resid);
        for j in 0..p {
            out.push(theta.tau * resid * rec.x[j]);
        }
        // log tau
        out.push(0.5 - 0.5 * theta.tau * resid * resid);
        // mu block: Phi (x - mu)
        let delta = DVector::from_fn(p, |j, _| rec.x[j] - theta.mu[j]);
        let phi_delta = &theta.phi * &delta;
        out.extend(phi_delta.iter().copied());
        // Phi block through the log-Cholesky parameterization:
        // G = d logp/d Phi = (Phi^{-1} - delta delta')/2, dL = 2 G L,
        // diagonal entries scaled by L_ii for the log transform.
        let g = (&theta.phi_inv - &delta * delta.transpose()) * 0.5;
        let m = &g * &theta.phi_chol_l * 2.0;
        for i in 0..p {
            for j in 0..=i {
                let val = m[(i, j)];
                out.push(if i == j { val * theta.phi_chol_l[(i, i)] } else { val });
            }
        }
        Some(out)
    }

    fn mstep_stat_dim(&self) -> usize {
        let p = self.p;
        2 * p + p * (p + 1) / 2 + 2
    }

    fn mstep_stat_into(&self, rec: &RegressionRecord, out: &mut [f64]) {
        let p = self.p;
        let mut idx = 0;
        for j in 0..p {
            out[idx] = rec.x[j];
            idx += 1;
        }
        for i in 0..p {
            for j in i..p {
                out[idx] = rec.x[i] * rec.x[j];
                idx += 1;
            }
        }
        for j in 0..p {
            out[idx] = rec.x[j] * rec.y;
            idx += 1;
        }
        out[idx] = rec.y;
        out[idx + 1] = rec.y * rec.y;
    }

    fn closed_form_mstep(&self, stats: &SuffStats) -> Option<Result<RegressionParams>> {
        Some(self.mstep_from_stats(stats))
    }

    fn loglik_from_stats(&self, stats: &SuffStats, theta: &RegressionParams) -> f64 {
        let p = self.p;
        let n = stats.n_total as f64;
        let parts = StatParts::unpack(stats, p);
        // response part: sum over records of log N(y; a'beta, 1/tau)
        let ata = parts.design_gram(n);
        let aty = parts.design_response();
        let beta = &theta.beta;
        let quad = beta.dot(&(&ata * beta)) - 2.0 * beta.dot(&aty) + parts.yy;
        let y_part = 0.5 * n * (theta.tau.ln() - LN_2PI) - 0.5 * theta.tau * quad;
        // covariate part: sum of log N_p(x; mu, Phi^{-1})
        let mut trace = 0.0;
        for i in 0..p {
            for j in 0..p {
                trace += theta.phi[(i, j)]
                    * (parts.sxx[(i, j)] - theta.mu[i] * parts.sx[j]
                        - theta.mu[j] * parts.sx[i]
                        + n * theta.mu[i] * theta.mu[j]);
            }
        }
        let x_part = 0.5 * n * (theta.phi_log_det - p as f64 * LN_2PI) - 0.5 * trace;
        y_part + x_part
    }
}

/// Accumulated sums unpacked from the flat M-step statistic vector.
struct StatParts {
    sx: DVector<f64>,
    sxx: DMatrix<f64>,
    sxy: DVector<f64>,
    sy: f64,
    yy: f64,
}

impl StatParts {
    fn unpack(stats: &SuffStats, p: usize) -> Self {
        let t = &stats.t_sum;
        let sx = DVector::from_iterator(p, t[..p].iter().copied());
        let mut sxx = DMatrix::zeros(p, p);
        let mut idx = p;
        for i in 0..p {
            for j in i..p {
                sxx[(i, j)] = t[idx];
                sxx[(j, i)] = t[idx];
                idx += 1;
            }
        }
        let sxy = DVector::from_iterator(p, t[idx..idx + p].iter().copied());
        let sy = t[idx + p];
        let yy = t[idx + p + 1];
        Self { sx, sxx, sxy, sy, yy }
    }

    /// `A'A` for the intercept-augmented design.
    fn design_gram(&self, n: f64) -> DMatrix<f64> {
        let p = self.sx.len();
        let mut ata = DMatrix::zeros(p + 1, p + 1);
        ata[(0, 0)] = n;
        for j in 0..p {
            ata[(0, j + 1)] = self.sx[j];
            ata[(j + 1, 0)] = self.sx[j];
            for k in 0..p {
                ata[(j + 1, k + 1)] = self.sxx[(j, k)];
            }
        }
        ata
    }

    /// `A'y` for the intercept-augmented design.
    fn design_response(&self) -> DVector<f64> {
        let p = self.sx.len();
        let mut aty = DVector::zeros(p + 1);
        aty[0] = self.sy;
        for j in 0..p {
            aty[j + 1] = self.sxy[j];
        }
        aty
    }
}

impl RegressionModel {
    fn mstep_from_stats(&self, stats: &SuffStats) -> Result<RegressionParams> {
        let p = self.p;
        let n = stats.n_total as f64;
        if stats.n_total == 0 {
            return Err(NdpError::NumericBreakdown("no records in M-step".into()));
        }
        let parts = StatParts::unpack(stats, p);
        let ata = parts.design_gram(n);
        let aty = parts.design_response();
        let chol = spd_cholesky(&ata)
            .map_err(|_| NdpError::NumericBreakdown("singular pooled design".into()))?;
        let beta = chol.solve(&aty);
        let rss = parts.yy - 2.0 * beta.dot(&aty) + beta.dot(&(&ata * &beta));
        if !(rss > 0.0) {
            return Err(NdpError::NumericBreakdown(format!("pooled RSS = {rss}")));
        }
        let tau = n / rss;
        let mu = &parts.sx / n;
        let cov = &parts.sxx / n - &mu * mu.transpose();
        let phi = spd_cholesky(&cov)
            .map_err(|_| NdpError::NumericBreakdown("singular pooled covariate covariance".into()))?
            .inverse();
        RegressionParams::new(beta, tau, mu, phi)
    }
}
