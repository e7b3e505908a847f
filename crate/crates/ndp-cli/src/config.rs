//! Declarative experiment configuration. One JSON file describes the model,
//! the true data-generating parameters, the privacy-budget grid, replicate
//! counts, and the sampler/EM settings. Unknown keys are errors, and
//! parse -> serialize -> parse is the identity.

use anyhow::{bail, Context, Result};
use ndp::mechanisms::NoiseFamily;
use ndp::models::{DirichletModel, RegressionHyper, RegressionModel};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "table1")]
    Table1,
    #[serde(rename = "mcem_table2")]
    McemTable2,
    #[serde(rename = "dirichlet")]
    Dirichlet,
    #[serde(rename = "theory_check")]
    TheoryCheck,
    #[serde(rename = "custom")]
    Custom,
}

/// Budget values that may be the string `"inf"` (n released exactly).
mod budget_list {
    use serde::de::Error;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Number(f64),
        Word(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        let mut seq = ser.serialize_seq(Some(values.len()))?;
        for v in values {
            if v.is_infinite() {
                seq.serialize_element("inf")?;
            } else {
                seq.serialize_element(v)?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(de)?;
        entries
            .into_iter()
            .map(|e| match e {
                Entry::Number(v) => Ok(v),
                Entry::Word(w) if w == "inf" => Ok(f64::INFINITY),
                Entry::Word(w) => Err(D::Error::custom(format!("bad budget entry {w:?}"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BudgetGrid {
    pub eps_s: Vec<f64>,
    #[serde(with = "budget_list")]
    pub eps_n: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegressionBlock {
    pub p: usize,
    pub l: f64,
    pub u: f64,
    pub m: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub a: f64,
    pub b: f64,
    pub theta0: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub d: f64,
    pub w: Vec<Vec<f64>>,
    pub truth: RegressionTruth,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegressionTruth {
    pub beta: Vec<f64>,
    pub tau: f64,
    pub mu: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DirichletBlock {
    pub floor_a: f64,
    pub prior_shape: f64,
    pub prior_rate: f64,
    pub rw_step: f64,
    pub truth: DirichletTruth,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DirichletTruth {
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BernoulliBlock {
    pub prior_a: f64,
    pub prior_b: f64,
    pub noise_family: NoiseFamily,
    pub truth: BernoulliTruth,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BernoulliTruth {
    pub theta: f64,
}

/// The model section: `name` selects which block applies.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet: Option<DirichletBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bernoulli: Option<BernoulliBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplerBlock {
    pub iterations: usize,
    pub burn_in: usize,
    #[serde(default = "default_t_refresh")]
    pub t_refresh_period: usize,
    /// Upper end of the flat prior on `n`; derived from `n_dp` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u64>,
    #[serde(default = "default_true")]
    pub record_acceptance: bool,
}

fn default_t_refresh() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EmBlock {
    pub outer_iterations: usize,
    pub e_step_samples: usize,
    pub e_step_burn_in: usize,
    pub e_step_thinning: usize,
    pub m_step_mode: ndp::mcem::MStepMode,
    pub learning_rate: ndp::mcem::LearningRate,
    pub convergence_tol: f64,
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

/// Grids for the theory-check suite.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TheoryBlock {
    pub eps_grid: Vec<f64>,
    pub n0_grid: Vec<u64>,
    pub ks_samples: usize,
    pub repetitions: usize,
    pub prop41_configs: usize,
    pub abc_samples: usize,
    pub pm_count_cap: u64,
}

impl Default for TheoryBlock {
    fn default() -> Self {
        Self {
            eps_grid: vec![0.5, 1.0, 2.0],
            n0_grid: vec![100, 400, 1600],
            ks_samples: 200_000,
            repetitions: 10,
            prop41_configs: 20,
            abc_samples: 3000,
            pm_count_cap: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelConfig,
    pub n_true: u64,
    pub budgets: BudgetGrid,
    pub replicates: u32,
    /// Realizations of `n_dp` per grid point in the compositional study.
    #[serde(default = "default_ndp_realizations")]
    pub n_dp_realizations: u32,
    pub sampler: SamplerBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em: Option<EmBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheoryBlock>,
    /// Noise family for the count release.
    #[serde(default = "default_count_family")]
    pub count_noise: NoiseFamily,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Input dataset for the one-shot `privatize` subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_csv: Option<PathBuf>,
}

fn default_ndp_realizations() -> u32 {
    10
}

fn default_count_family() -> NoiseFamily {
    NoiseFamily::ContinuousLaplace
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if self.budgets.eps_s.is_empty() || self.budgets.eps_n.is_empty() {
            bail!("budget grids must be non-empty");
        }
        if self.budgets.eps_s.iter().any(|&e| !(e > 0.0)) {
            bail!("eps_s entries must be positive");
        }
        if self.budgets.eps_n.iter().any(|&e| !(e > 0.0)) {
            bail!("eps_n entries must be positive (or \"inf\")");
        }
        if self.sampler.burn_in >= self.sampler.iterations {
            bail!("sampler burn-in must be below iterations");
        }
        match self.model.name.as_str() {
            "regression" => {
                let block = self.model.regression.as_ref().context("missing regression block")?;
                if block.truth.beta.len() != block.p + 1
                    || block.truth.mu.len() != block.p
                    || block.truth.phi.len() != block.p
                {
                    bail!("regression truth dimensions disagree with p");
                }
                // hyperparameter shapes are validated by the model constructor
                self.regression_model(self.budgets.eps_s[0])?;
            }
            "dirichlet" => {
                let block = self.model.dirichlet.as_ref().context("missing dirichlet block")?;
                if block.truth.alpha.len() != 3 || block.truth.alpha.iter().any(|a| !(*a > 0.0)) {
                    bail!("dirichlet truth needs three positive concentrations");
                }
                self.dirichlet_model(self.budgets.eps_s[0])?;
            }
            "bernoulli" => {
                let block = self.model.bernoulli.as_ref().context("missing bernoulli block")?;
                if !(0.0..=1.0).contains(&block.truth.theta) {
                    bail!("bernoulli truth theta must lie in [0, 1]");
                }
            }
            other => bail!("unknown model name {other:?}"),
        }
        if matches!(self.kind, ExperimentKind::McemTable2) && self.em.is_none() {
            bail!("mcem_table2 requires an em block");
        }
        Ok(())
    }

    pub fn regression_block(&self) -> Result<&RegressionBlock> {
        self.model.regression.as_ref().context("config has no regression block")
    }

    pub fn dirichlet_block(&self) -> Result<&DirichletBlock> {
        self.model.dirichlet.as_ref().context("config has no dirichlet block")
    }

    /// Builds the regression model for one summary budget.
    pub fn regression_model(&self, eps_s: f64) -> Result<RegressionModel> {
        let b = self.regression_block()?;
        let hyper = RegressionHyper::from_parts(
            b.m.clone(),
            b.v.clone(),
            b.a,
            b.b,
            b.theta0.clone(),
            b.sigma.clone(),
            b.d,
            b.w.clone(),
            b.l,
            b.u,
        )?;
        Ok(RegressionModel::new(b.p, hyper, eps_s)?)
    }

    pub fn dirichlet_model(&self, eps_s: f64) -> Result<DirichletModel> {
        let b = self.dirichlet_block()?;
        Ok(DirichletModel::new(b.prior_shape, b.prior_rate, b.floor_a, eps_s, b.rw_step)?)
    }

    /// Applies the `--smoke` profile: shrink everything to CI scale.
    pub fn apply_smoke(&mut self) {
        self.n_true = self.n_true.min(200);
        self.replicates = self.replicates.min(3);
        self.n_dp_realizations = self.n_dp_realizations.min(3);
        self.sampler.iterations = self.sampler.iterations.min(2000);
        self.sampler.burn_in = self.sampler.burn_in.min(self.sampler.iterations / 2);
        if let Some(em) = self.em.as_mut() {
            em.outer_iterations = em.outer_iterations.min(8);
            em.e_step_samples = em.e_step_samples.min(50);
            em.e_step_burn_in = em.e_step_burn_in.min(100);
            em.e_step_thinning = em.e_step_thinning.min(2);
        }
        let theory = self.theory.get_or_insert_with(TheoryBlock::default);
        theory.ks_samples = theory.ks_samples.min(20_000);
        theory.repetitions = theory.repetitions.min(4);
        theory.n0_grid = vec![50, 200, 800];
        theory.prop41_configs = theory.prop41_configs.min(5);
        theory.abc_samples = theory.abc_samples.min(800);
        theory.pm_count_cap = theory.pm_count_cap.min(15);
    }

    /// The paper-scale linear-regression configuration.
    pub fn table1_default(seed: u64, output_dir: PathBuf) -> Self {
        let p = 2;
        Self {
            kind: ExperimentKind::Table1,
            model: ModelConfig {
                name: "regression".into(),
                regression: Some(RegressionBlock {
                    p,
                    l: -5.0,
                    u: 5.0,
                    m: vec![0.0; p + 1],
                    v: identity(p + 1),
                    a: 2.0,
                    b: 2.0,
                    theta0: vec![0.0; p],
                    sigma: identity(p),
                    d: 2.0,
                    w: identity(p),
                    truth: RegressionTruth {
                        beta: vec![0.0, -1.0, 1.0],
                        tau: 1.0,
                        mu: vec![-1.0, 1.0],
                        phi: identity(p),
                    },
                }),
                dirichlet: None,
                bernoulli: None,
            },
            n_true: 1000,
            budgets: BudgetGrid {
                eps_s: vec![1.0],
                eps_n: vec![0.01, 0.1, 1.0, 10.0, f64::INFINITY],
            },
            replicates: 20,
            n_dp_realizations: 10,
            sampler: SamplerBlock {
                iterations: 10_000,
                burn_in: 5_000,
                t_refresh_period: 1000,
                n_max: None,
                record_acceptance: true,
            },
            em: Some(EmBlock {
                outer_iterations: 50,
                e_step_samples: 200,
                e_step_burn_in: 200,
                e_step_thinning: 10,
                m_step_mode: ndp::mcem::MStepMode::ClosedForm,
                learning_rate: ndp::mcem::LearningRate::Constant(1e-4),
                convergence_tol: 1e-3,
                warm_start: true,
            }),
            theory: None,
            count_noise: NoiseFamily::ContinuousLaplace,
            master_seed: seed,
            output_dir,
            data_csv: None,
        }
    }

    /// The compositional-study configuration with synthetic data standing in
    /// for the survey microdata.
    pub fn dirichlet_default(seed: u64, output_dir: PathBuf) -> Self {
        Self {
            kind: ExperimentKind::Dirichlet,
            model: ModelConfig {
                name: "dirichlet".into(),
                regression: None,
                dirichlet: Some(DirichletBlock {
                    floor_a: 0.0006,
                    prior_shape: 1.0,
                    prior_rate: 0.1,
                    rw_step: 0.15,
                    truth: DirichletTruth { alpha: vec![15.0, 2.0, 18.0] },
                }),
                bernoulli: None,
            },
            n_true: 6656,
            budgets: BudgetGrid { eps_s: vec![1.0, 10.0], eps_n: vec![0.01, 0.1, 1.0, 10.0] },
            replicates: 1,
            n_dp_realizations: 10,
            sampler: SamplerBlock {
                iterations: 10_000,
                burn_in: 5_000,
                t_refresh_period: 1000,
                n_max: None,
                record_acceptance: true,
            },
            em: None,
            theory: None,
            count_noise: NoiseFamily::ContinuousLaplace,
            master_seed: seed,
            output_dir,
            data_csv: None,
        }
    }
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}
