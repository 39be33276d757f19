//! Run configuration, read from and written to TOML.
//!
//! Every section except `[problem]` has defaults, so a minimal file is
//!
//! ```toml
//! [problem]
//! name = "reaction"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{LossWeights, DEFAULT_CHUNK};
use crate::model::{Architecture, ModelSpec};
use crate::nn::ActivationKind;
use crate::optim::LbfgsConfig;
use crate::pde::{
    convection_problem, navier_stokes_problem, reaction_problem, wave_problem_with_coefficient, MeshSpec,
    Problem,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory used when the command line gives none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_name() -> String {
    "run".into()
}

/// Problem name plus optional coefficients; unset coefficients take the
/// benchmark values (β = 50 convection, ρ = 5 reaction, β = 3 wave,
/// λ1 = 1 and λ2 = 0.01 Navier-Stokes).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Wave `u_xx` coefficient; 4 when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    /// Navier-Stokes dataset, whitespace separated with header `t x y u v p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
}

impl ProblemConfig {
    pub fn named(name: &str) -> Self {
        ProblemConfig { name: name.into(), ..Default::default() }
    }

    /// The problem with default bounds. Navier-Stokes bounds are replaced by
    /// the dataset ranges once it is loaded.
    pub fn build(&self) -> Result<Problem> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!("problem.{name} must be finite, got {v}")))
            }
        };
        Ok(match self.name.as_str() {
            "convection" => convection_problem(finite("beta", self.beta.unwrap_or(50.0))?),
            "reaction" => reaction_problem(finite("rho", self.rho.unwrap_or(5.0))?),
            "wave" => wave_problem_with_coefficient(
                finite("beta", self.beta.unwrap_or(3.0))?,
                finite("coefficient", self.coefficient.unwrap_or(4.0))?,
            ),
            "navier-stokes" => navier_stokes_problem(
                finite("lambda1", self.lambda1.unwrap_or(1.0))?,
                finite("lambda2", self.lambda2.unwrap_or(0.01))?,
            ),
            other => return Err(Error::Config(format!("unknown problem `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Lbfgs,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub iterations: usize,
    pub adam_lr: f64,
    pub lbfgs: LbfgsConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { kind: OptimizerKind::Lbfgs, iterations: 1000, adam_lr: 1e-3, lbfgs: LbfgsConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Fixed weights, or the starting weights when NTK balancing is off.
    pub weights: LossWeights,
    pub ntk: bool,
    /// Iterations between NTK weight refreshes.
    pub ntk_interval: usize,
    /// Points per term used to estimate NTK traces.
    pub ntk_cap: usize,
    /// Points per evaluation graph.
    pub chunk: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { weights: LossWeights::default(), ntk: false, ntk_interval: 100, ntk_cap: 200, chunk: DEFAULT_CHUNK }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub mesh: MeshSpec,
    pub test_n_x: usize,
    pub test_n_t: usize,
    /// Navier-Stokes rows drawn for training.
    pub ns_count: usize,
    /// Cap on held-out Navier-Stokes rows used for metrics.
    pub ns_test_max: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            mesh: MeshSpec::Grid { n_x: 51, n_t: 51, n_bc: 51, n_ic: 51 },
            test_n_x: 101,
            test_n_t: 101,
            ns_count: 2500,
            ns_test_max: 10000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Landscape cells per axis (odd).
    pub n: usize,
    /// Half-range as a multiple of `‖θ‖` along unit eigenvectors.
    pub scale: f64,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { n: 41, scale: 0.5, power_iters: 100, power_tol: 1e-4 }
    }
}

impl RunConfig {
    pub fn new(name: &str, problem: ProblemConfig) -> Self {
        RunConfig {
            name: name.into(),
            seed: 0,
            out: None,
            problem,
            model: ModelSpec::default(),
            optimizer: OptimizerConfig::default(),
            loss: LossConfig::default(),
            sampling: SamplingConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.build()?;
        self.model.validate()?;
        self.loss.weights.validate()?;
        self.optimizer.lbfgs.validate()?;
        if self.loss.ntk && (self.loss.ntk_interval == 0 || self.loss.ntk_cap == 0) {
            return Err(Error::Config("ntk_interval and ntk_cap must be ≥ 1".into()));
        }
        if self.loss.chunk == 0 {
            return Err(Error::Config("loss.chunk must be ≥ 1".into()));
        }
        if !(self.optimizer.adam_lr > 0.0) {
            return Err(Error::Config(format!("adam_lr must be finite, got {}", self.optimizer.adam_lr)));
        }
        if self.sampling.test_n_x == 0 || self.sampling.test_n_t == 0 {
            return Err(Error::Config("test mesh must be nonempty".into()));
        }
        if self.analysis.n.is_multiple_of(2) || !(self.analysis.scale > 0.0) {
            return Err(Error::Config("analysis.n must be odd and analysis.scale finite".into()));
        }
        Ok(())
    }

    /// Sets one sweepable field from its textual value.
    pub fn set_axis(&mut self, axis: SweepAxis, value: &str) -> Result<()> {
        let bad = |e: String| Error::Config(format!("{}={value}: {e}", axis.name()));
        match axis {
            SweepAxis::Activation => {
                self.model.activation = Some(ActivationKind::from_str(value)?);
            }
            SweepAxis::K => self.model.k = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            SweepAxis::Dt => self.model.dt = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            SweepAxis::Arch => self.model.arch = Architecture::from_str(value)?,
            SweepAxis::Seed => self.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
        }
        self.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Activation,
    K,
    Dt,
    Arch,
    Seed,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Activation => "activation",
            SweepAxis::K => "k",
            SweepAxis::Dt => "dt",
            SweepAxis::Arch => "arch",
            SweepAxis::Seed => "seed",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "activation" => SweepAxis::Activation,
            "k" => SweepAxis::K,
            "dt" | "Δt" => SweepAxis::Dt,
            "arch" => SweepAxis::Arch,
            "seed" => SweepAxis::Seed,
            other => return Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        })
    }
}

/// Desk-scale transformer: embedding 16, feedforward and head widths 128.
pub fn desk_model() -> ModelSpec {
    ModelSpec { embed: 16, ff_widths: vec![128, 128], head_widths: vec![128, 128], ..ModelSpec::default() }
}

/// Baseline of roughly the desk transformer's parameter count.
pub fn desk_baseline(arch: Architecture) -> ModelSpec {
    let width = match arch {
        Architecture::QRes => 102,
        _ => 176,
    };
    ModelSpec { arch, mlp_width: width, ..desk_model() }
}

/// Named presets shipped with the CLI.
pub fn preset(name: &str) -> Result<RunConfig> {
    let desk_mesh = MeshSpec::Grid { n_x: 26, n_t: 26, n_bc: 26, n_ic: 26 };
    let desk = |name: &str, problem: &str, model: ModelSpec| {
        let mut c = RunConfig::new(name, ProblemConfig::named(problem));
        c.model = model;
        c.sampling.mesh = desk_mesh.clone();
        c.optimizer.iterations = 300;
        c
    };
    let full = |name: &str, problem: &str, arch: Architecture| {
        let mut c = RunConfig::new(name, ProblemConfig::named(problem));
        c.model.arch = arch;
        c
    };
    let cfg = match name {
        "reaction-desk" => desk(name, "reaction", desk_model()),
        "reaction-desk-mlp" => desk(name, "reaction", desk_baseline(Architecture::PinnMlp)),
        "reaction-desk-relu" => {
            let mut c = desk(name, "reaction", desk_model());
            c.model.activation = Some(ActivationKind::Relu);
            c
        }
        "wave-desk" => desk(name, "wave", desk_model()),
        "wave-desk-ntk" => {
            let mut c = desk(name, "wave", desk_model());
            c.loss.ntk = true;
            c
        }
        "convection" => full(name, "convection", Architecture::PinnsFormer),
        "convection-mlp" => full(name, "convection", Architecture::PinnMlp),
        "reaction" => full(name, "reaction", Architecture::PinnsFormer),
        "reaction-mlp" => full(name, "reaction", Architecture::PinnMlp),
        "wave" => full(name, "wave", Architecture::PinnsFormer),
        "wave-ntk" => {
            let mut c = full(name, "wave", Architecture::PinnsFormer);
            c.loss.ntk = true;
            c
        }
        other => return Err(Error::Config(format!("unknown preset `{other}`"))),
    };
    Ok(cfg)
}

pub const PRESETS: &[&str] = &[
    "reaction-desk",
    "reaction-desk-mlp",
    "reaction-desk-relu",
    "wave-desk",
    "wave-desk-ntk",
    "convection",
    "convection-mlp",
    "reaction",
    "reaction-mlp",
    "wave",
    "wave-ntk",
];
