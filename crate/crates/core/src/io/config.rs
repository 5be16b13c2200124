use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::criteria::{CriterionMode, Example, ReturnProbability};
use crate::dual::LineageDynamics;
use crate::error::{Error, Result};
use crate::experiments::{BankSpec, ExperimentSpec, InitialLaw, BURN_IN_RELAXATIONS, DEFAULT_BUDGET, TRAP_EPSILON};
use crate::forward::{default_dt, DiffusionFunction, Displacement, Dynamics, Model};
use crate::geometry::{Family, Geography, KernelOptions, KernelSpec, MigrationKernel};
use crate::seedbank::{Mode, SeedBankProfile};

/// Every numerical default a configuration may omit: `(key, value, meaning)`.
pub const DEFAULTS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed of all replica streams"),
    ("dt", "min(0.01, 0.1 / (jump rate + chi + max e))", "Euler step"),
    ("budget", "2e11", "refusal threshold in projected component updates"),
    ("initial", "constant", "initial product law at density theta"),
    ("kernel_options.symmetrize", "false", "replace a(i,j) by (a(i,j) + a(j,i)) / 2"),
    ("kernel_options.fold", "true", "fold infinite kernels onto the finite geography"),
    ("seedbank.depth", "{ rule = \"constant\", M = 0 }", "truncation level of the seed-bank"),
    ("experiment.time_unit", "beta", "unit of the macroscopic grid"),
    ("experiment.observables", "all", "theta_hat, theta_x, diversity, depth_moments"),
    ("fg.burn_in_factor", "10", "burn-in in relaxation times"),
    ("fg.window", "10 relaxation times", "averaging window"),
    ("fg.hazard_horizon", "1000", "horizon of the dual hazard estimate"),
    ("fg.hazard_replicas", "2000", "replicas of the dual hazard estimate"),
    ("fg.reference.dt", "0.01", "step of the reference diffusion"),
    ("trapping.epsilon", "1e-4", "distance to a trap counted as trapped"),
    ("output.formats", "[\"csv\", \"jsonl\", \"svg\"]", "emitted file kinds"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Jsonl,
    Svg,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Jsonl, Format::Svg]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { formats: all_formats() }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn default_budget() -> f64 {
    DEFAULT_BUDGET
}

/// One finite system, shared by the `forward` and `dual` subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub geography: Family,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub kernel_options: KernelOptions,
    pub seedbank: BankSpec,
    pub model: Model,
    /// Model 3: one displacement row `p_m(0, ·)` per colour.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<Vec<Vec<f64>>>,
}

impl SystemConfig {
    pub fn geography(&self) -> Result<Geography> {
        Geography::new(self.geography).map_err(|e| e.within("geography"))
    }

    pub fn kernel(&self) -> Result<MigrationKernel> {
        MigrationKernel::build(&self.geography()?, &self.kernel, self.kernel_options)
            .map_err(|e| e.within("kernel"))
    }

    pub fn profile(&self) -> Result<SeedBankProfile> {
        let n = match self.geography {
            Family::Torus { n, .. } | Family::Hierarchical { n, .. } => n,
            Family::Singleton => 0,
        };
        self.seedbank.profile(n).map_err(|e| e.within("seedbank"))
    }

    pub fn displacements(&self) -> Result<Option<Vec<Displacement>>> {
        self.displacement
            .as_ref()
            .map(|rows| {
                rows.iter()
                    .map(|r| Displacement::from_row(r).map_err(|e| e.within("displacement")))
                    .collect()
            })
            .transpose()
    }

    pub fn lineage_dynamics(&self) -> Result<LineageDynamics> {
        LineageDynamics::new(self.model, self.kernel()?, &self.profile()?, self.displacements()?)
            .map_err(|e| e.within("model"))
    }

    pub fn dynamics(&self, g: DiffusionFunction) -> Result<Dynamics> {
        Dynamics::new(self.model, self.kernel()?, self.profile()?, g, self.displacements()?)
            .map_err(|e| e.within("model"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    pub g: DiffusionFunction,
    pub theta: f64,
    #[serde(default)]
    pub initial: InitialLaw,
    pub replicas: usize,
    /// Absolute observation times.
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineageStart {
    pub site: usize,
    #[serde(default = "active")]
    pub mode: Mode,
}

fn active() -> Mode {
    Mode::Active
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardConfig {
    pub horizon: f64,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    /// Coalescence rate of co-located active pairs.
    pub d: f64,
    pub lineages: Vec<LineageStart>,
    pub horizon: f64,
    pub replicas: usize,
    /// Joint-activity hazard of the first two lineages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard: Option<HazardConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralConfig {
    pub return_probability: ReturnProbability,
    pub criterion: CriterionMode,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaConfig {
    #[serde(default)]
    pub examples: Vec<Example>,
    #[serde(default)]
    pub integrals: Vec<IntegralConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewalConfig {
    #[serde(default)]
    pub seed: u64,
    pub gammas: Vec<f64>,
    pub horizon: u64,
    pub replicas: usize,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_burn_in() -> f64 {
    BURN_IN_RELAXATIONS
}
fn default_hazard_horizon() -> f64 {
    1000.0
}
fn default_hazard_replicas() -> usize {
    2000
}
fn default_reference_dt() -> f64 {
    0.01
}
fn default_trap_epsilon() -> f64 {
    TRAP_EPSILON
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub replicas: usize,
    #[serde(default = "default_reference_dt")]
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FgConfig {
    pub thetas: Vec<f64>,
    #[serde(default = "default_burn_in")]
    pub burn_in_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default = "default_hazard_horizon")]
    pub hazard_horizon: f64,
    #[serde(default = "default_hazard_replicas")]
    pub hazard_replicas: usize,
    /// Reference diffusion ensemble driven by the estimated `F̂g`, compared
    /// with the largest ladder entry on the experiment grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrappingConfig {
    /// Horizon in macroscopic units.
    pub horizon: f64,
    #[serde(default = "default_trap_epsilon")]
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Absolute probe times.
    pub probes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FssConfig {
    pub experiment: ExperimentSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fg: Option<FgConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trapping: Option<TrappingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clustering: Option<ClusteringConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Semantic checks and default materialisation after parsing.
pub trait Resolve: Sized {
    fn resolve(self) -> Result<Self>;
    fn seed(&self) -> u64;
    fn set_seed(&mut self, seed: u64);
}

fn need(ok: bool, key: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, message))
    }
}

fn increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) && v.iter().all(|t| t.is_finite() && *t >= 0.0)
}

impl Resolve for ForwardConfig {
    fn resolve(mut self) -> Result<Self> {
        need((0.0..=1.0).contains(&self.theta), "theta", "must lie in [0, 1]")?;
        need(self.replicas > 0, "replicas", "must be positive")?;
        need(!self.times.is_empty() && increasing(&self.times), "times", "need non-negative, strictly increasing times")?;
        self.g.validate().map_err(|e| e.within("g"))?;
        let dynamics = self.system.dynamics(self.g.clone()).map_err(|e| e.within("system"))?;
        let dt = self.dt.unwrap_or_else(|| default_dt(dynamics.kernel(), dynamics.profile()));
        need(dt > 0.0 && dt.is_finite(), "dt", "must be positive")?;
        self.dt = Some(dt);
        Ok(self)
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

impl Resolve for DualConfig {
    fn resolve(self) -> Result<Self> {
        need(self.d >= 0.0 && self.d.is_finite(), "d", "coalescence rate must be non-negative")?;
        need(!self.lineages.is_empty(), "lineages", "need at least one lineage")?;
        need(self.horizon > 0.0 && self.horizon.is_finite(), "horizon", "must be positive")?;
        need(self.replicas > 0, "replicas", "must be positive")?;
        let geo = self.system.geography().map_err(|e| e.within("system"))?;
        let colours = self.system.profile().map_err(|e| e.within("system"))?.colours();
        for (k, l) in self.lineages.iter().enumerate() {
            need(l.site < geo.size(), &format!("lineages[{k}].site"), "site outside the geography")?;
            if let Mode::Dormant(m) = l.mode {
                need(m < colours, &format!("lineages[{k}].mode"), "colour beyond the deepest")?;
            }
        }
        if let Some(h) = self.hazard {
            need(self.lineages.len() >= 2, "hazard", "needs two lineages")?;
            need(h.horizon > 0.0 && h.replicas >= 2, "hazard", "needs a positive horizon and two replicas")?;
        }
        Ok(self)
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

impl Resolve for CriteriaConfig {
    fn resolve(self) -> Result<Self> {
        need(!self.examples.is_empty() || !self.integrals.is_empty(), "examples", "nothing to classify")?;
        for (k, i) in self.integrals.iter().enumerate() {
            need(i.horizon >= 100.0, &format!("integrals[{k}].horizon"), "must be at least 100")?;
        }
        Ok(self)
    }
    fn seed(&self) -> u64 {
        0
    }
    fn set_seed(&mut self, _seed: u64) {}
}

impl Resolve for RenewalConfig {
    fn resolve(self) -> Result<Self> {
        need(!self.gammas.is_empty(), "gammas", "need at least one gamma")?;
        for (k, g) in self.gammas.iter().enumerate() {
            need(*g > 0.5 && *g < 1.0, &format!("gammas[{k}]"), "must lie in (1/2, 1)")?;
        }
        need(self.horizon >= 10_000, "horizon", "must be at least 10^4")?;
        need(self.replicas > 0, "replicas", "must be positive")?;
        Ok(self)
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

impl Resolve for FssConfig {
    fn resolve(self) -> Result<Self> {
        self.experiment.validate().map_err(|e| e.within("experiment"))?;
        if let Some(fg) = &self.fg {
            need(!fg.thetas.is_empty() && fg.thetas.iter().all(|t| (0.0..=1.0).contains(t)), "fg.thetas", "need values in [0, 1]")?;
            need(fg.burn_in_factor >= 0.0, "fg.burn_in_factor", "must be non-negative")?;
            need(fg.window.is_none_or(|w| w > 0.0), "fg.window", "must be positive")?;
            if let Some(r) = fg.reference {
                need(r.replicas > 0 && r.dt > 0.0, "fg.reference", "needs replicas and a positive dt")?;
            }
        }
        if let Some(t) = &self.trapping {
            need(t.horizon > 0.0 && t.epsilon > 0.0, "trapping", "horizon and epsilon must be positive")?;
        }
        if let Some(c) = &self.clustering {
            need(!c.probes.is_empty() && increasing(&c.probes), "clustering.probes", "need increasing probe times")?;
        }
        Ok(self)
    }
    fn seed(&self) -> u64 {
        self.experiment.seed
    }
    fn set_seed(&mut self, seed: u64) {
        self.experiment.seed = seed;
    }
}

/// Parses TOML text; schema errors carry the key path.
pub fn parse_str<T: DeserializeOwned + Resolve>(text: &str) -> Result<T> {
    let de = toml::Deserializer::new(text);
    let cfg: T = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().message().to_string();
        Error::config(if path == "." { "<root>".to_string() } else { path }, message)
    })?;
    cfg.resolve()
}

pub fn parse_config<T: DeserializeOwned + Resolve>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_str(&text)
}

/// TOML rendering of a resolved configuration.
pub fn to_toml<T: Serialize>(cfg: &T) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::config("<root>", e.to_string()))
}
