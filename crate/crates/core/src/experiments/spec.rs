use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{default_dt, DiffusionFunction, Dynamics, Model, SystemState};
use crate::geometry::{Family, Geography, KernelOptions, KernelSpec, MigrationKernel};
use crate::seedbank::SeedBankProfile;

use super::scales::{time_scales, TimeScaleReport};

/// Default bound on projected work, in component updates.
pub const DEFAULT_BUDGET: f64 = 2e11;

/// Which geography family the ladder walks through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeographyFamily {
    Torus { d: usize },
    Hierarchical {
        #[serde(rename = "N")]
        order: usize,
    },
}

impl GeographyFamily {
    pub fn at(&self, n: usize) -> Result<Geography> {
        match *self {
            GeographyFamily::Torus { d } => Geography::new(Family::Torus { d, n }),
            GeographyFamily::Hierarchical { order } => Geography::new(Family::Hierarchical { order, n }),
        }
    }
}

/// Seed-bank coefficients before truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provenance", rename_all = "snake_case", deny_unknown_fields)]
pub enum BankFamily {
    Polynomial {
        #[serde(rename = "A")]
        a: f64,
        alpha: f64,
        #[serde(rename = "B")]
        b: f64,
        beta: f64,
    },
    Hierarchical {
        #[serde(rename = "K")]
        k: f64,
        e: f64,
        #[serde(rename = "N")]
        order: f64,
    },
    /// Fixed coefficients; the depth rule is ignored.
    Explicit {
        #[serde(rename = "K")]
        k: Vec<f64>,
        e: Vec<f64>,
    },
}

/// Truncation level `M_n` of the seed-bank at ladder entry `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum DepthRule {
    Constant {
        #[serde(rename = "M")]
        m: usize,
    },
    /// `M_n = round(scale · n^exponent)`.
    Power { scale: f64, exponent: f64 },
}

impl DepthRule {
    pub fn depth(&self, n: usize) -> usize {
        match *self {
            DepthRule::Constant { m } => m,
            DepthRule::Power { scale, exponent } => (scale * (n as f64).powf(exponent)).round().max(0.0) as usize,
        }
    }
}

/// Unknown keys are rejected by the flattened family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSpec {
    #[serde(flatten)]
    pub family: BankFamily,
    #[serde(default = "default_depth")]
    pub depth: DepthRule,
}

fn default_depth() -> DepthRule {
    DepthRule::Constant { m: 0 }
}

impl BankSpec {
    pub fn profile(&self, n: usize) -> Result<SeedBankProfile> {
        let m = self.depth.depth(n);
        match &self.family {
            BankFamily::Polynomial { a, alpha, b, beta } => SeedBankProfile::polynomial(*a, *alpha, *b, *beta, m),
            BankFamily::Hierarchical { k, e, order } => SeedBankProfile::hierarchical(*k, *e, *order, m),
            BankFamily::Explicit { k, e } => SeedBankProfile::explicit(k.clone(), e.clone()),
        }
    }
}

/// Initial product law at density `θ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaw {
    /// Every component equal to `θ`.
    #[default]
    Constant,
    /// Independent Bernoulli(`θ`) components.
    Bernoulli,
}

impl InitialLaw {
    pub fn sample<R: Rng + ?Sized>(self, sites: usize, colours: usize, theta: f64, rng: &mut R) -> Result<SystemState> {
        match self {
            InitialLaw::Constant => SystemState::constant(sites, colours, theta),
            InitialLaw::Bernoulli => SystemState::bernoulli(sites, colours, theta, rng),
        }
    }
}

/// Unit of the macroscopic time grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// `β_n = κ_{M_n} |G_n|`.
    #[default]
    Beta,
    /// `β*_n = M_n^β`.
    BetaStar,
    /// `β**_n`.
    BetaDoubleStar,
    /// Plain time.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    ThetaHat,
    ThetaX,
    Diversity,
    DepthMoments,
}

fn default_observables() -> Vec<Observable> {
    vec![Observable::ThetaHat, Observable::ThetaX, Observable::Diversity, Observable::DepthMoments]
}

fn default_budget() -> f64 {
    DEFAULT_BUDGET
}

/// Declarative description of one finite-systems-scheme run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub geography: GeographyFamily,
    /// Embedding levels `n`, strictly increasing.
    pub ladder: Vec<usize>,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub kernel_options: KernelOptions,
    pub seedbank: BankSpec,
    pub model: Model,
    pub g: DiffusionFunction,
    pub theta: f64,
    #[serde(default)]
    pub initial: InitialLaw,
    pub replicas: usize,
    /// Macroscopic times, in multiples of `time_unit`.
    pub times: Vec<f64>,
    #[serde(default)]
    pub time_unit: TimeUnit,
    pub seed: u64,
    #[serde(default = "default_observables")]
    pub observables: Vec<Observable>,
    /// Euler step; defaults to `min(0.01, 0.1 / total rate)`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_budget")]
    pub budget: f64,
}

/// One rung of the ladder, fully built.
#[derive(Debug, Clone)]
pub struct Rung {
    pub n: usize,
    pub dynamics: Dynamics,
    pub scales: TimeScaleReport,
    /// Absolute length of one macroscopic time unit.
    pub unit: f64,
    pub dt: f64,
}

impl Rung {
    pub fn sites(&self) -> usize {
        self.dynamics.geography().size()
    }

    pub fn colours(&self) -> usize {
        self.dynamics.profile().colours()
    }

    /// Component updates per unit of absolute time.
    pub fn cost_rate(&self) -> f64 {
        self.dynamics.cost_rate(self.dt)
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::config("ladder", "needs at least one entry"));
        }
        if self.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("ladder", "entries must be strictly increasing"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::config("theta", format!("must lie in [0, 1], got {}", self.theta)));
        }
        if self.replicas == 0 {
            return Err(Error::config("replicas", "must be positive"));
        }
        if self.times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("times", "must be finite, non-negative and strictly increasing"));
        }
        if self.observables.is_empty() {
            return Err(Error::config("observables", "select at least one observable"));
        }
        if self.model == Model::M3 {
            return Err(Error::config("model", "Model 3 has no finite-systems experiments"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::config("dt", format!("must be positive, got {dt}")));
            }
        }
        if !(self.budget > 0.0) {
            return Err(Error::config("budget", "must be positive"));
        }
        self.kernel.validate().map_err(|e| e.within("kernel"))?;
        self.g.validate().map_err(|e| e.within("g"))?;
        for &n in &self.ladder {
            self.rung(n)?;
        }
        Ok(())
    }

    /// Builds the dynamics and time scales at ladder level `n`.
    pub fn rung(&self, n: usize) -> Result<Rung> {
        let geo = self.geography.at(n).map_err(|e| e.within("geography"))?;
        let kernel =
            MigrationKernel::build(&geo, &self.kernel, self.kernel_options).map_err(|e| e.within("kernel"))?;
        let profile = self.seedbank.profile(n).map_err(|e| e.within("seedbank"))?;
        let scales = time_scales(&geo, &profile, self.model);
        let dt = self.dt.unwrap_or_else(|| default_dt(&kernel, &profile));
        let dynamics = Dynamics::new(self.model, kernel, profile, self.g.clone(), None)
            .map_err(|e| e.within("model"))?;
        let unit = match self.time_unit {
            TimeUnit::Beta => scales.beta,
            TimeUnit::BetaStar => scales
                .beta_star
                .ok_or_else(|| Error::config("time_unit", "beta_star needs a polynomial seed-bank"))?,
            TimeUnit::BetaDoubleStar => scales
                .beta_double_star
                .filter(|b| b.is_finite())
                .ok_or_else(|| Error::config("time_unit", "beta_double_star is infinite or undefined here"))?,
            TimeUnit::Absolute => 1.0,
        };
        Ok(Rung { n, dynamics, scales, unit, dt })
    }

    pub fn rungs(&self) -> Result<Vec<Rung>> {
        self.ladder.iter().map(|&n| self.rung(n)).collect()
    }

    /// Initial state at density `θ`.
    pub fn initial_state<R: Rng + ?Sized>(&self, sites: usize, colours: usize, rng: &mut R) -> Result<SystemState> {
        self.initial.sample(sites, colours, self.theta, rng)
    }

    /// Refuses when `projected` exceeds the budget.
    pub fn check_budget(&self, projected: f64, detail: impl Into<String>) -> Result<()> {
        if projected > self.budget {
            return Err(Error::Budget { projected, budget: self.budget, detail: detail.into() });
        }
        Ok(())
    }

    /// Projected component updates of [`super::finite_systems_run`].
    pub fn projected_cost(&self) -> Result<f64> {
        let last = self.times.last().copied().unwrap_or(0.0);
        Ok(self
            .rungs()?
            .iter()
            .map(|r| r.cost_rate() * last * r.unit * self.replicas as f64)
            .sum())
    }
}
