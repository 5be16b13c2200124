use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;
use serde::Serialize;

use super::diffusion::DiffusionFunction;
use super::state::{Model, SystemState};
use crate::error::{Error, Result};
use crate::geometry::{Geography, MigrationKernel};
use crate::seedbank::SeedBankProfile;

/// Probability kernel `a_m(0, ·)` used by Model 3 to relocate individuals on
/// exchange. Entries include the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    entries: Vec<(usize, f64)>,
}

impl Displacement {
    pub fn identity() -> Self {
        Displacement { entries: vec![(0, 1.0)] }
    }

    /// From a full row `p(0, ·)` that sums to one.
    pub fn from_row(row: &[f64]) -> Result<Self> {
        if row.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("displacement", "probabilities must be non-negative"));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("displacement", format!("row sums to {total}, not 1")));
        }
        Ok(Displacement {
            entries: row.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(j, p)| (j, *p)).collect(),
        })
    }

    /// Normalised row of a migration kernel, including its self mass.
    pub fn from_kernel(kernel: &MigrationKernel) -> Result<Self> {
        let mass = kernel.row_mass();
        if !(mass > 0.0) {
            return Err(Error::invalid("displacement", "kernel has no mass"));
        }
        let row: Vec<f64> = kernel.row().iter().map(|r| r / mass).collect();
        Self::from_row(&row)
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }
}

/// Everything that determines the forward dynamics.
#[derive(Debug, Clone)]
pub struct Dynamics {
    model: Model,
    kernel: MigrationKernel,
    profile: SeedBankProfile,
    g: DiffusionFunction,
    displacement: Vec<Displacement>,
    sites: usize,
    /// `mig_targets[i * m + k] = i + jumps[k]`.
    mig_targets: Vec<u32>,
    mig_rates: Vec<f64>,
    /// Per colour: `(targets i + o, sources i - o, probabilities)`.
    disp_tables: Vec<(Vec<u32>, Vec<u32>, Vec<f64>)>,
    ke: Vec<f64>,
}

/// Increment of the increasing process of `θ̂` over one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncreasingIncrement {
    /// `dt Σ_i g(x_i) / (|G|^2 κ)` on the natural clock.
    pub unscaled: f64,
    /// `dt Σ_i g(x_i) / |G|` on the clock sped up by `κ |G|`.
    pub rescaled: f64,
}

pub fn increasing_process_increment(
    state: &SystemState,
    g: &DiffusionFunction,
    profile: &SeedBankProfile,
    dt: f64,
) -> IncreasingIncrement {
    let n = state.sites() as f64;
    let sum_g: f64 = state.x.iter().map(|&x| g.eval(x)).sum();
    IncreasingIncrement {
        unscaled: dt * sum_g / (n * n * profile.kappa()),
        rescaled: dt * sum_g / n,
    }
}

/// `min(0.01, 0.1 / (migration + sleep + fastest wake-up rate))`.
pub fn default_dt(kernel: &MigrationKernel, profile: &SeedBankProfile) -> f64 {
    let total = kernel.jump_rate() + profile.chi() + profile.max_rate();
    (0.1 / total).min(0.01)
}

impl Dynamics {
    pub fn new(
        model: Model,
        kernel: MigrationKernel,
        profile: SeedBankProfile,
        g: DiffusionFunction,
        displacement: Option<Vec<Displacement>>,
    ) -> Result<Self> {
        g.validate()?;
        if model == Model::M1 && profile.colours() != 1 {
            return Err(Error::invalid("model", "Model 1 has a single seed-bank colour"));
        }
        let displacement = match (model, displacement) {
            (Model::M3, Some(d)) if d.len() == profile.colours() => d,
            (Model::M3, _) => {
                return Err(Error::invalid("displacement", "Model 3 needs one displacement kernel per colour"))
            }
            (_, Some(_)) => return Err(Error::invalid("displacement", "only Model 3 displaces seeds")),
            (_, None) => Vec::new(),
        };
        let geo = kernel.geography().clone();
        let offsets: Vec<usize> = kernel.jumps().iter().map(|(j, _)| *j).collect();
        let mig_targets = geo.translation_table(&offsets);
        let mig_rates = kernel.jumps().iter().map(|(_, r)| *r).collect();
        let disp_tables = displacement
            .iter()
            .map(|d| {
                let fwd: Vec<usize> = d.entries().iter().map(|(o, _)| *o).collect();
                let bwd: Vec<usize> = fwd.iter().map(|o| geo.neg(*o)).collect();
                (
                    geo.translation_table(&fwd),
                    geo.translation_table(&bwd),
                    d.entries().iter().map(|(_, p)| *p).collect(),
                )
            })
            .collect();
        let ke = profile.k().iter().zip(profile.e()).map(|(k, e)| k * e).collect();
        Ok(Dynamics {
            model,
            sites: geo.size(),
            kernel,
            profile,
            g,
            displacement,
            mig_targets,
            mig_rates,
            disp_tables,
            ke,
        })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn kernel(&self) -> &MigrationKernel {
        &self.kernel
    }

    pub fn geography(&self) -> &Geography {
        self.kernel.geography()
    }

    pub fn profile(&self) -> &SeedBankProfile {
        &self.profile
    }

    pub fn diffusion(&self) -> &DiffusionFunction {
        &self.g
    }

    pub fn displacement(&self) -> &[Displacement] {
        &self.displacement
    }

    pub fn default_dt(&self) -> f64 {
        default_dt(&self.kernel, &self.profile)
    }

    /// Component updates per unit of time at step `dt`: drift, noise and
    /// exchange per colour plus one term per migration target.
    pub fn cost_rate(&self, dt: f64) -> f64 {
        let per_site = 2.0 * self.profile.colours() as f64 + 1.0 + self.mig_rates.len() as f64;
        self.sites as f64 * per_site / dt
    }

    fn check(&self, state: &SystemState) -> Result<()> {
        if state.sites() != self.sites || state.colours() != self.profile.colours() {
            return Err(Error::invalid(
                "state",
                format!(
                    "state has {} sites x {} colours, dynamics expects {} x {}",
                    state.sites(),
                    state.colours(),
                    self.sites,
                    self.profile.colours()
                ),
            ));
        }
        Ok(())
    }

    /// Drift of every component, written into `dx` and `dy`.
    pub fn drift_into(&self, state: &SystemState, dx: &mut [f64], dy: &mut [f64]) -> Result<()> {
        self.check(state)?;
        let c = self.profile.colours();
        let e = self.profile.e();
        let nnz = self.mig_rates.len();
        for i in 0..self.sites {
            let xi = state.x[i];
            let targets = &self.mig_targets[i * nnz..(i + 1) * nnz];
            let mut mig = 0.0;
            for (&t, &r) in targets.iter().zip(&self.mig_rates) {
                mig += r * (state.x[t as usize] - xi);
            }
            let mut exchange = 0.0;
            match self.model {
                Model::M1 | Model::M2 => {
                    let yi = state.dormant(i);
                    for m in 0..c {
                        exchange += self.ke[m] * (yi[m] - xi);
                        dy[i * c + m] = e[m] * (xi - yi[m]);
                    }
                }
                Model::M3 => {
                    for m in 0..c {
                        let (fwd, bwd, probs) = &self.disp_tables[m];
                        let k = probs.len();
                        // Seeds of colour m at j = i - o feed the active layer at i.
                        let mut into_active = 0.0;
                        let mut into_dormant = 0.0;
                        let yim = state.y[i * c + m];
                        for s in 0..k {
                            let src = bwd[i * k + s] as usize;
                            let dst = fwd[i * k + s] as usize;
                            into_active += probs[s] * (state.y[src * c + m] - xi);
                            into_dormant += probs[s] * (state.x[dst] - yim);
                        }
                        exchange += self.ke[m] * into_active;
                        dy[i * c + m] = e[m] * into_dormant;
                    }
                }
            }
            dx[i] = mig + exchange;
        }
        Ok(())
    }

    /// Allocating convenience wrapper around [`Dynamics::drift_into`].
    pub fn drift(&self, state: &SystemState) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut dx = vec![0.0; state.x.len()];
        let mut dy = vec![0.0; state.y.len()];
        self.drift_into(state, &mut dx, &mut dy)?;
        Ok((dx, dy))
    }

    /// Reusable scratch space for stepping.
    pub fn stepper(&self) -> Stepper<'_> {
        Stepper {
            dynamics: self,
            dx: vec![0.0; self.sites],
            dy: vec![0.0; self.sites * self.profile.colours()],
        }
    }
}

/// Gaussian increments are used while `Z_SAFE` standard deviations fit
/// between the post-drift value and both traps.
const Z_SAFE: f64 = 8.0;

/// Noise increment `ξ` of one active component with post-drift value
/// `mean` and standard deviation `sigma`, driven by the normal draw `z`.
///
/// Away from the traps `ξ = σ z`. Near a trap, where clamping a Gaussian
/// step would bias the mean upwards at 0 and downwards at 1, `ξ` is a
/// two-point variable with mean zero and variance `min(σ², m(1-m))`
/// supported in `[-m, 1-m]`, selected by the sign of `Φ(z) - p`.
pub fn noise_increment(mean: f64, sigma: f64, z: f64) -> f64 {
    let room = mean.min(1.0 - mean);
    if sigma == 0.0 || sigma * Z_SAFE <= room {
        return sigma * z;
    }
    let var = (sigma * sigma).min(mean * (1.0 - mean));
    if var <= 0.0 {
        return 0.0;
    }
    let sd = var.sqrt();
    // Up-step `up` with probability `p = down / (up + down)`.
    let (up, down) = if sd <= room {
        (sd, sd)
    } else if mean < 0.5 {
        (var / mean, mean)
    } else {
        (1.0 - mean, var / (1.0 - mean))
    };
    let p = down / (up + down);
    let u = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    if u < p {
        up
    } else {
        -down
    }
}

/// Euler-Maruyama integrator bound to one [`Dynamics`].
pub struct Stepper<'a> {
    dynamics: &'a Dynamics,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl Stepper<'_> {
    /// One Euler-Maruyama step, with the bounded increment of
    /// [`noise_increment`] near the traps and clamping to `[0, 1]`. Returns
    /// `Σ_i g(x_i)` at the start of the step.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut SystemState, dt: f64, rng: &mut R) -> Result<f64> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", "step must be positive"));
        }
        let d = self.dynamics;
        d.drift_into(state, &mut self.dx, &mut self.dy)?;
        let sqrt_dt = dt.sqrt();
        let mut sum_g = 0.0;
        for (x, dx) in state.x.iter_mut().zip(&self.dx) {
            let gx = d.g.eval(*x);
            sum_g += gx;
            let z: f64 = rng.sample(StandardNormal);
            let mean = (*x + dx * dt).clamp(0.0, 1.0);
            *x = (mean + noise_increment(mean, gx.sqrt() * sqrt_dt, z)).clamp(0.0, 1.0);
        }
        for (y, dy) in state.y.iter_mut().zip(&self.dy) {
            *y = (*y + dy * dt).clamp(0.0, 1.0);
        }
        state.time += dt;
        Ok(sum_g)
    }

    /// Steps until `state.time` reaches `until`, shortening the last step to
    /// land on it exactly. `on_step(state, dt, Σg)` runs after every step and
    /// may stop the run early by returning `false`. Returns whether `until`
    /// was reached.
    pub fn advance<R, F>(&mut self, state: &mut SystemState, until: f64, dt: f64, rng: &mut R, mut on_step: F) -> Result<bool>
    where
        R: Rng + ?Sized,
        F: FnMut(&SystemState, f64, f64) -> bool,
    {
        while state.time < until {
            let remaining = until - state.time;
            // Avoid a sliver step from rounding of the accumulated clock.
            let h = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
            let sum_g = self.step(state, h, rng)?;
            if h == remaining {
                state.time = until;
            }
            if !on_step(state, h, sum_g) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// One sampled point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub theta_hat: f64,
    pub theta_x: f64,
    pub diversity: f64,
    /// Accumulated increasing process of `θ̂` (natural clock).
    pub qvar: f64,
    pub snapshot: Option<SystemState>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Observation>,
}

impl Dynamics {
    fn observe(&self, state: &SystemState, qvar: f64, snapshot: bool) -> Observation {
        let (theta_hat, theta_x) = state.macroscopic(&self.profile);
        let diversity = state.x.iter().map(|x| x * (1.0 - x)).sum::<f64>() / state.sites() as f64;
        Observation {
            time: state.time,
            theta_hat,
            theta_x,
            diversity,
            qvar,
            snapshot: snapshot.then(|| state.clone()),
        }
    }

    /// Integrates from `state0`, recording observables at each of `times`.
    pub fn run<R: Rng + ?Sized>(
        &self,
        state0: SystemState,
        times: &[f64],
        dt: f64,
        snapshots: bool,
        rng: &mut R,
    ) -> Result<Trajectory> {
        self.check(&state0)?;
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("times", "observation times must be strictly increasing"));
        }
        if times.first().is_some_and(|t| *t < state0.time) {
            return Err(Error::invalid("times", "observation before the initial time"));
        }
        let mut state = state0;
        let mut stepper = self.stepper();
        let n = self.sites as f64;
        let scale = 1.0 / (n * n * self.profile.kappa());
        let mut qvar = 0.0;
        let mut records = Vec::with_capacity(times.len());
        for &t in times {
            stepper.advance(&mut state, t, dt, rng, |_, h, sum_g| {
                qvar += h * sum_g * scale;
                true
            })?;
            records.push(self.observe(&state, qvar, snapshots));
        }
        Ok(Trajectory { records })
    }
}
