use serde::Serialize;

use crate::criteria::renormalize_fw;
use crate::dual::{estimate_hazard, HazardEstimate, LineageDynamics};
use crate::error::{Error, Result};
use crate::forward::{noise_increment, DiffusionFunction, Dynamics};
use crate::parallel::Workers;
use crate::rng::{child_master, stream};
use crate::seedbank::Mode;
use crate::stats::{ks_two_sample, median, ratio_estimate, Estimate, KsResult, Moments};

use super::spec::{ExperimentSpec, Rung};

/// Trap tolerance for hitting-time detection.
pub const TRAP_EPSILON: f64 = 1e-4;

/// Moves a frequency within `eps` of a trap onto the trap.
pub fn absorb(x: f64, eps: f64) -> f64 {
    if x <= eps {
        0.0
    } else if x >= 1.0 - eps {
        1.0
    } else {
        x
    }
}

/// Two-sample KS test after absorbing both ensembles at `TRAP_EPSILON`. A
/// finite system drains its dormant layers exponentially and never reaches
/// a trap exactly, while the reference diffusion stops on it.
pub fn trapped_ks(a: &[f64], b: &[f64]) -> KsResult {
    let snap = |v: &[f64]| v.iter().map(|&x| absorb(x, TRAP_EPSILON)).collect::<Vec<_>>();
    ks_two_sample(&snap(a), &snap(b))
}
/// Burn-in in units of the relaxation time.
pub const BURN_IN_RELAXATIONS: f64 = 10.0;

/// `max(1 / min_m e_m, 1 / spectral gap)`; a zero gap (one site) is
/// ignored.
pub fn relaxation_time(dynamics: &Dynamics) -> f64 {
    let wake = 1.0 / dynamics.profile().min_rate();
    let gap = dynamics.kernel().spectral_gap();
    if gap > 0.0 {
        wake.max(1.0 / gap)
    } else {
        wake
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FgOptions {
    pub burn_in_factor: f64,
    /// Averaging window; defaults to `10` relaxation times.
    pub window: Option<f64>,
    /// Horizon and replicas of the dual hazard estimate; zero replicas skip
    /// the variance route.
    pub hazard_horizon: f64,
    pub hazard_replicas: usize,
}

impl Default for FgOptions {
    fn default() -> Self {
        FgOptions { burn_in_factor: BURN_IN_RELAXATIONS, window: None, hazard_horizon: 1000.0, hazard_replicas: 2000 }
    }
}

/// Dual hazard `B̂(0,0)` on the finite geography.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardSummary {
    /// `Ĥ(T) - T / (κ |G|)`: joint activity beyond the uniform share.
    pub corrected: f64,
    pub estimate: HazardEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FgPoint {
    pub theta: f64,
    /// Replica mean of the window average of `|G|^{-1} Σ g(x_i)`.
    pub fg: Estimate,
    /// `F̂g / θ̂(1-θ̂)` as a ratio of window averages; absent at the traps.
    pub ratio: Option<Estimate>,
    /// Site variance divided by `B̂(0,0)`.
    pub variance_route: Option<Estimate>,
    /// Second-half minus first-half window average, in standard errors.
    pub halves_gap_se: f64,
    pub equilibrated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FgTable {
    pub sites: usize,
    pub relaxation: f64,
    pub burn_in: f64,
    pub window: f64,
    pub points: Vec<FgPoint>,
    pub hazard: Option<HazardSummary>,
    /// `d / (1 + d B̂)` for Fisher-Wright `g`.
    pub predicted_constant: Option<f64>,
}

impl FgTable {
    /// Piecewise-linear `F̂g` through the table and the endpoint zeros.
    pub fn eval(&self, theta: f64) -> f64 {
        let mut knots: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        knots.extend(self.points.iter().filter(|p| p.theta > 0.0 && p.theta < 1.0).map(|p| (p.theta, p.fg.value.max(0.0))));
        knots.push((1.0, 0.0));
        interpolate(&knots, theta)
    }

    /// `F̂g(θ) = c θ(1-θ)` with `c` the mean interior ratio.
    pub fn fitted_constant(&self) -> Option<f64> {
        let r: Vec<f64> = self.points.iter().filter_map(|p| p.ratio.map(|e| e.value)).collect();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    let k = knots.partition_point(|p| p.0 <= x).clamp(1, knots.len() - 1);
    let (x0, y0) = knots[k - 1];
    let (x1, y1) = knots[k];
    if x1 == x0 {
        y0
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

struct WindowAverages {
    fg: f64,
    fg_halves: (f64, f64),
    theta_var: f64,
    site_var: f64,
}

fn window_run(rung: &Rung, theta: f64, burn_in: f64, window: f64, master: u64, replica: usize) -> Result<WindowAverages> {
    let d = &rung.dynamics;
    let sites = rung.sites() as f64;
    let mut rng = stream(master, replica as u64, "forward");
    let mut state = crate::forward::SystemState::constant(rung.sites(), rung.colours(), theta)?;
    let mut stepper = d.stepper();
    stepper.advance(&mut state, burn_in, rung.dt, &mut rng, |_, _, _| true)?;
    let half = burn_in + 0.5 * window;
    let (mut g1, mut g2, mut tv, mut sv) = (0.0, 0.0, 0.0, 0.0);
    let profile = d.profile().clone();
    stepper.advance(&mut state, burn_in + window, rung.dt, &mut rng, |s, h, sum_g| {
        // Σg is evaluated at the start of the step.
        let start = s.time - h;
        if start < half {
            g1 += h * sum_g / sites;
        } else {
            g2 += h * sum_g / sites;
        }
        let (th, _) = s.macroscopic(&profile);
        tv += h * th * (1.0 - th);
        let mean = s.x.iter().sum::<f64>() / sites;
        sv += h * s.x.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / sites;
        true
    })?;
    Ok(WindowAverages {
        fg: (g1 + g2) / window,
        fg_halves: (2.0 * g1 / window, 2.0 * g2 / window),
        theta_var: tv / window,
        site_var: sv / window,
    })
}

/// Dual hazard of two active lineages at the origin, corrected for the
/// uniform share `T / (κ |G|)` of a finite geography.
pub fn finite_hazard(dynamics: &Dynamics, horizon: f64, replicas: usize, seed: u64, workers: &Workers) -> Result<HazardSummary> {
    let dual = LineageDynamics::from_forward(dynamics)?;
    let a = (0, Mode::Active);
    let estimate = estimate_hazard(&dual, a, a, horizon, replicas, seed, workers)?;
    let sites = dynamics.geography().size() as f64;
    let corrected = estimate.value - horizon / (dynamics.profile().kappa() * sites);
    Ok(HazardSummary { corrected, estimate })
}

/// Quasi-equilibrium `F̂g` on the largest ladder entry at each `θ`.
pub fn estimate_fg(spec: &ExperimentSpec, thetas: &[f64], options: FgOptions, workers: &Workers) -> Result<FgTable> {
    spec.validate()?;
    if thetas.is_empty() || thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::config("thetas", "need a non-empty grid inside [0, 1]"));
    }
    let n = *spec.ladder.last().expect("validated ladder");
    let rung = spec.rung(n)?;
    let relaxation = relaxation_time(&rung.dynamics);
    let burn_in = options.burn_in_factor * relaxation;
    let window = options.window.unwrap_or(10.0 * relaxation);
    if !(window > 0.0) || !(burn_in >= 0.0) {
        return Err(Error::config("window", "burn-in and window must be positive"));
    }
    let projected = rung.cost_rate() * (burn_in + window) * (spec.replicas * thetas.len()) as f64;
    spec.check_budget(projected, format!("F g estimate over {} values of theta", thetas.len()))?;
    let hazard = if options.hazard_replicas >= 2 {
        Some(finite_hazard(
            &rung.dynamics,
            options.hazard_horizon,
            options.hazard_replicas,
            child_master(spec.seed, "fg-hazard", 0),
            workers,
        )?)
    } else {
        None
    };
    let mut points = Vec::with_capacity(thetas.len());
    for (k, &theta) in thetas.iter().enumerate() {
        let master = child_master(spec.seed, "fg", k as u64);
        let runs = workers.try_map(spec.replicas, |r| window_run(&rung, theta, burn_in, window, master, r))?;
        let fg_samples: Vec<f64> = runs.iter().map(|w| w.fg).collect();
        let fg = Estimate::from_samples(&fg_samples);
        let interior = theta > 0.0 && theta < 1.0;
        let ratio = interior.then(|| ratio_estimate(&fg_samples, &runs.iter().map(|w| w.theta_var).collect::<Vec<_>>()));
        let variance_route = match &hazard {
            Some(h) if h.corrected > 0.0 => {
                let v = Estimate::from_samples(&runs.iter().map(|w| w.site_var).collect::<Vec<_>>());
                Some(Estimate { value: v.value / h.corrected, std_error: v.std_error / h.corrected })
            }
            _ => None,
        };
        let gap: Moments = runs.iter().map(|w| w.fg_halves.1 - w.fg_halves.0).collect();
        let halves_gap_se = if gap.std_error() > 0.0 { gap.mean() / gap.std_error() } else { 0.0 };
        points.push(FgPoint { theta, fg, ratio, variance_route, halves_gap_se, equilibrated: halves_gap_se.abs() <= 2.0 });
    }
    let predicted_constant = match (rung.dynamics.diffusion(), &hazard) {
        (DiffusionFunction::FisherWright { d }, Some(h)) => renormalize_fw(*d, h.corrected).ok(),
        _ => None,
    };
    Ok(FgTable { sites: rung.sites(), relaxation, burn_in, window, points, hazard, predicted_constant })
}

/// Euler-Maruyama paths of `dΘ = √(F(Θ)) dw`, sampled on `grid`, with the
/// same bounded increment near the traps as the forward integrator.
pub fn fg_diffusion_reference<F>(
    fg: F,
    theta0: f64,
    grid: &[f64],
    replicas: usize,
    dt: f64,
    seed: u64,
    workers: &Workers,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64) -> f64 + Sync,
{
    check_reference(theta0, dt)?;
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::invalid("grid", "must be non-negative and strictly increasing"));
    }
    Ok(workers.map(replicas, |r| {
        let mut rng = stream(seed, r as u64, "reference");
        let mut theta = theta0;
        let mut now = 0.0;
        grid.iter()
            .map(|&s| {
                while now < s {
                    let h = dt.min(s - now);
                    theta = reference_step(&fg, theta, h, &mut rng);
                    now = if h < dt { s } else { now + h };
                }
                theta
            })
            .collect()
    }))
}

/// First time the reference diffusion comes within `eps` of a trap, or
/// `None` when the horizon is reached first.
pub fn fg_reference_hitting_times<F>(
    fg: F,
    theta0: f64,
    replicas: usize,
    dt: f64,
    horizon: f64,
    eps: f64,
    seed: u64,
    workers: &Workers,
) -> Result<Vec<Option<f64>>>
where
    F: Fn(f64) -> f64 + Sync,
{
    check_reference(theta0, dt)?;
    Ok(workers.map(replicas, |r| {
        let mut rng = stream(seed, r as u64, "reference-hit");
        let mut theta = theta0;
        let mut now = 0.0;
        loop {
            if theta <= eps || theta >= 1.0 - eps {
                return Some(now);
            }
            if now >= horizon {
                return None;
            }
            theta = reference_step(&fg, theta, dt, &mut rng);
            now += dt;
        }
    }))
}

fn check_reference(theta0: f64, dt: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta0) {
        return Err(Error::invalid("theta0", "must lie in [0, 1]"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    Ok(())
}

fn reference_step<F: Fn(f64) -> f64, R: rand::Rng + ?Sized>(fg: &F, theta: f64, dt: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    let sigma = (fg(theta).max(0.0) * dt).sqrt();
    (theta + noise_increment(theta, sigma, z)).clamp(0.0, 1.0)
}

/// Hitting times `H_n / β_n` at one ladder entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrappingRung {
    pub n: usize,
    pub unit: f64,
    /// `None` when censored at the horizon.
    pub samples: Vec<Option<f64>>,
    pub censored_fraction: f64,
    /// Median counting censored samples as `+∞`; absent when half or more
    /// are censored.
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrappingReport {
    /// Whether the traps of `g` are reachable in finite time.
    pub accessible: bool,
    pub epsilon: f64,
    /// Horizon in macroscopic units.
    pub horizon: f64,
    pub rungs: Vec<TrappingRung>,
}

/// Median of possibly censored samples, censored counting as `+∞`.
pub fn censored_median(samples: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = samples.iter().map(|s| s.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(f64::total_cmp);
    let m = median(&v);
    m.is_finite().then_some(m)
}

/// First time every component lies within `eps` of a common trap, in units
/// of the macroscopic time scale, per ladder entry.
pub fn trapping_time(spec: &ExperimentSpec, horizon: f64, eps: f64, workers: &Workers) -> Result<TrappingReport> {
    spec.validate()?;
    if !(horizon > 0.0) || !(eps > 0.0) {
        return Err(Error::config("horizon", "horizon and epsilon must be positive"));
    }
    let rungs = spec.rungs()?;
    let projected: f64 = rungs.iter().map(|r| r.cost_rate() * horizon * r.unit * spec.replicas as f64).sum();
    spec.check_budget(projected, "trapping-time ensemble")?;
    let mut out = Vec::with_capacity(rungs.len());
    for rung in &rungs {
        let master = child_master(spec.seed, "trap", rung.n as u64);
        let samples = workers.try_map(spec.replicas, |r| -> Result<Option<f64>> {
            let mut rng = stream(master, r as u64, "forward");
            let mut state = spec.initial_state(rung.sites(), rung.colours(), &mut rng)?;
            if state.trapped(eps) {
                return Ok(Some(0.0));
            }
            let mut stepper = rung.dynamics.stepper();
            let done = stepper.advance(&mut state, horizon * rung.unit, rung.dt, &mut rng, |s, _, _| !s.trapped(eps))?;
            Ok((!done || state.trapped(eps)).then(|| state.time / rung.unit))
        })?;
        let censored = samples.iter().filter(|s| s.is_none()).count();
        out.push(TrappingRung {
            n: rung.n,
            unit: rung.unit,
            censored_fraction: censored as f64 / samples.len() as f64,
            median: censored_median(&samples),
            samples,
        });
    }
    Ok(TrappingReport { accessible: spec.g.traps_accessible(), epsilon: eps, horizon, rungs: out })
}
