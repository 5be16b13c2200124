use rand::Rng;
use serde::Serialize;

use super::lineage::{Lineage, LineageDynamics};
use crate::error::{Error, Result};
use crate::parallel::Workers;
use crate::rng::stream;
use crate::seedbank::Mode;
use crate::stats::{linear_fit, LinearFit, Moments};

/// Grid density of the hazard profile.
const POINTS_PER_DECADE: usize = 20;
const PROFILE_DECADES: usize = 3;
/// Relative growth over the last decade below which the profile counts as
/// converged.
pub const PLATEAU_GROWTH: f64 = 0.01;

fn jointly_active(a: &Lineage, b: &Lineage) -> bool {
    a.site == b.site && a.mode == Mode::Active && b.mode == Mode::Active
}

/// Runs two independent (non-coalescing) lineages up to `horizon` and
/// reports every maximal constant stretch `(start, end, jointly_active)`.
fn walk_pair<R, F>(dual: &LineageDynamics, a: Lineage, b: Lineage, horizon: f64, rng: &mut R, mut segment: F)
where
    R: Rng + ?Sized,
    F: FnMut(f64, f64, bool),
{
    let mut cur = [a, b];
    let mut pending = [dual.step(&a, rng), dual.step(&b, rng)];
    let mut due = [pending[0].0, pending[1].0];
    let mut now = 0.0;
    loop {
        let k = if due[0] <= due[1] { 0 } else { 1 };
        let until = due[k].min(horizon);
        if until > now {
            segment(now, until, jointly_active(&cur[0], &cur[1]));
        }
        if due[k] >= horizon {
            return;
        }
        now = due[k];
        cur[k] = pending[k].1;
        pending[k] = dual.step(&cur[k], rng);
        due[k] = now + pending[k].0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HazardPoint {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
}

/// Replica-mean joint activity time of two lineages and its profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardEstimate {
    /// `Ĥ(T)`.
    pub value: f64,
    pub std_error: f64,
    /// `t ↦ Ĥ(t)` on a log grid covering the last three decades up to `T`.
    pub profile: Vec<HazardPoint>,
    /// `(Ĥ(T) - Ĥ(T/10)) / Ĥ(T)`.
    pub last_decade_growth: f64,
    pub plateau: bool,
    /// Least-squares slope of the profile over `[T/2, T]`.
    pub tail_slope: LinearFit,
}

fn profile_grid(horizon: f64) -> Vec<f64> {
    let points = POINTS_PER_DECADE * PROFILE_DECADES;
    (0..=points)
        .map(|k| horizon * 10f64.powf(k as f64 / POINTS_PER_DECADE as f64 - PROFILE_DECADES as f64))
        .collect()
}

/// Accumulated joint activity of one pair at each grid time.
pub fn joint_activity_profile<R: Rng + ?Sized>(
    dual: &LineageDynamics,
    a: Lineage,
    b: Lineage,
    grid: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let horizon = *grid.last().expect("non-empty grid");
    let mut out = vec![0.0; grid.len()];
    let mut acc = 0.0;
    let mut next = 0;
    walk_pair(dual, a, b, horizon, rng, |t0, t1, joint| {
        while next < grid.len() && grid[next] <= t1 {
            out[next] = acc + if joint { grid[next] - t0 } else { 0.0 };
            next += 1;
        }
        if joint {
            acc += t1 - t0;
        }
    });
    for v in &mut out[next..] {
        *v = acc;
    }
    out
}

/// Estimates the hazard of two lineages started at `u1` and `u2`.
pub fn estimate_hazard(
    dual: &LineageDynamics,
    u1: (usize, Mode),
    u2: (usize, Mode),
    horizon: f64,
    replicas: usize,
    seed: u64,
    workers: &Workers,
) -> Result<HazardEstimate> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("T", format!("horizon must be positive, got {horizon}")));
    }
    if replicas < 2 {
        return Err(Error::invalid("replicas", "need at least two replicas"));
    }
    let grid = profile_grid(horizon);
    let runs = workers.map(replicas, |r| {
        let mut rng = stream(seed, r as u64, "hazard");
        joint_activity_profile(dual, Lineage::new(0, u1.0, u1.1), Lineage::new(1, u2.0, u2.1), &grid, &mut rng)
    });
    let profile: Vec<HazardPoint> = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let m: Moments = runs.iter().map(|r| r[k]).collect();
            HazardPoint { t, mean: m.mean(), std_error: m.std_error() }
        })
        .collect();
    let last = *profile.last().expect("non-empty profile");
    let decade = profile[profile.len() - 1 - POINTS_PER_DECADE];
    let last_decade_growth = if last.mean > 0.0 { (last.mean - decade.mean) / last.mean } else { 0.0 };
    let tail: Vec<&HazardPoint> = profile.iter().filter(|p| p.t >= 0.5 * horizon).collect();
    let tail_slope = linear_fit(
        &tail.iter().map(|p| p.t).collect::<Vec<_>>(),
        &tail.iter().map(|p| p.mean).collect::<Vec<_>>(),
    );
    Ok(HazardEstimate {
        value: last.mean,
        std_error: last.std_error,
        profile,
        last_decade_growth,
        plateau: last_decade_growth < PLATEAU_GROWTH,
        tail_slope,
    })
}

/// A maximal stretch of joint activity (`on`) or its absence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub on: bool,
    pub start: f64,
    pub length: f64,
    /// Cut by the horizon.
    pub censored: bool,
}

/// Alternating on/off sequence of co-located joint activity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bursts {
    pub horizon: f64,
    pub intervals: Vec<Interval>,
}

impl Bursts {
    /// Completed on-stretches `ζ_k`.
    pub fn on_lengths(&self) -> Vec<f64> {
        self.lengths(true)
    }

    /// Completed off-stretches `η_k`.
    pub fn off_lengths(&self) -> Vec<f64> {
        self.lengths(false)
    }

    fn lengths(&self, on: bool) -> Vec<f64> {
        self.intervals.iter().filter(|i| i.on == on && !i.censored).map(|i| i.length).collect()
    }

    /// `K(t)`: on-stretches begun by `t`.
    pub fn count(&self, t: f64) -> usize {
        self.intervals.iter().filter(|i| i.on && i.start <= t).count()
    }

    /// `C(t)`: total joint activity up to `t`.
    pub fn total(&self, t: f64) -> f64 {
        self.intervals
            .iter()
            .filter(|i| i.on && i.start < t)
            .map(|i| i.length.min(t - i.start))
            .sum()
    }
}

/// Records the on/off stretches of two non-coalescing lineages.
pub fn joint_activity_bursts<R: Rng + ?Sized>(
    dual: &LineageDynamics,
    u1: (usize, Mode),
    u2: (usize, Mode),
    horizon: f64,
    rng: &mut R,
) -> Result<Bursts> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
    }
    let mut intervals: Vec<Interval> = Vec::new();
    walk_pair(dual, Lineage::new(0, u1.0, u1.1), Lineage::new(1, u2.0, u2.1), horizon, rng, |t0, t1, on| {
        match intervals.last_mut() {
            Some(last) if last.on == on => last.length += t1 - t0,
            _ => intervals.push(Interval { on, start: t0, length: t1 - t0, censored: false }),
        }
    });
    if let Some(last) = intervals.last_mut() {
        last.censored = true;
    }
    Ok(Bursts { horizon, intervals })
}
