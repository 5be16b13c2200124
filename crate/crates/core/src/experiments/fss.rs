use serde::Serialize;

use crate::error::Result;
use crate::forward::DepthMoments;
use crate::parallel::Workers;
use crate::rng::{child_master, stream};

use super::scales::TimeScaleReport;
use super::spec::{ExperimentSpec, Observable, Rung};

/// Observables of one replica on the macroscopic grid. Unselected
/// observables stay empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaPath {
    pub theta_hat: Vec<f64>,
    pub theta_x: Vec<f64>,
    pub diversity: Vec<f64>,
    pub final_moments: Option<DepthMoments>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RungResult {
    pub n: usize,
    pub sites: usize,
    pub scales: TimeScaleReport,
    /// Absolute length of one macroscopic time unit.
    pub unit: f64,
    pub dt: f64,
    pub paths: Vec<ReplicaPath>,
}

impl RungResult {
    /// `θ̂` of every replica at grid index `k`.
    pub fn theta_hat_at(&self, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.theta_hat[k]).collect()
    }

    pub fn diversity_at(&self, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.diversity[k]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FssResult {
    /// Macroscopic grid.
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    pub projected_cost: f64,
    pub rungs: Vec<RungResult>,
}

/// Seed family of ladder entry `n`.
pub fn rung_master(seed: u64, n: usize) -> u64 {
    child_master(seed, "fss", n as u64)
}

fn run_replica(spec: &ExperimentSpec, rung: &Rung, master: u64, replica: usize) -> Result<ReplicaPath> {
    let dynamics = &rung.dynamics;
    let profile = dynamics.profile();
    let mut rng = stream(master, replica as u64, "forward");
    let mut state = spec.initial_state(rung.sites(), rung.colours(), &mut rng)?;
    let mut stepper = dynamics.stepper();
    let want = |o: Observable| spec.observables.contains(&o);
    let mut path = ReplicaPath { theta_hat: Vec::new(), theta_x: Vec::new(), diversity: Vec::new(), final_moments: None };
    for &s in &spec.times {
        stepper.advance(&mut state, s * rung.unit, rung.dt, &mut rng, |_, _, _| true)?;
        let (th, tx) = state.macroscopic(profile);
        if want(Observable::ThetaHat) {
            path.theta_hat.push(th);
        }
        if want(Observable::ThetaX) {
            path.theta_x.push(tx);
        }
        if want(Observable::Diversity) {
            path.diversity.push(state.x.iter().map(|x| x * (1.0 - x)).sum::<f64>() / rung.sites() as f64);
        }
    }
    if want(Observable::DepthMoments) {
        path.final_moments = Some(state.depth_moments(rung.colours() - 1)?);
    }
    Ok(path)
}

/// Runs the replica ensemble at every ladder entry, sampling on the grid
/// `s · unit_n`. Refuses before any work when the projected cost exceeds
/// the budget.
pub fn finite_systems_run(spec: &ExperimentSpec, workers: &Workers) -> Result<FssResult> {
    spec.validate()?;
    let rungs = spec.rungs()?;
    let projected_cost = spec.projected_cost()?;
    spec.check_budget(projected_cost, format!("{} replicas over ladder {:?}", spec.replicas, spec.ladder))?;
    let mut out = Vec::with_capacity(rungs.len());
    for rung in &rungs {
        let master = rung_master(spec.seed, rung.n);
        let paths = workers.try_map(spec.replicas, |r| run_replica(spec, rung, master, r))?;
        out.push(RungResult {
            n: rung.n,
            sites: rung.sites(),
            scales: rung.scales,
            unit: rung.unit,
            dt: rung.dt,
            paths,
        });
    }
    Ok(FssResult { times: spec.times.clone(), observables: spec.observables.clone(), projected_cost, rungs: out })
}
