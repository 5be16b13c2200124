use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::SystemState;
use crate::geometry::{estimate_mixing_time, MixingOptions};
use crate::parallel::Workers;
use crate::rng::{child_master, stream};
use crate::stats::Estimate;

use super::scales::{GrowthRegime, TimeScaleReport, SCALE_SEPARATION};
use super::spec::ExperimentSpec;

/// Fraction of `θ(1-θ)` below which a layer counts as clustered.
pub const CLUSTERED_FRACTION: f64 = 0.05;
/// Tolerance of the mixing time reported against `(β**)^γ`.
pub const MIXING_TOLERANCE: f64 = 0.1;

/// `L_n = floor(t^{1/β} / 10)`.
pub fn shallow_depth(t: f64, beta: f64) -> usize {
    (t.powf(1.0 / beta) / 10.0).floor().max(0.0) as usize
}

/// Mean of `z_u (1 - z_v)` over ordered pairs `u ≠ v`.
pub fn pair_diagnostic(z: impl Iterator<Item = f64> + Clone) -> f64 {
    let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
    for v in z {
        n += 1.0;
        s += v;
        s2 += v * (1.0 - v);
    }
    if n < 2.0 {
        return 0.0;
    }
    (s * (n - s) - s2) / (n * (n - 1.0))
}

/// Active components and colours `0..=depth` of every site.
fn layer(state: &SystemState, depth: usize) -> impl Iterator<Item = f64> + Clone + '_ {
    let c = state.colours();
    let d = depth.min(c - 1);
    state.x.iter().copied().chain((0..state.sites()).flat_map(move |i| state.dormant(i)[..=d].iter().copied()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimeRange {
    /// `t < β**`.
    Equilibrium,
    /// `β** ≤ t < β*`.
    Partial,
    /// `t ≥ β*`.
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Pattern {
    /// Shallow diagnostic near `θ(1-θ)`.
    Diverse,
    /// Shallow layer clustered, deep layer not.
    PartiallyClustered,
    /// Every layer clustered.
    Clustered,
    Intermediate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub t: f64,
    pub range: TimeRange,
    /// `L_n` at this time, capped at the deepest colour.
    pub depth: usize,
    pub shallow: Estimate,
    pub full: Estimate,
    /// Site mean of the colours deeper than `L_n`, if any.
    pub deep_mean: Option<Estimate>,
    /// Frequency of `Υ̂ = 1`: the shallow layer sits above one half.
    pub upsilon: Estimate,
    pub pattern: Pattern,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringReport {
    pub theta: f64,
    pub scales: TimeScaleReport,
    /// `ψ_n` at tolerance [`MIXING_TOLERANCE`], when computable.
    pub mixing_time: Option<f64>,
    pub warnings: Vec<String>,
    pub probes: Vec<ProbeReport>,
}

struct Sample {
    shallow: f64,
    full: f64,
    deep: Option<f64>,
    upsilon: f64,
}

fn classify(h: f64, shallow: f64, full: f64) -> Pattern {
    let cut = CLUSTERED_FRACTION * h;
    if full < cut {
        Pattern::Clustered
    } else if shallow < cut {
        Pattern::PartiallyClustered
    } else if shallow > 0.5 * h {
        Pattern::Diverse
    } else {
        Pattern::Intermediate
    }
}

/// Depth-resolved clustering statistics of the largest ladder entry at the
/// absolute `probes`.
pub fn clustering_diagnostics(spec: &ExperimentSpec, probes: &[f64], workers: &Workers) -> Result<ClusteringReport> {
    spec.validate()?;
    if probes.is_empty() || probes.windows(2).any(|w| w[1] <= w[0]) || probes[0] < 0.0 {
        return Err(Error::config("probes", "need non-negative, strictly increasing probe times"));
    }
    let n = *spec.ladder.last().expect("validated ladder");
    let rung = spec.rung(n)?;
    let scales = rung.scales;
    let beta = rung
        .dynamics
        .profile()
        .wake_exponent()
        .ok_or_else(|| Error::config("seedbank", "depth-resolved diagnostics need a polynomial seed-bank"))?;
    let last = *probes.last().expect("non-empty probes");
    spec.check_budget(rung.cost_rate() * last * spec.replicas as f64, "clustering diagnostics")?;

    let mut warnings = Vec::new();
    if scales.regime != GrowthRegime::II {
        warnings.push(format!("growth regime is {:?}, not II", scales.regime));
    }
    let mixing_time = estimate_mixing_time(rung.dynamics.kernel(), MixingOptions::new(MIXING_TOLERANCE)).ok();
    if let (Some(psi), Some(bss), Some(g)) = (mixing_time, scales.beta_double_star, scales.gamma) {
        let bound = bss.powf(g);
        if psi > SCALE_SEPARATION * bound {
            warnings.push(format!("mixing time {psi:.3e} is not small against (beta**)^gamma = {bound:.3e}"));
        }
    }

    let deepest = rung.colours() - 1;
    let depths: Vec<usize> = probes.iter().map(|&t| shallow_depth(t, beta).min(deepest)).collect();
    let master = child_master(spec.seed, "clustering", n as u64);
    let runs = workers.try_map(spec.replicas, |r| -> Result<Vec<Sample>> {
        let mut rng = stream(master, r as u64, "forward");
        let mut state = spec.initial_state(rung.sites(), rung.colours(), &mut rng)?;
        let mut stepper = rung.dynamics.stepper();
        let mut out = Vec::with_capacity(probes.len());
        for (&t, &l) in probes.iter().zip(&depths) {
            stepper.advance(&mut state, t, rung.dt, &mut rng, |_, _, _| true)?;
            let shallow_layer = layer(&state, l);
            let count = shallow_layer.clone().count() as f64;
            let shallow_mean = shallow_layer.clone().sum::<f64>() / count;
            let deep = (l < deepest).then(|| {
                let c = state.colours();
                let vals = (0..state.sites()).flat_map(|i| state.dormant(i)[l + 1..c].iter().copied());
                vals.clone().sum::<f64>() / vals.count() as f64
            });
            out.push(Sample {
                shallow: pair_diagnostic(shallow_layer),
                full: pair_diagnostic(layer(&state, deepest)),
                deep,
                upsilon: f64::from(shallow_mean > 0.5),
            });
        }
        Ok(out)
    })?;

    let h = spec.theta * (1.0 - spec.theta);
    let probes = probes
        .iter()
        .zip(&depths)
        .enumerate()
        .map(|(k, (&t, &depth))| {
            let col = |f: &dyn Fn(&Sample) -> f64| Estimate::from_samples(&runs.iter().map(|r| f(&r[k])).collect::<Vec<_>>());
            let shallow = col(&|s| s.shallow);
            let full = col(&|s| s.full);
            let deep_mean = runs[0][k].deep.map(|_| col(&|s| s.deep.unwrap_or(f64::NAN)));
            let range = match (scales.beta_double_star, scales.beta_star) {
                (Some(bss), _) if t < bss => TimeRange::Equilibrium,
                (_, Some(bs)) if t < bs => TimeRange::Partial,
                _ => TimeRange::Complete,
            };
            ProbeReport {
                t,
                range,
                depth,
                shallow,
                full,
                deep_mean,
                upsilon: col(&|s| s.upsilon),
                pattern: classify(h, shallow.value, full.value),
            }
        })
        .collect();
    Ok(ClusteringReport { theta: spec.theta, scales, mixing_time, warnings, probes })
}
