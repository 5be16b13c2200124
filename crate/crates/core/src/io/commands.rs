//! Drivers behind the `seedbank-lab` subcommands. Each one gathers all
//! results before any file is written.

use serde::Serialize;

use crate::criteria::{classify_example, coexistence_integral, Evidence, RegimeVerdict};
use crate::dual::{estimate_hazard, run_coalescent, Event, EventKind, Lineage};
use crate::error::{Error, Result};
use crate::experiments::{
    clustering_diagnostics, estimate_fg, fg_diffusion_reference, fg_reference_hitting_times, finite_systems_run,
    renewal_intersection_exponent, trapped_ks, trapping_time, FgOptions, FgTable, FssResult, Observable,
};
use crate::parallel::Workers;
use crate::rng::{child_master, stream};
use crate::stats::{Estimate, KsResult};

use super::config::*;
use super::svg::{Histogram, LinePlot, Series};
use super::table::{Cell, Table};
use super::Emitter;

/// Replica paths drawn in a plot.
const PLOTTED_PATHS: usize = 50;
const HISTOGRAM_BINS: usize = 30;

/// Serialised name of a unit variant.
fn variant_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn estimate_cells(e: Option<Estimate>) -> [Cell; 2] {
    match e {
        Some(e) => [e.value.into(), e.std_error.into()],
        None => [Cell::Empty, Cell::Empty],
    }
}

pub fn run_forward(cfg: &ForwardConfig, out: &mut Emitter, workers: &Workers) -> Result<()> {
    let dynamics = cfg.system.dynamics(cfg.g.clone())?;
    let dt = cfg.dt.unwrap_or_else(|| dynamics.default_dt());
    let horizon = *cfg.times.last().expect("validated times");
    let projected = dynamics.cost_rate(dt) * horizon * cfg.replicas as f64;
    if projected > cfg.budget {
        return Err(Error::Budget { projected, budget: cfg.budget, detail: format!("{} forward replicas", cfg.replicas) });
    }
    let sites = dynamics.geography().size();
    let colours = dynamics.profile().colours();
    let runs = workers.try_map(cfg.replicas, |r| {
        let mut rng = stream(cfg.seed, r as u64, "forward");
        let state = cfg.initial.sample(sites, colours, cfg.theta, &mut rng)?;
        dynamics.run(state, &cfg.times, dt, false, &mut rng)
    })?;

    let mut table = Table::new(["replica", "time", "theta_hat", "theta_x", "diversity", "qvar"]);
    for (r, traj) in runs.iter().enumerate() {
        for o in &traj.records {
            table.push(vec![r.into(), o.time.into(), o.theta_hat.into(), o.theta_x.into(), o.diversity.into(), o.qvar.into()]);
        }
    }
    #[derive(Serialize)]
    struct Summary {
        time: f64,
        theta_hat: Estimate,
        theta_x: Estimate,
        diversity: Estimate,
    }
    let summary: Vec<Summary> = (0..cfg.times.len())
        .map(|k| {
            let col = |f: &dyn Fn(&crate::forward::Observation) -> f64| {
                Estimate::from_samples(&runs.iter().map(|t| f(&t.records[k])).collect::<Vec<_>>())
            };
            Summary {
                time: cfg.times[k],
                theta_hat: col(&|o| o.theta_hat),
                theta_x: col(&|o| o.theta_x),
                diversity: col(&|o| o.diversity),
            }
        })
        .collect();
    let plot = LinePlot {
        title: format!("macroscopic density, {sites} sites"),
        x_label: "t".into(),
        y_label: "theta_hat".into(),
        series: runs
            .iter()
            .take(PLOTTED_PATHS)
            .enumerate()
            .map(|(r, t)| Series {
                label: format!("replica {r}"),
                points: std::iter::once((0.0, cfg.theta)).chain(t.records.iter().map(|o| (o.time, o.theta_hat))).collect(),
            })
            .collect(),
    };
    out.csv("trajectories", &table)?;
    out.jsonl("summary", &summary)?;
    out.line_plot("theta_hat", &plot)
}

pub fn run_dual(cfg: &DualConfig, out: &mut Emitter, workers: &Workers) -> Result<()> {
    let dual = cfg.system.lineage_dynamics()?;
    let initial: Vec<Lineage> =
        cfg.lineages.iter().enumerate().map(|(k, l)| Lineage::new(k as u64, l.site, l.mode)).collect();
    let histories = workers.try_map(cfg.replicas, |r| {
        let mut rng = stream(cfg.seed, r as u64, "dual");
        run_coalescent(&initial, &dual, cfg.d, cfg.horizon, &mut rng)
    })?;
    let hazard = cfg
        .hazard
        .map(|h| {
            let a = &cfg.lineages[0];
            let b = &cfg.lineages[1];
            let seed = child_master(cfg.seed, "dual-hazard", 0);
            estimate_hazard(&dual, (a.site, a.mode), (b.site, b.mode), h.horizon, h.replicas, seed, workers)
        })
        .transpose()?;

    #[derive(Serialize)]
    struct Line<'a> {
        replica: usize,
        #[serde(flatten)]
        event: &'a Event,
    }
    let events: Vec<Line> =
        histories.iter().enumerate().flat_map(|(r, h)| h.events.iter().map(move |event| Line { replica: r, event })).collect();
    let mut table = Table::new(["replica", "first_coalescence", "coalescences", "blocks"]);
    for (r, h) in histories.iter().enumerate() {
        let merges = h.events.iter().filter(|e| e.kind == EventKind::Coalesce).count();
        table.push(vec![r.into(), h.first_coalescence().into(), merges.into(), h.partition.len().into()]);
    }
    out.csv("replicas", &table)?;
    if !events.is_empty() {
        out.jsonl("events", &events)?;
    }
    let firsts: Vec<f64> = histories.iter().filter_map(|h| h.first_coalescence()).collect();
    if !firsts.is_empty() {
        let hist = Histogram { title: "first coalescence time".into(), x_label: "t".into(), values: firsts, bins: HISTOGRAM_BINS };
        out.histogram("first_coalescence", &hist)?;
    }
    if let Some(h) = hazard {
        let mut t = Table::new(["t", "hazard", "std_error"]);
        for p in &h.profile {
            t.push(vec![p.t.into(), p.mean.into(), p.std_error.into()]);
        }
        out.csv("hazard", &t)?;
        out.jsonl("hazard", std::slice::from_ref(&h))?;
        let plot = LinePlot {
            title: "accumulated joint activity".into(),
            x_label: "t".into(),
            y_label: "H(t)".into(),
            series: vec![Series { label: "H(t)".into(), points: h.profile.iter().map(|p| (p.t, p.mean)).collect() }],
        };
        out.line_plot("hazard", &plot)?;
    }
    Ok(())
}

pub fn run_criteria(cfg: &CriteriaConfig, out: &mut Emitter) -> Result<()> {
    #[derive(Serialize)]
    struct Line {
        source: &'static str,
        index: usize,
        #[serde(flatten)]
        verdict: RegimeVerdict,
        #[serde(skip_serializing_if = "Option::is_none")]
        hierarchical: Option<crate::criteria::HierarchicalExponents>,
    }
    let mut lines = Vec::new();
    for (k, ex) in cfg.examples.iter().enumerate() {
        let v = classify_example(*ex).map_err(|e| Error::config(format!("examples[{k}]"), e.to_string()))?;
        lines.push(Line { source: "example", index: k, verdict: v.regime, hierarchical: v.hierarchical });
    }
    for (k, i) in cfg.integrals.iter().enumerate() {
        let v = coexistence_integral(&i.return_probability, i.criterion, i.horizon)
            .map_err(|e| Error::config(format!("integrals[{k}]"), e.to_string()))?;
        lines.push(Line { source: "integral", index: k, verdict: v, hierarchical: None });
    }
    let mut table = Table::new(["source", "index", "verdict", "margin", "value", "tail", "tail_exponent"]);
    for l in &lines {
        let mut row = vec![l.source.into(), l.index.into(), variant_name(&l.verdict.verdict).into()];
        match l.verdict.evidence {
            Evidence::ClosedForm { margin } => row.extend([margin.into(), Cell::Empty, Cell::Empty, Cell::Empty]),
            Evidence::NumericalIntegral { value, tail, tail_exponent, .. } => {
                row.extend([Cell::Empty, value.into(), tail.into(), tail_exponent.into()])
            }
        }
        table.push(row);
    }
    out.csv("verdicts", &table)?;
    out.jsonl("verdicts", &lines)
}

pub fn run_renewal(cfg: &RenewalConfig, out: &mut Emitter, workers: &Workers) -> Result<()> {
    let reports = cfg
        .gammas
        .iter()
        .enumerate()
        .map(|(k, &g)| renewal_intersection_exponent(g, cfg.horizon, cfg.replicas, child_master(cfg.seed, "renewal", k as u64), workers))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new([
        "gamma",
        "target",
        "fitted",
        "fit_from",
        "fit_to",
        "increments",
        "censored",
        "laplace_d",
        "effective_exponent",
        "max_deviation",
    ]);
    let mut tails = Table::new(["gamma", "t", "survival"]);
    for r in &reports {
        table.push(vec![
            r.gamma.into(),
            r.target.into(),
            r.fitted.into(),
            r.fit_window.0.into(),
            r.fit_window.1.into(),
            r.increments.into(),
            r.censored.into(),
            r.laplace.d.into(),
            r.laplace.effective_exponent.into(),
            r.laplace.max_deviation.into(),
        ]);
        for &(t, s) in &r.tail {
            tails.push(vec![r.gamma.into(), t.into(), s.into()]);
        }
    }
    let plot = LinePlot {
        title: "intersection increment tail".into(),
        x_label: "log10 t".into(),
        y_label: "log10 P(Y > t)".into(),
        series: reports
            .iter()
            .map(|r| Series {
                label: format!("gamma = {}", r.gamma),
                points: r.tail.iter().filter(|p| p.1 > 0.0).map(|&(t, s)| (t.log10(), s.log10())).collect(),
            })
            .collect(),
    };
    out.csv("renewal", &table)?;
    out.csv("tails", &tails)?;
    out.jsonl("renewal", &reports)?;
    out.line_plot("tails", &plot)
}

fn fss_tables(res: &FssResult) -> Table {
    let want = |o| res.observables.contains(&o);
    let mut table = Table::new(["n", "sites", "replica", "s", "theta_hat", "theta_x", "diversity"]);
    for rung in &res.rungs {
        for (r, p) in rung.paths.iter().enumerate() {
            for (k, &s) in res.times.iter().enumerate() {
                let pick = |o, v: &Vec<f64>| if want(o) { Cell::from(v[k]) } else { Cell::Empty };
                table.push(vec![
                    rung.n.into(),
                    rung.sites.into(),
                    r.into(),
                    s.into(),
                    pick(Observable::ThetaHat, &p.theta_hat),
                    pick(Observable::ThetaX, &p.theta_x),
                    pick(Observable::Diversity, &p.diversity),
                ]);
            }
        }
    }
    table
}

fn fg_table(fg: &FgTable) -> Table {
    let mut t = Table::new([
        "theta",
        "fg",
        "fg_se",
        "ratio",
        "ratio_se",
        "variance_route",
        "variance_route_se",
        "halves_gap_se",
        "equilibrated",
    ]);
    for p in &fg.points {
        let mut row = vec![p.theta.into(), p.fg.value.into(), p.fg.std_error.into()];
        row.extend(estimate_cells(p.ratio));
        row.extend(estimate_cells(p.variance_route));
        row.extend([p.halves_gap_se.into(), Cell::from(if p.equilibrated { "true" } else { "false" })]);
        t.push(row);
    }
    t
}

/// Two-sample comparisons of the largest ladder entry with the reference
/// ensemble on the experiment grid.
#[derive(Debug, Clone, Serialize)]
struct ReferenceComparison {
    s: f64,
    n: usize,
    ks: KsResult,
}

pub fn run_fss(cfg: &FssConfig, out: &mut Emitter, workers: &Workers) -> Result<()> {
    let spec = &cfg.experiment;
    let res = finite_systems_run(spec, workers)?;
    let fg = cfg
        .fg
        .as_ref()
        .map(|f| {
            let options = FgOptions {
                burn_in_factor: f.burn_in_factor,
                window: f.window,
                hazard_horizon: f.hazard_horizon,
                hazard_replicas: f.hazard_replicas,
            };
            estimate_fg(spec, &f.thetas, options, workers).map(|t| (t, f.reference))
        })
        .transpose()?;
    let reference = match &fg {
        Some((table, Some(r))) => Some(fg_diffusion_reference(
            |x| table.eval(x),
            spec.theta,
            &spec.times,
            r.replicas,
            r.dt,
            child_master(spec.seed, "fg-reference", 0),
            workers,
        )?),
        _ => None,
    };
    let trapping = cfg.trapping.map(|t| trapping_time(spec, t.horizon, t.epsilon, workers)).transpose()?;
    let reference_hits = match (&fg, cfg.trapping) {
        (Some((table, Some(r))), Some(t)) => Some(fg_reference_hitting_times(
            |x| table.eval(x),
            spec.theta,
            r.replicas,
            r.dt,
            t.horizon,
            t.epsilon,
            child_master(spec.seed, "fg-reference-hit", 0),
            workers,
        )?),
        _ => None,
    };
    let clustering = cfg.clustering.as_ref().map(|c| clustering_diagnostics(spec, &c.probes, workers)).transpose()?;

    out.csv("paths", &fss_tables(&res))?;
    let scales: Vec<_> = res.rungs.iter().map(|r| (r.n, r.unit, r.dt, r.scales)).collect();
    #[derive(Serialize)]
    struct RungLine {
        n: usize,
        unit: f64,
        dt: f64,
        scales: crate::experiments::TimeScaleReport,
        projected_cost: f64,
    }
    let lines: Vec<RungLine> = scales
        .into_iter()
        .map(|(n, unit, dt, scales)| RungLine { n, unit, dt, scales, projected_cost: res.projected_cost })
        .collect();
    out.jsonl("rungs", &lines)?;
    if res.observables.contains(&Observable::DepthMoments) {
        #[derive(Serialize)]
        struct MomentLine<'a> {
            n: usize,
            replica: usize,
            moments: &'a crate::forward::DepthMoments,
        }
        let moments: Vec<MomentLine> = res
            .rungs
            .iter()
            .flat_map(|r| {
                r.paths.iter().enumerate().filter_map(move |(k, p)| p.final_moments.as_ref().map(|m| MomentLine { n: r.n, replica: k, moments: m }))
            })
            .collect();
        out.jsonl("depth_moments", &moments)?;
    }
    if res.observables.contains(&Observable::ThetaHat) {
        let largest = res.rungs.last().expect("validated ladder");
        let plot = LinePlot {
            title: format!("theta_hat on the scale of {} sites", largest.sites),
            x_label: "s".into(),
            y_label: "theta_hat".into(),
            series: largest
                .paths
                .iter()
                .take(PLOTTED_PATHS)
                .enumerate()
                .map(|(r, p)| Series { label: format!("replica {r}"), points: res.times.iter().copied().zip(p.theta_hat.iter().copied()).collect() })
                .collect(),
        };
        out.line_plot("theta_hat", &plot)?;
    }
    if let Some((table, _)) = &fg {
        out.csv("fg", &fg_table(table))?;
        out.jsonl("fg", std::slice::from_ref(table))?;
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let plot = LinePlot {
            title: format!("renormalised diffusion on {} sites", table.sites),
            x_label: "theta".into(),
            y_label: "F g".into(),
            series: vec![Series { label: "estimate".into(), points: grid.iter().map(|&x| (x, table.eval(x))).collect() }],
        };
        out.line_plot("fg", &plot)?;
    }
    if let Some(paths) = &reference {
        let mut t = Table::new(["replica", "s", "theta"]);
        for (r, p) in paths.iter().enumerate() {
            for (&s, &v) in spec.times.iter().zip(p) {
                t.push(vec![r.into(), s.into(), v.into()]);
            }
        }
        out.csv("reference", &t)?;
        if res.observables.contains(&Observable::ThetaHat) {
            let largest = res.rungs.last().expect("validated ladder");
            let cmp: Vec<ReferenceComparison> = (0..spec.times.len())
                .filter(|&k| spec.times[k] > 0.0)
                .map(|k| ReferenceComparison {
                    s: spec.times[k],
                    n: largest.n,
                    ks: trapped_ks(&largest.theta_hat_at(k), &paths.iter().map(|p| p[k]).collect::<Vec<_>>()),
                })
                .collect();
            if !cmp.is_empty() {
                out.jsonl("reference_ks", &cmp)?;
            }
        }
    }
    if let Some(report) = &trapping {
        let mut t = Table::new(["n", "replica", "hitting_time"]);
        for rung in &report.rungs {
            for (r, h) in rung.samples.iter().enumerate() {
                t.push(vec![rung.n.into(), r.into(), (*h).into()]);
            }
            let values: Vec<f64> = rung.samples.iter().flatten().copied().collect();
            if !values.is_empty() {
                let hist = Histogram {
                    title: format!("trapping time / unit, n = {}", rung.n),
                    x_label: "H / unit".into(),
                    values,
                    bins: HISTOGRAM_BINS,
                };
                out.histogram(&format!("trapping_n{}", rung.n), &hist)?;
            }
        }
        out.csv("trapping", &t)?;
        out.jsonl("trapping", std::slice::from_ref(report))?;
    }
    if let Some(hits) = &reference_hits {
        let mut t = Table::new(["replica", "hitting_time"]);
        for (r, h) in hits.iter().enumerate() {
            t.push(vec![r.into(), (*h).into()]);
        }
        out.csv("reference_trapping", &t)?;
    }
    if let Some(report) = &clustering {
        let mut t = Table::new(["t", "range", "depth", "shallow", "shallow_se", "full", "full_se", "deep_mean", "deep_mean_se", "upsilon", "upsilon_se", "pattern"]);
        for p in &report.probes {
            let mut row = vec![p.t.into(), variant_name(&p.range).into(), p.depth.into()];
            row.extend(estimate_cells(Some(p.shallow)));
            row.extend(estimate_cells(Some(p.full)));
            row.extend(estimate_cells(p.deep_mean));
            row.extend(estimate_cells(Some(p.upsilon)));
            row.push(variant_name(&p.pattern).into());
            t.push(row);
        }
        out.csv("clustering", &t)?;
        out.jsonl("clustering", std::slice::from_ref(report))?;
    }
    Ok(())
}
