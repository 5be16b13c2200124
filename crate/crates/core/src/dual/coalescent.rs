use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::lineage::{Lineage, LineageDynamics, StepKind};
use crate::error::{Error, Result};
use crate::seedbank::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Migrate,
    Sleep,
    Wake,
    Coalesce,
}

impl From<StepKind> for EventKind {
    fn from(k: StepKind) -> Self {
        match k {
            StepKind::Migrate => EventKind::Migrate,
            StepKind::Sleep => EventKind::Sleep,
            StepKind::Wake => EventKind::Wake,
        }
    }
}

/// One line of the event log. For a coalescence `ids` is
/// `[survivor, absorbed]`; otherwise the moving lineage and its new
/// position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub ids: Vec<u64>,
    pub site: usize,
    pub colour: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalescentHistory {
    pub horizon: f64,
    pub events: Vec<Event>,
    /// Blocks of initial ids that share an ancestor at the horizon, sorted.
    pub partition: Vec<Vec<u64>>,
    pub lineages: Vec<Lineage>,
}

impl CoalescentHistory {
    /// Time of the first coalescence, if any.
    pub fn first_coalescence(&self) -> Option<f64> {
        self.events.iter().find(|e| e.kind == EventKind::Coalesce).map(|e| e.t)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Per-site counts of active lineages and the number of co-located active
/// pairs they form.
#[derive(Default)]
struct ActiveCounts {
    counts: HashMap<usize, usize>,
    pairs: usize,
}

impl ActiveCounts {
    fn insert(&mut self, site: usize) {
        let c = self.counts.entry(site).or_insert(0);
        self.pairs += *c;
        *c += 1;
    }

    fn remove(&mut self, site: usize) {
        let c = self.counts.get_mut(&site).expect("site holds an active lineage");
        *c -= 1;
        self.pairs -= *c;
        if *c == 0 {
            self.counts.remove(&site);
        }
    }
}

/// Exact event-driven simulation of coalescing lineages up to `horizon`.
///
/// Each lineage carries its own exponential clock; co-located active pairs
/// share a global pair clock of rate `d · #pairs`, and the pair that merges
/// is drawn uniformly among them. Ids must be distinct.
pub fn run_coalescent<R: Rng + ?Sized>(
    initial: &[Lineage],
    dual: &LineageDynamics,
    d: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<CoalescentHistory> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::invalid("d", format!("coalescence rate must be non-negative, got {d}")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::invalid("horizon", "must be non-negative"));
    }
    let size = dual.geography().size();
    let mut ids: Vec<u64> = initial.iter().map(|l| l.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("lineages", "ids must be distinct"));
    }
    if initial.iter().any(|l| l.site >= size || matches!(l.mode, Mode::Dormant(m) if m >= dual.colours())) {
        return Err(Error::invalid("lineages", "position outside the dual state space"));
    }

    let mut lineages: Vec<Lineage> = initial.iter().filter(|l| l.alive).copied().collect();
    // Union-find over positions in `initial` for the final partition.
    let index: HashMap<u64, usize> = initial.iter().enumerate().map(|(k, l)| (l.id, k)).collect();
    let mut parent: Vec<usize> = (0..initial.len()).collect();
    let mut active = ActiveCounts::default();
    for l in &lineages {
        if l.mode == Mode::Active {
            active.insert(l.site);
        }
    }
    let mut events = Vec::new();
    let mut clock = 0.0;
    loop {
        let rates: Vec<f64> = lineages.iter().map(|l| dual.exit_rate(l.mode)).collect();
        let motion: f64 = rates.iter().sum();
        let pair_rate = d * active.pairs as f64;
        let total = motion + pair_rate;
        if total == 0.0 {
            break;
        }
        clock += Distribution::<f64>::sample(&Exp1, rng) / total;
        if clock > horizon {
            break;
        }
        let u = rng.random::<f64>() * total;
        if u < pair_rate {
            // Choose the site with weight c(c-1)/2, then a uniform pair there.
            let mut target = rng.random_range(0..active.pairs);
            let mut site = usize::MAX;
            let mut sites: Vec<(&usize, &usize)> = active.counts.iter().collect();
            sites.sort_unstable();
            for (s, c) in sites {
                let p = c * (c - 1) / 2;
                if target < p {
                    site = *s;
                    break;
                }
                target -= p;
            }
            let here: Vec<usize> = (0..lineages.len())
                .filter(|&k| lineages[k].site == site && lineages[k].mode == Mode::Active)
                .collect();
            let a = rng.random_range(0..here.len());
            let mut b = rng.random_range(0..here.len() - 1);
            if b >= a {
                b += 1;
            }
            let (keep, gone) = {
                let (x, y) = (here[a], here[b]);
                if lineages[x].id < lineages[y].id { (x, y) } else { (y, x) }
            };
            events.push(Event {
                t: clock,
                kind: EventKind::Coalesce,
                ids: vec![lineages[keep].id, lineages[gone].id],
                site,
                colour: None,
            });
            let (rk, rg) = (find(&mut parent, index[&lineages[keep].id]), find(&mut parent, index[&lineages[gone].id]));
            parent[rg] = rk;
            active.remove(site);
            lineages.swap_remove(gone);
        } else {
            let mut v = u - pair_rate;
            let mut k = 0;
            while k + 1 < rates.len() && v >= rates[k] {
                v -= rates[k];
                k += 1;
            }
            let before = lineages[k];
            let (after, kind) = dual.jump(&before, rng);
            if before.mode == Mode::Active {
                active.remove(before.site);
            }
            if after.mode == Mode::Active {
                active.insert(after.site);
            }
            lineages[k] = after;
            events.push(Event {
                t: clock,
                kind: kind.into(),
                ids: vec![after.id],
                site: after.site,
                colour: match after.mode {
                    Mode::Dormant(m) => Some(m),
                    Mode::Active => None,
                },
            });
        }
    }

    let mut blocks: HashMap<usize, Vec<u64>> = HashMap::new();
    for (k, l) in initial.iter().enumerate() {
        let root = find(&mut parent, k);
        blocks.entry(root).or_default().push(l.id);
    }
    let mut partition: Vec<Vec<u64>> = blocks.into_values().collect();
    for b in &mut partition {
        b.sort_unstable();
    }
    partition.sort();
    lineages.sort_by_key(|l| l.id);
    Ok(CoalescentHistory { horizon, events, partition, lineages })
}

fn find(parent: &mut [usize], mut k: usize) -> usize {
    while parent[k] != k {
        parent[k] = parent[parent[k]];
        k = parent[k];
    }
    k
}
