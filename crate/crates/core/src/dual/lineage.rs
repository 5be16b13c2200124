use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::ctmc::{propagate, SparseGenerator};
use crate::error::{Error, Result};
use crate::forward::{Displacement, Dynamics, Model, SystemState};
use crate::geometry::{Geography, MigrationKernel, TransitionEstimate, TransitionMethod, EXACT_TOLERANCE};
use crate::rng::stream;
use crate::seedbank::{ExchangeSampler, Mode, SeedBankProfile};
use crate::stats::Moments;

/// One dual lineage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Lineage {
    pub id: u64,
    pub site: usize,
    pub mode: Mode,
    pub alive: bool,
}

impl Lineage {
    pub fn active(id: u64, site: usize) -> Self {
        Lineage { id, site, mode: Mode::Active, alive: true }
    }

    pub fn new(id: u64, site: usize, mode: Mode) -> Self {
        Lineage { id, site, mode, alive: true }
    }
}

/// What a single step of a lineage did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Migrate,
    Sleep,
    Wake,
}

/// Cumulative table for drawing Model 3 displacements.
#[derive(Debug, Clone)]
struct OffsetTable {
    offsets: Vec<usize>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl OffsetTable {
    fn new(d: &Displacement) -> Self {
        let offsets = d.entries().iter().map(|(o, _)| *o).collect();
        let probs: Vec<f64> = d.entries().iter().map(|(_, p)| *p).collect();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        OffsetTable { offsets, probs, cumulative }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty displacement");
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|c| *c <= u).min(self.offsets.len() - 1);
        self.offsets[k]
    }
}

/// Motion of a single lineage: migration while active, exchange with the
/// seed-bank, and for Model 3 a displacement on every exchange.
///
/// The rates are read off the forward drift, so first moments of the
/// forward system are expectations over this walk.
#[derive(Debug, Clone)]
pub struct LineageDynamics {
    model: Model,
    kernel: MigrationKernel,
    /// `K_m e_m`, empty when there is no seed-bank.
    ke: Vec<f64>,
    e: Vec<f64>,
    chi: f64,
    sampler: Option<ExchangeSampler>,
    displacement: Vec<OffsetTable>,
}

impl LineageDynamics {
    pub fn new(
        model: Model,
        kernel: MigrationKernel,
        profile: &SeedBankProfile,
        displacement: Option<Vec<Displacement>>,
    ) -> Result<Self> {
        if model == Model::M1 && profile.colours() != 1 {
            return Err(Error::invalid("model", "Model 1 has a single seed-bank colour"));
        }
        let displacement = match (model, displacement) {
            (Model::M3, Some(d)) if d.len() == profile.colours() => d.iter().map(OffsetTable::new).collect(),
            (Model::M3, _) => {
                return Err(Error::invalid("displacement", "Model 3 needs one displacement kernel per colour"))
            }
            (_, Some(_)) => return Err(Error::invalid("displacement", "only Model 3 displaces seeds")),
            (_, None) => Vec::new(),
        };
        Ok(LineageDynamics {
            model,
            kernel,
            ke: profile.k().iter().zip(profile.e()).map(|(k, e)| k * e).collect(),
            e: profile.e().to_vec(),
            chi: profile.chi(),
            sampler: Some(ExchangeSampler::new(profile)),
            displacement,
        })
    }

    /// The dual of a forward system.
    pub fn from_forward(dynamics: &Dynamics) -> Result<Self> {
        let displacement = match dynamics.model() {
            Model::M3 => Some(dynamics.displacement().to_vec()),
            _ => None,
        };
        Self::new(dynamics.model(), dynamics.kernel().clone(), dynamics.profile(), displacement)
    }

    /// A lineage that never leaves the active state.
    pub fn without_seed_bank(kernel: MigrationKernel) -> Self {
        LineageDynamics {
            model: Model::M1,
            kernel,
            ke: Vec::new(),
            e: Vec::new(),
            chi: 0.0,
            sampler: None,
            displacement: Vec::new(),
        }
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

    /// Number of dormancy colours (zero without a seed-bank).
    pub fn colours(&self) -> usize {
        self.ke.len()
    }

    /// Total event rate out of `mode`.
    pub fn exit_rate(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Active => self.kernel.jump_rate() + self.chi,
            Mode::Dormant(m) => self.e[m],
        }
    }

    /// Every move out of `(site, mode)` with its rate; self-loops included.
    pub fn transitions(&self, site: usize, mode: Mode) -> Vec<(usize, Mode, f64)> {
        let geo = self.geography();
        let mut out = Vec::new();
        match mode {
            Mode::Active => {
                for &(o, r) in self.kernel.jumps() {
                    out.push((geo.add(site, o), Mode::Active, r));
                }
                for (m, &ke) in self.ke.iter().enumerate() {
                    match self.model {
                        Model::M3 => {
                            let t = &self.displacement[m];
                            for (o, p) in t.offsets.iter().zip(&t.probs) {
                                out.push((geo.sub(site, *o), Mode::Dormant(m), ke * p));
                            }
                        }
                        _ => out.push((site, Mode::Dormant(m), ke)),
                    }
                }
            }
            Mode::Dormant(m) => match self.model {
                Model::M3 => {
                    let t = &self.displacement[m];
                    for (o, p) in t.offsets.iter().zip(&t.probs) {
                        out.push((geo.add(site, *o), Mode::Active, self.e[m] * p));
                    }
                }
                _ => out.push((site, Mode::Active, self.e[m])),
            },
        }
        out
    }

    /// Index of `(site, mode)` in the flattened dual state space
    /// `site * (colours + 1) + slot`, slot 0 being active.
    pub fn state_index(&self, site: usize, mode: Mode) -> usize {
        let slot = match mode {
            Mode::Active => 0,
            Mode::Dormant(m) => m + 1,
        };
        site * (self.colours() + 1) + slot
    }

    pub fn state_of(&self, index: usize) -> (usize, Mode) {
        let slots = self.colours() + 1;
        let slot = index % slots;
        let mode = if slot == 0 { Mode::Active } else { Mode::Dormant(slot - 1) };
        (index / slots, mode)
    }

    pub fn state_count(&self) -> usize {
        self.geography().size() * (self.colours() + 1)
    }

    /// Generator of one lineage on the flattened state space.
    pub fn generator(&self, cap: usize) -> Result<SparseGenerator> {
        let dim = self.state_count();
        if dim > cap {
            return Err(Error::SizeCap { size: dim, cap });
        }
        let mut q = SparseGenerator::new(dim);
        for u in 0..dim {
            let (site, mode) = self.state_of(u);
            for (s, m, r) in self.transitions(site, mode) {
                q.add(u, self.state_index(s, m), r);
            }
        }
        Ok(q)
    }

    /// One move of an alive lineage: the holding time and the new position.
    /// The holding time is infinite when nothing can happen.
    pub fn step<R: Rng + ?Sized>(&self, lineage: &Lineage, rng: &mut R) -> (f64, Lineage, StepKind) {
        let rate = self.exit_rate(lineage.mode);
        if rate == 0.0 {
            return (f64::INFINITY, *lineage, StepKind::Migrate);
        }
        let elapsed = Distribution::<f64>::sample(&Exp1, rng) / rate;
        let (next, kind) = self.jump(lineage, rng);
        (elapsed, next, kind)
    }

    /// The embedded jump chain: where the lineage goes at its next event.
    pub fn jump<R: Rng + ?Sized>(&self, lineage: &Lineage, rng: &mut R) -> (Lineage, StepKind) {
        let geo = self.geography();
        let mut next = *lineage;
        let kind = match lineage.mode {
            Mode::Active => {
                let u = rng.random::<f64>() * (self.kernel.jump_rate() + self.chi);
                if u < self.kernel.jump_rate() {
                    next.site = geo.add(lineage.site, self.kernel.sample_jump(rng));
                    StepKind::Migrate
                } else {
                    let sampler = self.sampler.as_ref().expect("positive chi implies a seed-bank");
                    let m = sampler.sample_colour(rng);
                    if self.model == Model::M3 {
                        next.site = geo.sub(lineage.site, self.displacement[m].sample(rng));
                    }
                    next.mode = Mode::Dormant(m);
                    StepKind::Sleep
                }
            }
            Mode::Dormant(m) => {
                if self.model == Model::M3 {
                    next.site = geo.add(lineage.site, self.displacement[m].sample(rng));
                }
                next.mode = Mode::Active;
                StepKind::Wake
            }
        };
        (next, kind)
    }

    /// Position at time `t` of a lineage started from `lineage`.
    pub fn simulate<R: Rng + ?Sized>(&self, lineage: &Lineage, t: f64, rng: &mut R) -> Lineage {
        let mut clock = 0.0;
        let mut current = *lineage;
        loop {
            let (dt, next, _) = self.step(&current, rng);
            clock += dt;
            if clock > t {
                return current;
            }
            current = next;
        }
    }
}

/// `(site, mode)` values `z_u` of a forward state, indexed like
/// [`LineageDynamics::state_index`].
pub fn dual_field(dual: &LineageDynamics, state: &SystemState) -> Result<Vec<f64>> {
    if state.sites() != dual.geography().size() || state.colours() != dual.colours() {
        return Err(Error::invalid(
            "state",
            format!(
                "state has {} sites x {} colours, dual expects {} x {}",
                state.sites(),
                state.colours(),
                dual.geography().size(),
                dual.colours()
            ),
        ));
    }
    let slots = dual.colours() + 1;
    let mut z = Vec::with_capacity(dual.state_count());
    for i in 0..state.sites() {
        z.push(state.x[i]);
        z.extend_from_slice(&state.y[i * (slots - 1)..(i + 1) * (slots - 1)]);
    }
    Ok(z)
}

/// `Σ_u b_t(u0, u) field[u]`: the first-moment dual prediction.
pub fn moment_dual_expectation(
    dual: &LineageDynamics,
    field: &[f64],
    t: f64,
    start: (usize, Mode),
    method: TransitionMethod,
) -> Result<TransitionEstimate> {
    if field.len() != dual.state_count() {
        return Err(Error::invalid("field", "one value per dual state is required"));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("time must be non-negative, got {t}")));
    }
    let u0 = dual.state_index(start.0, start.1);
    match method {
        TransitionMethod::Exact { cap } => {
            let q = dual.generator(cap)?;
            let mut p0 = vec![0.0; field.len()];
            p0[u0] = 1.0;
            let tr = propagate(&q, &p0, t, EXACT_TOLERANCE)?;
            let value = tr.distribution.iter().zip(field).map(|(p, z)| p * z).sum();
            Ok(TransitionEstimate { value, std_error: 0.0, truncation_error: tr.truncation_error })
        }
        TransitionMethod::MonteCarlo { replicas, seed } => {
            if replicas == 0 {
                return Err(Error::invalid("replicas", "need at least one replica"));
            }
            let mut acc = Moments::new();
            let mut rng = stream(seed, 0, "dual-moment");
            let start = Lineage::new(0, start.0, start.1);
            for _ in 0..replicas {
                let end = dual.simulate(&start, t, &mut rng);
                acc.push(field[dual.state_index(end.site, end.mode)]);
            }
            Ok(TransitionEstimate { value: acc.mean(), std_error: acc.std_error(), truncation_error: 0.0 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::DiffusionFunction;
    use crate::geometry::{KernelOptions, KernelSpec};
    use crate::stats::ks_one_sample;

    fn single_site(profile: &SeedBankProfile, model: Model) -> LineageDynamics {
        let geo = Geography::singleton();
        LineageDynamics::new(model, MigrationKernel::zero(&geo), profile, None).unwrap()
    }

    #[test]
    fn two_state_chain_is_half_active() {
        let p = SeedBankProfile::single(1.0, 1.0).unwrap();
        let dual = single_site(&p, Model::M1);
        let mut rng = stream(1, 0, "dual");
        let mut lineage = Lineage::active(0, 0);
        let (mut active, mut total) = (0.0, 0.0);
        for _ in 0..200_000 {
            let (dt, next, _) = dual.step(&lineage, &mut rng);
            if lineage.mode == Mode::Active {
                active += dt;
            }
            total += dt;
            lineage = next;
        }
        assert!((active / total - 0.5).abs() < 0.01);
    }

    #[test]
    fn active_holding_time_is_exponential() {
        let geo = Geography::torus(1, 8).unwrap();
        let k = MigrationKernel::build(&geo, &KernelSpec::NearestNeighbour { rate: 0.5 }, KernelOptions::default())
            .unwrap();
        let p = SeedBankProfile::explicit(vec![1.0, 2.0], vec![1.0, 0.25]).unwrap();
        let dual = LineageDynamics::new(Model::M2, k, &p, None).unwrap();
        let rate = 1.0 + p.chi();
        let mut rng = stream(2, 0, "dual");
        let l = Lineage::active(0, 3);
        let samples: Vec<f64> = (0..5000).map(|_| dual.step(&l, &mut rng).0).collect();
        assert!(ks_one_sample(&samples, |t| 1.0 - (-rate * t).exp()).accepts(0.01));
    }

    #[test]
    fn occupancy_matches_stationary_vector() {
        let p = SeedBankProfile::explicit(vec![1.0, 2.0], vec![1.0, 0.25]).unwrap();
        let dual = single_site(&p, Model::M2);
        // Stationarity: π_{D_m} e_m = π_A K_m e_m, so π ∝ (1, K_0, K_1).
        let exact = [1.0 / 4.0, 1.0 / 4.0, 2.0 / 4.0];
        let solved = dual.generator(16).unwrap().stationary(1e-13, 1_000_000).unwrap();
        for (a, b) in exact.iter().zip(&solved) {
            assert!((a - b).abs() < 1e-9);
        }
        let mut rng = stream(3, 0, "dual");
        let mut occupancy = [0.0; 3];
        let mut l = Lineage::active(0, 0);
        for _ in 0..300_000 {
            let (dt, next, _) = dual.step(&l, &mut rng);
            occupancy[dual.state_index(0, l.mode)] += dt;
            l = next;
        }
        let total: f64 = occupancy.iter().sum();
        for (o, e) in occupancy.iter().zip(&exact) {
            assert!((o / total - e).abs() < 0.01);
        }
    }

    #[test]
    fn long_run_active_fraction() {
        let p = SeedBankProfile::polynomial(1.0, 0.5, 1.0, 1.0, 4).unwrap();
        let dual = single_site(&p, Model::M2);
        let f = p.summary().active_fraction;
        // Batch means over independent long runs.
        let mut acc = Moments::new();
        for r in 0..200 {
            let mut rng = stream(4, r, "dual");
            let mut l = Lineage::active(0, 0);
            let (mut active, mut clock) = (0.0, 0.0);
            while clock < 2000.0 {
                let (dt, next, _) = dual.step(&l, &mut rng);
                let dt = dt.min(2000.0 - clock);
                if l.mode == Mode::Active {
                    active += dt;
                }
                clock += dt;
                l = next;
            }
            acc.push(active / clock);
        }
        assert!((acc.mean() - f).abs() < 4.0 * acc.std_error() + 0.005, "{} vs {f}", acc.mean());
    }

    #[test]
    fn constant_field_is_preserved() {
        let geo = Geography::torus(1, 4).unwrap();
        let k = MigrationKernel::build(&geo, &KernelSpec::NearestNeighbour { rate: 1.0 }, KernelOptions::default())
            .unwrap();
        let p = SeedBankProfile::explicit(vec![1.0, 1.0], vec![1.0, 0.5]).unwrap();
        let dual = LineageDynamics::new(Model::M2, k, &p, None).unwrap();
        let field = vec![0.37; dual.state_count()];
        for t in [0.0, 0.5, 7.0] {
            let v = moment_dual_expectation(&dual, &field, t, (2, Mode::Dormant(1)), TransitionMethod::exact()).unwrap();
            assert!((v.value - 0.37).abs() < 1e-9);
        }
        let field: Vec<f64> = (0..dual.state_count()).map(|u| u as f64 / 12.0).collect();
        let v = moment_dual_expectation(&dual, &field, 0.0, (1, Mode::Active), TransitionMethod::exact()).unwrap();
        assert_eq!(v.value, field[dual.state_index(1, Mode::Active)]);
    }

    #[test]
    fn exact_and_sampled_duals_agree() {
        let geo = Geography::torus(1, 5).unwrap();
        let k = MigrationKernel::build(&geo, &KernelSpec::HeavyTail { amplitude: 1.0, q: 0.8 }, KernelOptions::default())
            .unwrap();
        let p = SeedBankProfile::explicit(vec![1.0, 2.0], vec![2.0, 0.5]).unwrap();
        let disp = vec![Displacement::from_kernel(&k).unwrap(), Displacement::identity()];
        let dual = LineageDynamics::new(Model::M3, k, &p, Some(disp)).unwrap();
        let field: Vec<f64> = (0..dual.state_count()).map(|u| ((u * 7) % 5) as f64 / 4.0).collect();
        let start = (1, Mode::Active);
        let exact = moment_dual_expectation(&dual, &field, 1.5, start, TransitionMethod::exact()).unwrap();
        let mc = moment_dual_expectation(
            &dual,
            &field,
            1.5,
            start,
            TransitionMethod::MonteCarlo { replicas: 20_000, seed: 5 },
        )
        .unwrap();
        assert!((exact.value - mc.value).abs() < 4.0 * mc.std_error);
    }

    #[test]
    fn forward_means_match_the_dual() {
        // Both sides computed independently: Euler ensemble versus the
        // uniformised lineage generator.
        let geo = Geography::torus(1, 2).unwrap();
        let k = MigrationKernel::build(&geo, &KernelSpec::NearestNeighbour { rate: 0.5 }, KernelOptions::default())
            .unwrap();
        let p = SeedBankProfile::explicit(vec![1.0, 1.0], vec![1.0, 0.5]).unwrap();
        let fwd = Dynamics::new(Model::M2, k, p, DiffusionFunction::fisher_wright(1.0), None).unwrap();
        let dual = LineageDynamics::from_forward(&fwd).unwrap();
        let s0 = SystemState::new(
            vec![1.0, 0.0, 0.5, 0.2],
            vec![0.0, 1.0, 1.0, 0.3, 0.9, 0.1, 0.6, 0.4],
            2,
        )
        .unwrap();
        let field = dual_field(&dual, &s0).unwrap();
        let t = 1.0;
        let replicas = 2000;
        let mut acc: Vec<Moments> = vec![Moments::new(); field.len()];
        for r in 0..replicas {
            let mut rng = stream(6, r, "forward");
            let mut s = s0.clone();
            fwd.stepper().advance(&mut s, t, 0.002, &mut rng, |_, _, _| true).unwrap();
            for (a, z) in acc.iter_mut().zip(dual_field(&dual, &s).unwrap()) {
                a.push(z);
            }
        }
        for u in 0..field.len() {
            let (site, mode) = dual.state_of(u);
            let exact = moment_dual_expectation(&dual, &field, t, (site, mode), TransitionMethod::exact()).unwrap();
            let se = acc[u].std_error().max(1e-3);
            assert!((acc[u].mean() - exact.value).abs() < 4.0 * se, "state {u}: {} vs {}", acc[u].mean(), exact.value);
        }
    }

    #[test]
    fn model_three_rejects_missing_displacement() {
        let p = SeedBankProfile::single(1.0, 1.0).unwrap();
        let k = MigrationKernel::zero(&Geography::singleton());
        assert!(LineageDynamics::new(Model::M3, k.clone(), &p, None).is_err());
        assert!(LineageDynamics::new(Model::M2, k, &p, Some(vec![Displacement::identity()])).is_err());
    }
}
