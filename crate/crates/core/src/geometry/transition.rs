use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::kernel::MigrationKernel;
use crate::ctmc::{propagate, JumpOperator, Transient};
use crate::error::{Error, Result};
use crate::parallel::Workers;
use crate::rng::stream;
use crate::stats::Moments;

/// Default site cap for the exact method.
pub const EXACT_SIZE_CAP: usize = 4096;
/// Certified truncation bound of the exact method.
pub const EXACT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionMethod {
    /// Uniformisation, refused above `cap` sites.
    Exact { cap: usize },
    MonteCarlo { replicas: usize, seed: u64 },
}

impl TransitionMethod {
    pub fn exact() -> Self {
        TransitionMethod::Exact { cap: EXACT_SIZE_CAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEstimate {
    pub value: f64,
    /// Zero for the exact method.
    pub std_error: f64,
    /// Certified bound for the exact method; zero for Monte Carlo.
    pub truncation_error: f64,
}

/// Walk generator pushed through the group translations.
struct KernelOperator<'a> {
    kernel: &'a MigrationKernel,
    /// `targets[i * m + k] = i + jumps[k]`.
    targets: Vec<u32>,
}

impl<'a> KernelOperator<'a> {
    fn new(kernel: &'a MigrationKernel) -> Self {
        let offsets: Vec<usize> = kernel.jumps().iter().map(|(j, _)| *j).collect();
        KernelOperator {
            kernel,
            targets: kernel.geography().translation_table(&offsets),
        }
    }
}

impl JumpOperator for KernelOperator<'_> {
    fn dim(&self) -> usize {
        self.kernel.geography().size()
    }

    fn uniform_rate(&self) -> f64 {
        self.kernel.jump_rate()
    }

    fn apply(&self, src: &[f64], dst: &mut [f64]) {
        dst.fill(0.0);
        let lambda = self.kernel.jump_rate();
        let jumps = self.kernel.jumps();
        let m = jumps.len();
        for (i, &p) in src.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = &self.targets[i * m..(i + 1) * m];
            for (&t, &(_, r)) in row.iter().zip(jumps) {
                dst[t as usize] += p * (r / lambda);
            }
        }
    }
}

fn check_cap(kernel: &MigrationKernel, cap: usize) -> Result<()> {
    let size = kernel.geography().size();
    if size > cap {
        return Err(Error::SizeCap { size, cap });
    }
    Ok(())
}

/// The full row `a_t(0, ·)` by uniformisation.
pub fn transition_row(kernel: &MigrationKernel, t: f64, cap: usize) -> Result<Transient> {
    check_cap(kernel, cap)?;
    let mut p0 = vec![0.0; kernel.geography().size()];
    p0[0] = 1.0;
    propagate(&KernelOperator::new(kernel), &p0, t, EXACT_TOLERANCE)
}

/// Position after running the walk from `start` for time `t`.
pub fn simulate_walk<R: Rng + ?Sized>(kernel: &MigrationKernel, start: usize, t: f64, rng: &mut R) -> usize {
    if kernel.jump_rate() == 0.0 {
        return start;
    }
    let hold = Exp::new(kernel.jump_rate()).expect("positive rate");
    let g = kernel.geography();
    let mut pos = start;
    let mut clock = hold.sample(rng);
    while clock <= t {
        pos = g.add(pos, kernel.sample_jump(rng));
        clock += hold.sample(rng);
    }
    pos
}

/// `a_t(i, j)` by the requested method.
pub fn transition_probability(
    kernel: &MigrationKernel,
    t: f64,
    i: usize,
    j: usize,
    method: TransitionMethod,
) -> Result<TransitionEstimate> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", "time must be non-negative"));
    }
    let g = kernel.geography();
    if i >= g.size() || j >= g.size() {
        return Err(Error::invalid("site", "label outside the geography"));
    }
    match method {
        TransitionMethod::Exact { cap } => {
            let row = transition_row(kernel, t, cap)?;
            Ok(TransitionEstimate {
                value: row.distribution[g.sub(j, i)],
                std_error: 0.0,
                truncation_error: row.truncation_error,
            })
        }
        TransitionMethod::MonteCarlo { replicas, seed } => {
            if replicas < 2 {
                return Err(Error::invalid("replicas", "need at least two replicas"));
            }
            let hits = Workers::default().map(replicas, |r| {
                let mut rng = stream(seed, r as u64, "transition");
                f64::from(simulate_walk(kernel, i, t, &mut rng) == j)
            });
            let m: Moments = hits.into_iter().collect();
            Ok(TransitionEstimate {
                value: m.mean(),
                std_error: m.std_error(),
                truncation_error: 0.0,
            })
        }
    }
}

/// `sup_i | |G| a_t(0,i) - 1 |`.
fn uniform_deviation(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    row.iter().map(|p| (n * p - 1.0).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingOptions {
    pub tolerance: f64,
    /// Give up beyond this time.
    pub horizon: f64,
    /// First grid point, in units of the mean holding time `1/jump_rate`.
    pub start: f64,
    /// Grid ratio.
    pub growth: f64,
    pub cap: usize,
}

impl MixingOptions {
    pub fn new(tolerance: f64) -> Self {
        MixingOptions {
            tolerance,
            horizon: 1e9,
            start: 1e-2,
            growth: 2.0,
            cap: EXACT_SIZE_CAP,
        }
    }
}

/// Mixing time `ψ`: the smallest `t` with `sup_i | |G| a_t(0,i) - 1 | ≤ ε`,
/// located on a geometric grid and refined by bisection inside the first
/// cell that meets the bound.
pub fn estimate_mixing_time(kernel: &MigrationKernel, options: MixingOptions) -> Result<f64> {
    let eps = options.tolerance;
    if !(eps > 0.0) {
        return Err(Error::invalid("tolerance", "must be positive"));
    }
    check_cap(kernel, options.cap)?;
    let size = kernel.geography().size();
    if size == 1 {
        return Ok(0.0);
    }
    if kernel.jump_rate() == 0.0 {
        return Err(Error::invalid("kernel", "walk without jumps never mixes"));
    }
    let op = KernelOperator::new(kernel);
    let mut p = vec![0.0; size];
    p[0] = 1.0;
    let mut t_prev = 0.0;
    let mut t = options.start / kernel.jump_rate();
    loop {
        if t > options.horizon {
            return Err(Error::Numerical(format!(
                "mixing bound {eps} not met before horizon {}",
                options.horizon
            )));
        }
        let next = propagate(&op, &p, t - t_prev, EXACT_TOLERANCE)?.distribution;
        if uniform_deviation(&next) <= eps {
            break;
        }
        p = next;
        t_prev = t;
        t *= options.growth;
    }
    // Bisection inside (t_prev, t], always propagating from t_prev.
    let (mut lo, mut hi) = (t_prev, t);
    for _ in 0..60 {
        if hi - lo <= 1e-10 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let row = propagate(&op, &p, mid - t_prev, EXACT_TOLERANCE)?.distribution;
        if uniform_deviation(&row) <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
