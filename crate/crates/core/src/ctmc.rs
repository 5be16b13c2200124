//! Transient distributions of finite continuous-time Markov chains by
//! uniformisation.
//!
//! With `Λ ≥ max exit rate` and `P = I + Q/Λ`,
//! `p(t) = Σ_k Pois(Λt; k) p(0) P^k`. Long horizons are cut into chunks with
//! `Λ Δt ≤ CHUNK_MASS` so the leading Poisson weight never underflows, and the
//! dropped Poisson mass of every chunk is added to the reported error.

use crate::error::{Error, Result};

const CHUNK_MASS: f64 = 400.0;

/// Something that can push a row vector one step through `P = I + Q/Λ`.
pub trait JumpOperator {
    fn dim(&self) -> usize;
    /// A uniformisation rate, at least the largest exit rate.
    fn uniform_rate(&self) -> f64;
    /// Writes `src · P` into `dst`.
    fn apply(&self, src: &[f64], dst: &mut [f64]);
}

/// Off-diagonal rates stored by source state.
#[derive(Debug, Clone, Default)]
pub struct SparseGenerator {
    rates: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
}

impl SparseGenerator {
    pub fn new(dim: usize) -> Self {
        SparseGenerator {
            rates: vec![Vec::new(); dim],
            exit: vec![0.0; dim],
        }
    }

    /// Adds rate `r` to the transition `from -> to`. Self-loops are dropped.
    pub fn add(&mut self, from: usize, to: usize, r: f64) {
        if from == to || r == 0.0 {
            return;
        }
        self.exit[from] += r;
        match self.rates[from].iter_mut().find(|(j, _)| *j == to) {
            Some(entry) => entry.1 += r,
            None => self.rates[from].push((to, r)),
        }
    }

    pub fn exit_rate(&self, state: usize) -> f64 {
        self.exit[state]
    }

    pub fn transitions(&self, state: usize) -> &[(usize, f64)] {
        &self.rates[state]
    }

    /// Stationary law by power iteration on the uniformised chain; intended
    /// for small irreducible chains.
    pub fn stationary(&self, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut p = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..max_iter {
            self.apply(&p, &mut next);
            let diff: f64 = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut p, &mut next);
            if diff < tol {
                return Ok(p);
            }
        }
        Err(Error::Numerical(format!(
            "stationary iteration did not converge in {max_iter} steps"
        )))
    }
}

impl JumpOperator for SparseGenerator {
    fn dim(&self) -> usize {
        self.rates.len()
    }

    fn uniform_rate(&self) -> f64 {
        // Slightly above the maximum keeps P aperiodic for power iteration.
        self.exit.iter().copied().fold(0.0, f64::max) * 1.05
    }

    fn apply(&self, src: &[f64], dst: &mut [f64]) {
        let lambda = self.uniform_rate();
        if lambda == 0.0 {
            dst.copy_from_slice(src);
            return;
        }
        for (i, d) in dst.iter_mut().enumerate() {
            *d = src[i] * (1.0 - self.exit_rate(i) / lambda);
        }
        for (i, row) in self.rates.iter().enumerate() {
            if src[i] == 0.0 {
                continue;
            }
            for &(j, r) in row {
                dst[j] += src[i] * r / lambda;
            }
        }
    }
}

/// A transient distribution together with its certified truncation error
/// (total-variation bound).
#[derive(Debug, Clone)]
pub struct Transient {
    pub distribution: Vec<f64>,
    pub truncation_error: f64,
}

/// Propagates `p0` for time `t`, dropping at most `tol` Poisson mass.
pub fn propagate<J: JumpOperator + ?Sized>(
    op: &J,
    p0: &[f64],
    t: f64,
    tol: f64,
) -> Result<Transient> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("time must be non-negative, got {t}")));
    }
    if p0.len() != op.dim() {
        return Err(Error::invalid("p0", "length does not match the state space"));
    }
    let lambda = op.uniform_rate();
    let total = lambda * t;
    if total == 0.0 {
        return Ok(Transient {
            distribution: p0.to_vec(),
            truncation_error: 0.0,
        });
    }
    let chunks = (total / CHUNK_MASS).ceil().max(1.0) as usize;
    let mass = total / chunks as f64;
    let chunk_tol = tol / chunks as f64;
    let mut p = p0.to_vec();
    let mut error = 0.0;
    let mut term = vec![0.0; p.len()];
    let mut next = vec![0.0; p.len()];
    let mut acc = vec![0.0; p.len()];
    for _ in 0..chunks {
        term.copy_from_slice(&p);
        let mut weight = (-mass).exp();
        let mut cumulative = weight;
        for (a, v) in acc.iter_mut().zip(&term) {
            *a = weight * v;
        }
        let mut k = 0usize;
        // Past the mode the remaining mass is bounded by a geometric tail.
        while 1.0 - cumulative > chunk_tol {
            k += 1;
            op.apply(&term, &mut next);
            std::mem::swap(&mut term, &mut next);
            weight *= mass / k as f64;
            cumulative += weight;
            for (a, v) in acc.iter_mut().zip(&term) {
                *a += weight * v;
            }
            if k as f64 > mass + 50.0 * mass.sqrt() + 100.0 {
                break;
            }
        }
        error += (1.0 - cumulative).max(0.0);
        std::mem::swap(&mut p, &mut acc);
    }
    Ok(Transient {
        distribution: p,
        truncation_error: error,
    })
}
