use crate::ctmc::{propagate, SparseGenerator, Transient};
use crate::error::{Error, Result};
use crate::seedbank::Mode;

use super::lineage::LineageDynamics;

/// Two lineages with coalescence at rate `d`, on the product state space.
///
/// Ordered pairs `(u, v)` occupy indices `u * S + v`; after a merge the
/// single lineage at `w` sits at `S * S + w`.
pub struct PairDual<'a> {
    dual: &'a LineageDynamics,
    generator: SparseGenerator,
    states: usize,
}

impl<'a> PairDual<'a> {
    pub fn new(dual: &'a LineageDynamics, d: f64, cap: usize) -> Result<Self> {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::invalid("d", format!("coalescence rate must be non-negative, got {d}")));
        }
        let s = dual.state_count();
        let dim = s * s + s;
        if dim > cap {
            return Err(Error::SizeCap { size: dim, cap });
        }
        let moves: Vec<Vec<(usize, f64)>> = (0..s)
            .map(|u| {
                let (site, mode) = dual.state_of(u);
                dual.transitions(site, mode)
                    .into_iter()
                    .map(|(j, m, r)| (dual.state_index(j, m), r))
                    .collect()
            })
            .collect();
        let mut q = SparseGenerator::new(dim);
        for u in 0..s {
            for v in 0..s {
                let from = u * s + v;
                for &(u2, r) in &moves[u] {
                    q.add(from, u2 * s + v, r);
                }
                for &(v2, r) in &moves[v] {
                    q.add(from, u * s + v2, r);
                }
                if u == v && dual.state_of(u).1 == Mode::Active {
                    q.add(from, s * s + u, d);
                }
            }
            for &(u2, r) in &moves[u] {
                q.add(s * s + u, s * s + u2, r);
            }
        }
        Ok(PairDual { dual, generator: q, states: s })
    }

    pub fn dimension(&self) -> usize {
        self.states * self.states + self.states
    }

    /// Law at time `t` of the pair started from `a` and `b`.
    pub fn distribution(&self, t: f64, a: (usize, Mode), b: (usize, Mode), tol: f64) -> Result<Transient> {
        let s = self.states;
        let mut p0 = vec![0.0; self.dimension()];
        p0[self.dual.state_index(a.0, a.1) * s + self.dual.state_index(b.0, b.1)] = 1.0;
        propagate(&self.generator, &p0, t, tol)
    }

    /// Probability that the two lineages have merged by `t`.
    pub fn coalesced_by(&self, t: f64, a: (usize, Mode), b: (usize, Mode), tol: f64) -> Result<f64> {
        let p = self.distribution(t, a, b, tol)?;
        Ok(p.distribution[self.states * self.states..].iter().sum())
    }

    /// `E[z_a(t) z_b(t)]` for a forward system started from the field `z`
    /// (indexed like [`LineageDynamics::state_index`]).
    pub fn second_moment(&self, t: f64, a: (usize, Mode), b: (usize, Mode), field: &[f64], tol: f64) -> Result<f64> {
        let s = self.states;
        if field.len() != s {
            return Err(Error::invalid("field", "one value per dual state is required"));
        }
        let p = self.distribution(t, a, b, tol)?.distribution;
        let mut total = 0.0;
        for u in 0..s {
            for v in 0..s {
                total += p[u * s + v] * field[u] * field[v];
            }
            total += p[s * s + u] * field[u];
        }
        Ok(total)
    }
}
