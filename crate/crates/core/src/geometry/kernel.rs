use rand::Rng;
use serde::{Deserialize, Serialize};

use super::group::{Family, Geography};
use crate::error::{Error, Result};
use crate::special::{hurwitz_zeta, riemann_zeta};

/// Declared bound on the mass lost when folding an infinite kernel.
pub const FOLD_TOLERANCE: f64 = 1e-9;

/// Migration law on the infinite geography, before truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// Rate `rate` to each of the `2d` neighbours.
    NearestNeighbour { rate: f64 },
    /// `a(0,k) = Q |k|^{-1-q}` on `Z`.
    HeavyTail {
        #[serde(rename = "Q")]
        amplitude: f64,
        q: f64,
    },
    /// Hierarchical random walk with `c_k = c^k`: at rate `c_{k-1}/N^{k-1}`
    /// the walk jumps uniformly within its level-`k` block.
    Hierarchical { c: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::NearestNeighbour { rate } => {
                if !(rate >= 0.0) || !rate.is_finite() {
                    return Err(Error::invalid("rate", "must be finite and non-negative"));
                }
            }
            KernelSpec::HeavyTail { amplitude, q } => {
                if !(amplitude > 0.0) || !amplitude.is_finite() {
                    return Err(Error::invalid("Q", "amplitude must be positive"));
                }
                if !(q > 0.0 && q < 2.0) {
                    return Err(Error::invalid("q", format!("tail exponent must lie in (0,2), got {q}")));
                }
            }
            KernelSpec::Hierarchical { c } => {
                if !(c > 0.0) || !c.is_finite() {
                    return Err(Error::invalid("c", "growth base must be positive"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelOptions {
    pub symmetrize: bool,
    /// Fold the infinite kernel onto the quotient; otherwise restrict it to
    /// the fundamental domain.
    pub fold: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            symmetrize: false,
            fold: true,
        }
    }
}

/// Translation-invariant jump rates on a finite geography.
#[derive(Debug, Clone)]
pub struct MigrationKernel {
    geography: Geography,
    /// `row[j] = a(0, j)`. `row[0]` holds mass folded back onto the origin;
    /// it has no dynamical effect.
    row: Vec<f64>,
    jumps: Vec<(usize, f64)>,
    cumulative: Vec<f64>,
    jump_rate: f64,
    symmetric: bool,
    folded: bool,
    fold_error: f64,
    infinite_total: Option<f64>,
}

impl MigrationKernel {
    pub fn build(geography: &Geography, spec: &KernelSpec, options: KernelOptions) -> Result<Self> {
        spec.validate()?;
        let size = geography.size();
        let mut row = vec![0.0; size];
        let mut fold_error = 0.0;
        let infinite_total;
        match (*spec, geography.family()) {
            (KernelSpec::NearestNeighbour { rate }, Family::Torus { d, n }) => {
                for axis in 0..d {
                    let mut e = vec![0i64; d];
                    e[axis] = 1;
                    // +e leaves the fundamental domain [-n, n-1] when n = 1.
                    if options.fold || n >= 2 {
                        row[geography.torus_site(&e)] += rate;
                    }
                    e[axis] = -1;
                    row[geography.torus_site(&e)] += rate;
                }
                infinite_total = 2.0 * d as f64 * rate;
            }
            (KernelSpec::HeavyTail { amplitude, q }, Family::Torus { d, n }) => {
                if d != 1 {
                    return Err(Error::invalid("d", "heavy-tailed kernels are defined on the 1-D torus only"));
                }
                let len = 2 * n;
                let s = 1.0 + q;
                if options.fold {
                    // Residue r collects k = r + 2n l and k = -(2n - r) - 2n l, l >= 0.
                    let scale = amplitude * (len as f64).powf(-s);
                    let (z0, e0) = hurwitz_zeta(s, 1.0)?;
                    row[0] = 2.0 * scale * z0;
                    fold_error += 2.0 * scale * e0;
                    for (r, slot) in row.iter_mut().enumerate().skip(1) {
                        let (zp, ep) = hurwitz_zeta(s, r as f64 / len as f64)?;
                        let (zm, em) = hurwitz_zeta(s, (len - r) as f64 / len as f64)?;
                        *slot = scale * (zp + zm);
                        fold_error += scale * (ep + em);
                    }
                } else {
                    for k in -(n as i64)..(n as i64) {
                        if k != 0 {
                            row[geography.torus_site(&[k])] += amplitude * (k.unsigned_abs() as f64).powf(-s);
                        }
                    }
                }
                infinite_total = 2.0 * amplitude * riemann_zeta(s)?;
            }
            (KernelSpec::Hierarchical { c }, Family::Hierarchical { order, n }) => {
                let big_n = order as f64;
                if c >= big_n {
                    return Err(Error::invalid("c", format!("need c < N = {order}, got {c}")));
                }
                let ratio = c / big_n;
                let geom = 1.0 - c / (big_n * big_n);
                // Rate to one site at ultrametric distance m:
                // Σ_{k≥m} (c/N)^{k-1} N^{-k}.
                let at_distance = |m: usize| ratio.powi(m as i32 - 1) * big_n.powi(-(m as i32)) / geom;
                for (j, slot) in row.iter_mut().enumerate().skip(1) {
                    *slot = at_distance(geography.hierarchical_norm(j));
                }
                if options.fold {
                    // Every site outside the ball projects evenly onto the ball.
                    let outside = (big_n - 1.0) / (big_n.powi(n as i32 + 1) * geom) * ratio.powi(n as i32)
                        / (1.0 - ratio);
                    for slot in row.iter_mut() {
                        *slot += outside;
                    }
                }
                infinite_total = (big_n - 1.0) / (big_n * geom * (1.0 - ratio));
            }
            (_, Family::Singleton) => {
                infinite_total = 0.0;
            }
            (KernelSpec::HeavyTail { .. }, Family::Hierarchical { .. }) => {
                return Err(Error::invalid("kernel.variant", "heavy-tailed kernel is undefined on a hierarchical geography"));
            }
            (KernelSpec::NearestNeighbour { .. }, Family::Hierarchical { .. }) => {
                return Err(Error::invalid("kernel.variant", "nearest-neighbour kernel needs a torus"));
            }
            (KernelSpec::Hierarchical { .. }, Family::Torus { .. }) => {
                return Err(Error::invalid("kernel.variant", "hierarchical kernel needs a hierarchical geography"));
            }
        }
        if fold_error > FOLD_TOLERANCE {
            return Err(Error::Numerical(format!(
                "fold truncation error {fold_error:.3e} above tolerance {FOLD_TOLERANCE:.1e}"
            )));
        }
        let mut kernel = Self::assemble(geography.clone(), row, options.fold);
        kernel.fold_error = fold_error;
        kernel.infinite_total = Some(infinite_total);
        if options.symmetrize {
            kernel = kernel.symmetrized();
        }
        Ok(kernel)
    }

    /// Kernel from an explicit row `a(0, ·)`; `row[0]` is kept as self mass.
    pub fn from_row(geography: &Geography, row: Vec<f64>) -> Result<Self> {
        if row.len() != geography.size() {
            return Err(Error::invalid("row", "length must equal the geography size"));
        }
        if row.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::invalid("row", "rates must be finite and non-negative"));
        }
        Ok(Self::assemble(geography.clone(), row, false))
    }

    /// The kernel with no migration.
    pub fn zero(geography: &Geography) -> Self {
        Self::assemble(geography.clone(), vec![0.0; geography.size()], false)
    }

    fn assemble(geography: Geography, row: Vec<f64>, folded: bool) -> Self {
        let jumps: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, r)| **r > 0.0)
            .map(|(j, r)| (j, *r))
            .collect();
        let mut cumulative = Vec::with_capacity(jumps.len());
        let mut acc = 0.0;
        for (_, r) in &jumps {
            acc += r;
            cumulative.push(acc);
        }
        let symmetric = (0..row.len()).all(|j| row[j] == row[geography.neg(j)]);
        MigrationKernel {
            geography,
            row,
            jumps,
            cumulative,
            jump_rate: acc,
            symmetric,
            folded,
            fold_error: 0.0,
            infinite_total: None,
        }
    }

    /// `â(0,j) = (a(0,j) + a(0,-j)) / 2`, assigned to both entries so the
    /// result is symmetric bit for bit.
    pub fn symmetrized(&self) -> Self {
        let g = &self.geography;
        let mut row = self.row.clone();
        for j in 0..row.len() {
            let mj = g.neg(j);
            if j <= mj {
                let v = 0.5 * (self.row[j] + self.row[mj]);
                row[j] = v;
                row[mj] = v;
            }
        }
        let mut out = Self::assemble(g.clone(), row, self.folded);
        out.fold_error = self.fold_error;
        out.infinite_total = self.infinite_total;
        out
    }

    /// The time-reversed kernel `a(0, -j)`.
    pub fn reversed(&self) -> Self {
        let g = &self.geography;
        let row = (0..self.row.len()).map(|j| self.row[g.neg(j)]).collect();
        let mut out = Self::assemble(g.clone(), row, self.folded);
        out.fold_error = self.fold_error;
        out.infinite_total = self.infinite_total;
        out
    }

    pub fn geography(&self) -> &Geography {
        &self.geography
    }

    pub fn row(&self) -> &[f64] {
        &self.row
    }

    /// Non-zero off-diagonal entries `(j, a(0,j))`.
    pub fn jumps(&self) -> &[(usize, f64)] {
        &self.jumps
    }

    /// `a(i, j)` for `i ≠ j`; zero on the diagonal.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.row[self.geography.sub(j, i)]
        }
    }

    /// Total off-diagonal rate `Σ_{j≠0} a(0,j)`.
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    /// Total mass of the row including the folded self mass.
    pub fn row_mass(&self) -> f64 {
        self.row.iter().sum()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_folded(&self) -> bool {
        self.folded
    }

    pub fn fold_error(&self) -> f64 {
        self.fold_error
    }

    /// `Σ_k a(0,k)` of the untruncated kernel, when known.
    pub fn infinite_total(&self) -> Option<f64> {
        self.infinite_total
    }

    /// Draws a jump displacement with probability `a(0,j) / jump_rate`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.jump_rate;
        let k = self.cumulative.partition_point(|c| *c <= u);
        self.jumps[k.min(self.jumps.len() - 1)].0
    }

    /// Smallest non-zero relaxation rate of the walk, from the characters of
    /// the group: `min_{k≠0} Σ_j a(0,j) (1 - cos(2π k·j / radix))`.
    pub fn spectral_gap(&self) -> f64 {
        let g = &self.geography;
        if g.size() == 1 || self.jumps.is_empty() {
            return 0.0;
        }
        let radix = g.radix() as f64;
        let jump_digits: Vec<(Vec<usize>, f64)> =
            self.jumps.iter().map(|&(j, r)| (g.decode(j), r)).collect();
        let mut gap = f64::INFINITY;
        for k in 1..g.size() {
            let kd = g.decode(k);
            let mut re = 0.0;
            for (jd, r) in &jump_digits {
                let dot: usize = kd.iter().zip(jd).map(|(a, b)| a * b).sum();
                let phase = 2.0 * std::f64::consts::PI * (dot % g.radix()) as f64 / radix;
                re += r * (1.0 - phase.cos());
            }
            gap = gap.min(re);
        }
        gap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn opts(symmetrize: bool, fold: bool) -> KernelOptions {
        KernelOptions { symmetrize, fold }
    }

    #[test]
    fn nearest_neighbour_on_four_sites() {
        let g = Geography::torus(1, 2).unwrap();
        let k = MigrationKernel::build(&g, &KernelSpec::NearestNeighbour { rate: 0.5 }, opts(false, true)).unwrap();
        assert_eq!(k.row(), &[0.0, 0.5, 0.0, 0.5]);
        assert_eq!(k.jump_rate(), 1.0);
        assert!(k.is_symmetric());
    }

    #[test]
    fn folding_two_site_quotient() {
        // Both unit steps of Z land on the single non-origin site.
        let g = Geography::torus(1, 1).unwrap();
        let k = MigrationKernel::build(&g, &KernelSpec::NearestNeighbour { rate: 0.5 }, opts(false, true)).unwrap();
        assert_eq!(k.rate(0, 1), 1.0);
        let r = MigrationKernel::build(&g, &KernelSpec::NearestNeighbour { rate: 0.5 }, opts(false, false)).unwrap();
        assert_eq!(r.rate(0, 1), 0.5);
    }

    #[test]
    fn hierarchical_nearest_block_rate() {
        // Σ_{k≥1} (c^{k-1}/2^{k-1}) 2^{-k} with c = 1/2 is (1/2)/(1 - 1/8).
        let g = Geography::hierarchical(2, 3).unwrap();
        let k = MigrationKernel::build(&g, &KernelSpec::Hierarchical { c: 0.5 }, opts(false, false)).unwrap();
        let direct: f64 = (1..200).map(|k| 0.25f64.powi(k - 1) * 0.5f64.powi(k)).sum();
        assert!((k.rate(0, 1) - 4.0 / 7.0).abs() < 1e-15);
        assert!((k.rate(0, 1) - direct).abs() < 1e-15);
        // Distance is symmetric and translation invariant.
        assert_eq!(k.rate(5, 4), k.rate(4, 5));
    }

    #[test]
    fn hierarchical_fold_conserves_mass() {
        for &(order, n, c) in &[(2usize, 3usize, 0.5), (3, 4, 2.0), (4, 2, 3.5), (2, 6, 1.9)] {
            let g = Geography::hierarchical(order, n).unwrap();
            let k = MigrationKernel::build(&g, &KernelSpec::Hierarchical { c }, opts(false, true)).unwrap();
            let total = k.infinite_total().unwrap();
            assert!((k.row_mass() - total).abs() <= FOLD_TOLERANCE * total.max(1.0), "N={order} n={n}");
            // Direct summation over levels as an independent check.
            let direct: f64 = (1..2000)
                .map(|m| {
                    let big = order as f64;
                    let per_site: f64 = (m..m + 1000).map(|kk| (c / big).powi(kk as i32 - 1) * big.powi(-(kk as i32))).sum();
                    (big - 1.0) * big.powi(m as i32 - 1) * per_site
                })
                .take_while(|v| v.is_finite())
                .sum();
            assert!((direct - total).abs() < 1e-9 * total, "direct {direct} vs {total}");
        }
    }

    #[test]
    fn hierarchical_rejects_large_c() {
        let g = Geography::hierarchical(2, 3).unwrap();
        assert!(MigrationKernel::build(&g, &KernelSpec::Hierarchical { c: 2.0 }, opts(false, true)).is_err());
    }

    #[test]
    fn heavy_tail_rejected_on_hierarchical() {
        let g = Geography::hierarchical(2, 3).unwrap();
        let spec = KernelSpec::HeavyTail { amplitude: 1.0, q: 0.8 };
        assert!(MigrationKernel::build(&g, &spec, opts(false, true)).is_err());
        assert!(KernelSpec::HeavyTail { amplitude: 1.0, q: 2.0 }.validate().is_err());
    }

    #[test]
    fn heavy_tail_fold_matches_brute_force() {
        let g = Geography::torus(1, 4).unwrap();
        let (amp, q) = (1.0, 0.8);
        let k = MigrationKernel::build(&g, &KernelSpec::HeavyTail { amplitude: amp, q }, opts(false, true)).unwrap();
        assert!(k.fold_error() <= FOLD_TOLERANCE);
        let total = k.infinite_total().unwrap();
        assert!((k.row_mass() - total).abs() <= FOLD_TOLERANCE);
        // Brute-force fold of a long window plus the analytic tail beyond it.
        let window: i64 = 2_000_000;
        let mut brute = [0.0f64; 8];
        for kk in -window..=window {
            if kk != 0 {
                brute[kk.rem_euclid(8) as usize] += amp * (kk.unsigned_abs() as f64).powf(-1.0 - q);
            }
        }
        let tail_per_residue = 2.0 * amp * (window as f64).powf(-q) / q / 8.0;
        for r in 0..8 {
            assert!((brute[r] + tail_per_residue - k.row()[r]).abs() < 1e-6, "residue {r}");
        }
        assert!(k.is_symmetric());
    }

    #[test]
    fn symmetrisation_is_exact() {
        let g = Geography::torus(2, 3).unwrap();
        let row: Vec<f64> = (0..g.size()).map(|j| (j as f64 * 0.37).sin().abs()).collect();
        let k = MigrationKernel::from_row(&g, row).unwrap();
        assert!(!k.is_symmetric());
        let s = k.symmetrized();
        assert!(s.is_symmetric());
        for j in 0..g.size() {
            assert_eq!(s.row()[j], s.row()[g.neg(j)]);
        }
        assert!((s.row_mass() - k.row_mass()).abs() < 1e-12);
    }

    #[test]
    fn spectral_gap_of_ring() {
        // Ring of 2n sites, rate 1/2 each way: gap = 1 - cos(2π / 2n).
        let g = Geography::torus(1, 4).unwrap();
        let k = MigrationKernel::build(&g, &KernelSpec::NearestNeighbour { rate: 0.5 }, opts(false, true)).unwrap();
        let expect = 1.0 - (2.0 * std::f64::consts::PI / 8.0).cos();
        assert!((k.spectral_gap() - expect).abs() < 1e-12);
    }

    #[test]
    fn sampled_jumps_follow_the_row() {
        let g = Geography::torus(1, 3).unwrap();
        let k = MigrationKernel::from_row(&g, vec![0.0, 1.0, 2.0, 0.0, 0.5, 0.5]).unwrap();
        let mut rng = stream(1, 0, "jumps");
        let mut counts = [0usize; 6];
        let n = 200_000;
        for _ in 0..n {
            counts[k.sample_jump(&mut rng)] += 1;
        }
        assert_eq!(counts[0] + counts[3], 0);
        for &(j, r) in k.jumps() {
            let p = r / k.jump_rate();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((counts[j] as f64 / n as f64 - p).abs() < 4.0 * se);
        }
    }

    proptest! {
        #[test]
        fn translation_invariance(n in 1usize..6, d in 1usize..3, i in 0usize..1000, j in 0usize..1000, s in 0usize..1000) {
            let g = Geography::torus(d, n).unwrap();
            let row: Vec<f64> = (0..g.size()).map(|x| ((x * 7919) % 13) as f64).collect();
            let k = MigrationKernel::from_row(&g, row).unwrap();
            let (i, j, s) = (i % g.size(), j % g.size(), s % g.size());
            if i != j {
                prop_assert_eq!(k.rate(i, j), k.row()[g.sub(j, i)]);
                prop_assert_eq!(k.rate(g.add(i, s), g.add(j, s)), k.rate(i, j));
            }
        }

        #[test]
        fn fold_conserves_mass_heavy_tail(n in 1usize..40, q in 0.05f64..1.95, amp in 0.1f64..3.0) {
            let g = Geography::torus(1, n).unwrap();
            let k = MigrationKernel::build(&g, &KernelSpec::HeavyTail { amplitude: amp, q }, opts(false, true)).unwrap();
            prop_assert!((k.row_mass() - k.infinite_total().unwrap()).abs() <= FOLD_TOLERANCE * k.infinite_total().unwrap().max(1.0));
        }
    }
}
