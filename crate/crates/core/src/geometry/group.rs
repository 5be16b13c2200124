use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a finite geography.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `(Z / 2n Z)^d`, coordinates read in the fundamental domain `[-n, n-1]`.
    Torus { d: usize, n: usize },
    /// The ball of radius `n` in the hierarchical group of order `N`.
    Hierarchical {
        #[serde(rename = "N")]
        order: usize,
        n: usize,
    },
    /// The trivial group with one site.
    Singleton,
}

/// A finite Abelian group written as a product of cyclic groups.
///
/// Sites are labelled `0..size` in mixed radix. For the torus the first
/// coordinate is the most significant digit (row-major); for the
/// hierarchical group digit `k` is the level-`k+1` block index and has weight
/// `N^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Geography {
    family: Family,
    radix: usize,
    digits: usize,
    /// `radix^k`, indexed by digit position.
    strides: Vec<usize>,
    size: usize,
}

impl Geography {
    pub fn new(family: Family) -> Result<Self> {
        let (radix, digits) = match family {
            Family::Torus { d, n } => {
                if d == 0 {
                    return Err(Error::invalid("d", "torus dimension must be at least 1"));
                }
                if n == 0 {
                    return Err(Error::invalid("n", "torus radius must be at least 1"));
                }
                (2 * n, d)
            }
            Family::Hierarchical { order, n } => {
                if order < 2 {
                    return Err(Error::invalid("N", "hierarchical order must be at least 2"));
                }
                if n == 0 {
                    return Err(Error::invalid("n", "ball radius must be at least 1"));
                }
                (order, n)
            }
            Family::Singleton => (1, 0),
        };
        let mut strides = Vec::with_capacity(digits);
        let mut size: usize = 1;
        for _ in 0..digits {
            strides.push(size);
            size = size
                .checked_mul(radix)
                .filter(|s| *s <= 1 << 32)
                .ok_or_else(|| Error::invalid("n", "geography too large to index"))?;
        }
        Ok(Geography {
            family,
            radix,
            digits,
            strides,
            size,
        })
    }

    pub fn torus(d: usize, n: usize) -> Result<Self> {
        Self::new(Family::Torus { d, n })
    }

    pub fn hierarchical(order: usize, n: usize) -> Result<Self> {
        Self::new(Family::Hierarchical { order, n })
    }

    pub fn singleton() -> Self {
        Self::new(Family::Singleton).expect("trivial group is valid")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radix(&self) -> usize {
        self.radix
    }

    pub fn digit_count(&self) -> usize {
        self.digits
    }

    /// Stride of torus coordinate `axis` (row-major: axis 0 is slowest).
    fn axis_stride(&self, axis: usize) -> usize {
        match self.family {
            Family::Torus { .. } => self.strides[self.digits - 1 - axis],
            Family::Hierarchical { .. } | Family::Singleton => self.strides[axis],
        }
    }

    /// Digits of a label, ordered as coordinates (torus) or levels
    /// (hierarchical).
    pub fn decode(&self, label: usize) -> Vec<usize> {
        debug_assert!(label < self.size);
        (0..self.digits)
            .map(|k| (label / self.axis_stride(k)) % self.radix)
            .collect()
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        assert_eq!(digits.len(), self.digits, "wrong number of digits");
        digits
            .iter()
            .enumerate()
            .map(|(k, &v)| (v % self.radix) * self.axis_stride(k))
            .sum()
    }

    /// Torus site from signed coordinates, reduced mod `2n`.
    pub fn torus_site(&self, coords: &[i64]) -> usize {
        let r = self.radix as i64;
        let digits: Vec<usize> = coords.iter().map(|c| c.rem_euclid(r) as usize).collect();
        self.encode(&digits)
    }

    /// Signed coordinates in the fundamental domain `[-n, n-1]`.
    pub fn torus_coords(&self, label: usize) -> Vec<i64> {
        let half = (self.radix / 2) as i64;
        self.decode(label)
            .into_iter()
            .map(|v| {
                let v = v as i64;
                if v >= half {
                    v - self.radix as i64
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn add(&self, a: usize, b: usize) -> usize {
        let mut out = 0;
        for &s in &self.strides {
            let da = (a / s) % self.radix;
            let db = (b / s) % self.radix;
            out += ((da + db) % self.radix) * s;
        }
        out
    }

    pub fn neg(&self, a: usize) -> usize {
        let mut out = 0;
        for &s in &self.strides {
            let da = (a / s) % self.radix;
            out += ((self.radix - da) % self.radix) * s;
        }
        out
    }

    /// `b - a`, the displacement from `a` to `b`.
    pub fn sub(&self, b: usize, a: usize) -> usize {
        self.add(b, self.neg(a))
    }

    /// Ultrametric distance from the origin: `1 +` the level of the highest
    /// non-zero digit, or 0 at the origin.
    pub fn hierarchical_norm(&self, label: usize) -> usize {
        let mut norm = 0;
        for (k, &s) in self.strides.iter().enumerate() {
            if (label / s) % self.radix != 0 {
                norm = k + 1;
            }
        }
        norm
    }

    /// Translation table `table[i * m + k] = add(i, offsets[k])`.
    pub fn translation_table(&self, offsets: &[usize]) -> Vec<u32> {
        let m = offsets.len();
        let mut table = vec![0u32; self.size * m];
        for i in 0..self.size {
            for (k, &o) in offsets.iter().enumerate() {
                table[i * m + k] = self.add(i, o) as u32;
            }
        }
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sizes() {
        assert_eq!(Geography::torus(1, 2).unwrap().size(), 4);
        assert_eq!(Geography::torus(3, 6).unwrap().size(), 1728);
        assert_eq!(Geography::hierarchical(2, 3).unwrap().size(), 8);
        assert_eq!(Geography::hierarchical(3, 4).unwrap().size(), 81);
        assert_eq!(Geography::singleton().size(), 1);
    }

    #[test]
    fn rejects_degenerate_groups() {
        assert!(Geography::torus(1, 0).is_err());
        assert!(Geography::torus(0, 2).is_err());
        assert!(Geography::hierarchical(1, 3).is_err());
        assert!(Geography::hierarchical(2, 0).is_err());
    }

    #[test]
    fn two_by_two_torus_wraps() {
        let g = Geography::torus(2, 1).unwrap();
        let e = g.encode(&[1, 0]);
        assert_eq!(g.add(e, e), g.encode(&[0, 0]));
        assert_eq!(g.add(e, e), 0);
    }

    #[test]
    fn row_major_labels() {
        let g = Geography::torus(2, 2).unwrap();
        assert_eq!(g.encode(&[0, 1]), 1);
        assert_eq!(g.encode(&[1, 0]), 4);
        assert_eq!(g.torus_coords(g.encode(&[3, 2])), vec![-1, -2]);
        assert_eq!(g.torus_site(&[-1, 5]), g.encode(&[3, 1]));
    }

    #[test]
    fn hierarchical_norm_is_top_level() {
        let g = Geography::hierarchical(2, 3).unwrap();
        assert_eq!(g.hierarchical_norm(0), 0);
        assert_eq!(g.hierarchical_norm(1), 1);
        assert_eq!(g.hierarchical_norm(2), 2);
        assert_eq!(g.hierarchical_norm(3), 2);
        assert_eq!(g.hierarchical_norm(5), 3);
        // Digit-wise addition: 1 + 1 = 0 in the first level.
        assert_eq!(g.add(1, 1), 0);
        assert_eq!(g.add(3, 1), 2);
    }

    fn small_geographies() -> Vec<Geography> {
        vec![
            Geography::torus(1, 1).unwrap(),
            Geography::torus(1, 5).unwrap(),
            Geography::torus(2, 2).unwrap(),
            Geography::torus(2, 8).unwrap(),
            Geography::torus(3, 2).unwrap(),
            Geography::torus(4, 2).unwrap(),
            Geography::hierarchical(2, 8).unwrap(),
            Geography::hierarchical(3, 5).unwrap(),
            Geography::hierarchical(4, 4).unwrap(),
        ]
    }

    #[test]
    fn group_axioms_exhaustive() {
        for g in small_geographies() {
            assert!(g.size() <= 256);
            let n = g.size();
            for a in 0..n {
                assert_eq!(g.add(a, g.neg(a)), 0);
                assert_eq!(g.add(a, 0), a);
                assert_eq!(g.decode(a).len(), g.digit_count());
                assert_eq!(g.encode(&g.decode(a)), a);
                for b in 0..n {
                    let ab = g.add(a, b);
                    assert!(ab < n);
                    assert_eq!(ab, g.add(b, a));
                }
            }
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        assert_eq!(g.add(g.add(a, b), c), g.add(a, g.add(b, c)));
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn associativity_random(
            n in 1usize..20, d in 1usize..4, a in 0usize..100_000, b in 0usize..100_000, c in 0usize..100_000,
        ) {
            let g = Geography::torus(d, n).unwrap();
            let (a, b, c) = (a % g.size(), b % g.size(), c % g.size());
            prop_assert_eq!(g.add(g.add(a, b), c), g.add(a, g.add(b, c)));
            prop_assert_eq!(g.sub(g.add(a, b), b), a);
        }
    }
}
