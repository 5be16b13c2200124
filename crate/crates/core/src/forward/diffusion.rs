use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resampling diffusion function `g` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionFunction {
    /// `d x (1 - x)`.
    FisherWright { d: f64 },
    /// `d (x (1 - x))^2`.
    OhtaKimura { d: f64 },
    /// `g ≡ 0`: deterministic dynamics. Outside the resampling class, kept
    /// for noise-free reductions.
    Zero,
    /// Linear interpolation of `values` on a uniform grid over `[0, 1]`.
    Custom { values: Vec<f64> },
}

impl DiffusionFunction {
    pub fn fisher_wright(d: f64) -> Self {
        DiffusionFunction::FisherWright { d }
    }

    /// Checks membership of the class: zeros at the ends, positive inside,
    /// finite Lipschitz constant.
    pub fn validate(&self) -> Result<()> {
        match self {
            DiffusionFunction::FisherWright { d } | DiffusionFunction::OhtaKimura { d } => {
                if !(*d > 0.0) || !d.is_finite() {
                    return Err(Error::invalid("g.d", format!("rate must be positive, got {d}")));
                }
            }
            DiffusionFunction::Zero => {}
            DiffusionFunction::Custom { values } => {
                if values.len() < 3 {
                    return Err(Error::invalid("g.values", "need at least three grid values"));
                }
                let last = values.len() - 1;
                if values[0].abs() > 1e-12 || values[last].abs() > 1e-12 {
                    return Err(Error::invalid("g.values", "g must vanish at 0 and 1"));
                }
                if values[1..last].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::invalid("g.values", "g must be positive on the interior grid"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            DiffusionFunction::FisherWright { d } => d * x * (1.0 - x),
            DiffusionFunction::OhtaKimura { d } => {
                let v = x * (1.0 - x);
                d * v * v
            }
            DiffusionFunction::Zero => 0.0,
            DiffusionFunction::Custom { values } => {
                let cells = (values.len() - 1) as f64;
                let pos = x * cells;
                let k = (pos.floor() as usize).min(values.len() - 2);
                let w = pos - k as f64;
                values[k] * (1.0 - w) + values[k + 1] * w
            }
        }
    }

    /// Lipschitz constant: exact for the closed forms, the largest
    /// difference quotient for tabulated functions.
    pub fn lipschitz(&self) -> f64 {
        match self {
            DiffusionFunction::FisherWright { d } => *d,
            // |d/dx (x(1-x))^2| = 2 x (1-x) |1 - 2x|, maximal at x = (3 - √3)/6.
            DiffusionFunction::OhtaKimura { d } => d * 3f64.sqrt() / 9.0,
            DiffusionFunction::Zero => 0.0,
            DiffusionFunction::Custom { values } => {
                let h = 1.0 / (values.len() - 1) as f64;
                values.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(0.0, f64::max)
            }
        }
    }

    /// Integral test for accessibility of the traps: `∫ x(1-x)/g(x) dx`
    /// converges near the boundary. Evaluated by comparing the integral
    /// from two cut-offs.
    pub fn traps_accessible(&self) -> bool {
        if *self == DiffusionFunction::Zero {
            return false;
        }
        let integral = |lo: f64| -> f64 {
            // Log-spaced midpoint rule on [lo, 1/2] (g symmetric checks both ends below).
            let steps = 4000;
            let (a, b) = (lo.ln(), 0.5f64.ln());
            let h = (b - a) / steps as f64;
            (0..steps)
                .map(|k| {
                    let x = (a + (k as f64 + 0.5) * h).exp();
                    let left = x * (1.0 - x) / self.eval(x);
                    let right = x * (1.0 - x) / self.eval(1.0 - x);
                    (left + right) * x * h
                })
                .sum()
        };
        let coarse = integral(1e-4);
        let fine = integral(1e-9);
        fine - coarse < 0.05 * (1.0 + coarse)
    }

    /// Tabulates `g` on `points` uniform grid points.
    pub fn tabulate(&self, points: usize) -> Vec<f64> {
        (0..points).map(|k| self.eval(k as f64 / (points - 1) as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_zeros() {
        for g in [
            DiffusionFunction::FisherWright { d: 2.0 },
            DiffusionFunction::OhtaKimura { d: 1.0 },
            DiffusionFunction::Custom { values: vec![0.0, 0.3, 0.5, 0.3, 0.0] },
        ] {
            g.validate().unwrap();
            assert_eq!(g.eval(0.0), 0.0);
            assert_eq!(g.eval(1.0), 0.0);
            assert!(g.eval(0.37) > 0.0);
        }
    }

    #[test]
    fn custom_rejects_bad_tables() {
        assert!(DiffusionFunction::Custom { values: vec![0.1, 0.2, 0.0] }.validate().is_err());
        assert!(DiffusionFunction::Custom { values: vec![0.0, 0.0, 0.0] }.validate().is_err());
    }

    #[test]
    fn custom_interpolates_linearly() {
        let g = DiffusionFunction::Custom { values: vec![0.0, 1.0, 0.0] };
        assert!((g.eval(0.25) - 0.5).abs() < 1e-15);
        assert_eq!(g.lipschitz(), 2.0);
    }

    #[test]
    fn lipschitz_bounds_difference_quotients() {
        for g in [DiffusionFunction::FisherWright { d: 1.5 }, DiffusionFunction::OhtaKimura { d: 2.0 }] {
            let lip = g.lipschitz();
            for k in 0..1000 {
                let (a, b) = (k as f64 / 1000.0, (k + 1) as f64 / 1000.0);
                assert!((g.eval(b) - g.eval(a)).abs() <= lip * (b - a) * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn accessibility_of_the_traps() {
        assert!(DiffusionFunction::FisherWright { d: 1.0 }.traps_accessible());
        assert!(!DiffusionFunction::OhtaKimura { d: 1.0 }.traps_accessible());
    }
}
