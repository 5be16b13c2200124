//! Hurwitz zeta by Euler-Maclaurin summation.

use crate::error::{Error, Result};

/// B_{2j} / (2j)! for j = 1..=10.
const BERNOULLI_OVER_FACTORIAL: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 2730.0 / 479_001_600.0,
    7.0 / 6.0 / 87_178_291_200.0,
    -3617.0 / 510.0 / 20_922_789_888_000.0,
    43867.0 / 798.0 / 6_402_373_705_728_000.0,
    -174611.0 / 330.0 / 2_432_902_008_176_640_000.0,
];

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (k + a)^{-s}` for `s > 1`, `a > 0`.
///
/// Returns the value and a bound on the Euler-Maclaurin remainder.
pub fn hurwitz_zeta(s: f64, a: f64) -> Result<(f64, f64)> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::invalid("s", format!("need s > 1, got {s}")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::invalid("a", format!("need a > 0, got {a}")));
    }
    const SHIFT: usize = 16;
    let head: f64 = (0..SHIFT).map(|k| (k as f64 + a).powf(-s)).sum();
    let x = a + SHIFT as f64;
    let mut tail = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // Rising factorial s(s+1)...(s+2j-2) times x^{-s-2j+1}.
    let mut poch = s;
    let mut power = x.powf(-s - 1.0);
    let mut last = 0.0;
    for (j, b) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        if j > 0 {
            poch *= (s + 2.0 * j as f64 - 1.0) * (s + 2.0 * j as f64);
            power /= x * x;
        }
        last = b * poch * power;
        tail += last;
    }
    Ok((head + tail, last.abs()))
}

/// Riemann zeta for `s > 1`.
pub fn riemann_zeta(s: f64) -> Result<f64> {
    hurwitz_zeta(s, 1.0).map(|(v, _)| v)
}
