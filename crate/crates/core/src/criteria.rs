//! The coexistence/clustering dichotomy and the renormalised Fisher-Wright
//! constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::linear_fit;

/// Half-width, in the tail exponent, of the band where no verdict is given.
pub const BOUNDARY_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Coexistence,
    Clustering,
    Boundary,
}

/// Return probability `t ↦ â_t(0,0)` of the symmetrised walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReturnProbability {
    /// `c t^{-a}`.
    PowerLaw { c: f64, a: f64 },
    /// Estimates at increasing times, interpolated linearly in log-log
    /// coordinates.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl ReturnProbability {
    fn validate(&self) -> Result<()> {
        match self {
            ReturnProbability::PowerLaw { c, a } => {
                if !(*c > 0.0) || !c.is_finite() || !a.is_finite() {
                    return Err(Error::invalid("a_t", "power law needs a positive constant and a finite exponent"));
                }
            }
            ReturnProbability::Tabulated { times, values } => {
                if times.len() < 2 || times.len() != values.len() {
                    return Err(Error::invalid("a_t", "need at least two (time, value) pairs"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) || !(times[0] > 0.0) {
                    return Err(Error::invalid("a_t", "times must be positive and increasing"));
                }
                if values.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::invalid("a_t", "return probabilities must be positive"));
                }
            }
        }
        Ok(())
    }

    fn domain_end(&self) -> f64 {
        match self {
            ReturnProbability::PowerLaw { .. } => f64::INFINITY,
            ReturnProbability::Tabulated { times, .. } => *times.last().expect("validated"),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ReturnProbability::PowerLaw { c, a } => c * t.powf(-a),
            ReturnProbability::Tabulated { times, values } => {
                let k = times.partition_point(|s| *s <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[k - 1].ln(), times[k].ln());
                let (v0, v1) = (values[k - 1].ln(), values[k].ln());
                let w = (t.ln() - t0) / (t1 - t0);
                (v0 + w * (v1 - v0)).exp()
            }
        }
    }
}

/// Slowly varying modulation `φ̂(t) = (1 + ln t)^power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogModulation {
    pub power: f64,
}

impl LogModulation {
    pub fn eval(&self, t: f64) -> f64 {
        (1.0 + t.ln()).powf(self.power)
    }
}

/// Which integral decides the dichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CriterionMode {
    /// `∫ â_t dt`.
    FiniteRho,
    /// `∫ t^{-(1-γ)/γ} â_t dt`.
    InfiniteRho { gamma: f64 },
    /// `∫ φ̂(t)^{-1/γ} t^{-(1-γ)/γ} â_t dt`.
    Modulated { gamma: f64, phi: LogModulation },
}

impl CriterionMode {
    fn validate(&self) -> Result<()> {
        match self {
            CriterionMode::FiniteRho => Ok(()),
            CriterionMode::InfiniteRho { gamma } | CriterionMode::Modulated { gamma, .. } => {
                if *gamma > 0.0 && *gamma <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("gamma", format!("must lie in (0, 1], got {gamma}")))
                }
            }
        }
    }

    fn weight(&self, t: f64) -> f64 {
        match self {
            CriterionMode::FiniteRho => 1.0,
            CriterionMode::InfiniteRho { gamma } => t.powf(-(1.0 - gamma) / gamma),
            CriterionMode::Modulated { gamma, phi } => {
                phi.eval(t).powf(-1.0 / gamma) * t.powf(-(1.0 - gamma) / gamma)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    /// `margin` is the left minus the right side of the deciding inequality.
    ClosedForm { margin: f64 },
    NumericalIntegral {
        horizon: f64,
        /// `∫_1^H` by quadrature.
        value: f64,
        /// Analytic integral of the fitted power law beyond `H`
        /// (infinite when the fit does not decay fast enough).
        tail: f64,
        /// Fitted decay exponent `p` of the integrand, `≈ C t^{-p}`.
        tail_exponent: f64,
        extrapolation_error: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub verdict: Verdict,
    pub evidence: Evidence,
    pub parameters: serde_json::Value,
}

impl RegimeVerdict {
    /// Quadrature value plus tail, when the integral converges.
    pub fn total(&self) -> Option<f64> {
        match self.evidence {
            Evidence::NumericalIntegral { value, tail, .. } if tail.is_finite() => Some(value + tail),
            _ => None,
        }
    }
}

const PANELS_PER_DECADE: usize = 4;
const QUADRATURE_TOLERANCE: f64 = 1e-11;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// `∫_1^H f(t) dt` on log-spaced panels, each by adaptive Simpson in `ln t`.
fn log_panel_integral(f: &dyn Fn(f64) -> f64, horizon: f64) -> f64 {
    let g = |s: f64| {
        let t = s.exp();
        f(t) * t
    };
    let end = horizon.ln();
    let panels = ((end / std::f64::consts::LN_10) * PANELS_PER_DECADE as f64).ceil().max(1.0) as usize;
    let width = end / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let (a, b) = (k as f64 * width, (k + 1) as f64 * width);
        let (fa, fb) = (g(a), g(b));
        let (m, fm, whole) = simpson(&g, a, fa, b, fb);
        let tol = QUADRATURE_TOLERANCE * whole.abs().max(1e-300);
        total += adaptive(&g, a, fa, b, fb, m, fm, whole, tol, 40);
    }
    total
}

/// Evaluates the dichotomy integral up to `horizon` and closes its tail
/// with a power law fitted over the last decade.
pub fn coexistence_integral(a_t: &ReturnProbability, mode: CriterionMode, horizon: f64) -> Result<RegimeVerdict> {
    a_t.validate()?;
    mode.validate()?;
    if !(horizon >= 100.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", format!("need a finite horizon of at least 100, got {horizon}")));
    }
    if horizon > a_t.domain_end() * (1.0 + 1e-12) {
        return Err(Error::invalid("horizon", "horizon beyond the tabulated return probabilities"));
    }
    let f = |t: f64| mode.weight(t) * a_t.eval(t);
    let value = log_panel_integral(&f, horizon);

    let samples = 41;
    let (lt, lf): (Vec<f64>, Vec<f64>) = (0..samples)
        .map(|k| {
            let t = horizon * 10f64.powf(k as f64 / (samples - 1) as f64 - 1.0);
            (t.ln(), f(t).ln())
        })
        .unzip();
    let fit = linear_fit(&lt, &lf);
    let p = -fit.slope;
    let c = fit.intercept.exp();
    let (verdict, tail, extrapolation_error) = if p > 1.0 + BOUNDARY_BAND {
        let tail = c * horizon.powf(1.0 - p) / (p - 1.0);
        // Residual spread of the fit plus the sensitivity of the tail to
        // its exponent, d tail / dp, scaled by the slope error.
        let dp = tail * (1.0 / (p - 1.0) + horizon.ln());
        let err = tail * (fit.residual_rms.exp() - 1.0) + dp.abs() * fit.slope_std_error;
        (Verdict::Coexistence, tail, err)
    } else if p < 1.0 - BOUNDARY_BAND {
        (Verdict::Clustering, f64::INFINITY, f64::INFINITY)
    } else {
        (Verdict::Boundary, f64::INFINITY, f64::INFINITY)
    };
    Ok(RegimeVerdict {
        verdict,
        evidence: Evidence::NumericalIntegral { horizon, value, tail, tail_exponent: p, extrapolation_error },
        parameters: serde_json::json!({ "a_t": a_t, "criterion": mode, "horizon": horizon }),
    })
}

/// The three worked examples of the dichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "example", rename_all = "snake_case", deny_unknown_fields)]
pub enum Example {
    /// Finite-variance migration in dimension `d` (real-valued here).
    Euclidean { d: f64, gamma: f64 },
    /// One-dimensional migration with tail exponent `q`.
    HeavyTail { q: f64, gamma: f64 },
    /// Hierarchical group of order `N` with `c_k = c^k` migration and
    /// `K_m = K^m`, `e_m = (e/N)^m` seed-bank.
    Hierarchical {
        #[serde(rename = "N")]
        order: f64,
        c: f64,
        #[serde(rename = "K")]
        k: f64,
        e: f64,
    },
}

/// Exponents that decide the hierarchical example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HierarchicalExponents {
    /// `log(N/Ke) / log(N/e)`.
    pub gamma_n: f64,
    /// `log c / log(N/c)`.
    pub delta_n: f64,
    /// `log N · log(Kc) > log c · log(K²e)`.
    pub log_inequality: bool,
}

impl HierarchicalExponents {
    pub fn new(order: f64, c: f64, k: f64, e: f64) -> Self {
        HierarchicalExponents {
            gamma_n: (order / (k * e)).ln() / (order / e).ln(),
            delta_n: c.ln() / (order / c).ln(),
            log_inequality: order.ln() * (k * c).ln() > c.ln() * (k * k * e).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleVerdict {
    #[serde(flatten)]
    pub regime: RegimeVerdict,
    pub hierarchical: Option<HierarchicalExponents>,
}

fn closed(margin: f64, example: &Example) -> RegimeVerdict {
    RegimeVerdict {
        verdict: if margin > 0.0 { Verdict::Coexistence } else { Verdict::Clustering },
        evidence: Evidence::ClosedForm { margin },
        parameters: serde_json::to_value(example).expect("plain data"),
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("gamma", format!("must lie in (0, 1], got {gamma}")))
    }
}

/// Closed-form verdict for one of the worked examples.
pub fn classify_example(example: Example) -> Result<ExampleVerdict> {
    match example {
        Example::Euclidean { d, gamma } => {
            check_gamma(gamma)?;
            if !(d >= 1.0) {
                return Err(Error::invalid("d", format!("dimension must be at least 1, got {d}")));
            }
            let margin = (1.0 - gamma) / gamma + d / 2.0 - 1.0;
            Ok(ExampleVerdict { regime: closed(margin, &example), hierarchical: None })
        }
        Example::HeavyTail { q, gamma } => {
            check_gamma(gamma)?;
            if !(q > 0.0 && q < 2.0) {
                return Err(Error::invalid("q", format!("must lie in (0, 2), got {q}")));
            }
            let margin = (1.0 - gamma) / gamma + 1.0 / q - 1.0;
            Ok(ExampleVerdict { regime: closed(margin, &example), hierarchical: None })
        }
        Example::Hierarchical { order, c, k, e } => {
            if !(order >= 2.0) {
                return Err(Error::invalid("N", format!("order must be at least 2, got {order}")));
            }
            if !(c > 0.0 && c < order) {
                return Err(Error::invalid("c", format!("need 0 < c < N, got {c}")));
            }
            if !(k > 0.0 && e > 0.0 && k * e < order) {
                return Err(Error::invalid("K", format!("need K, e > 0 and K e < N, got K e = {}", k * e)));
            }
            let exps = HierarchicalExponents::new(order, c, k, e);
            // With K < 1 the bank has finite mass and only the migration
            // exponent matters: â_t ≍ t^{-1-δ} is integrable iff δ > 0.
            let margin = if k < 1.0 {
                exps.delta_n
            } else {
                (1.0 - exps.gamma_n) / exps.gamma_n + exps.delta_n
            };
            Ok(ExampleVerdict { regime: closed(margin, &example), hierarchical: Some(exps) })
        }
    }
}

/// `d* = d / (1 + d B̂)`.
pub fn renormalize_fw(d: f64, bhat: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::invalid("d", format!("must be positive, got {d}")));
    }
    if !(bhat >= 0.0) {
        return Err(Error::invalid("B", format!("hazard must be non-negative, got {bhat}")));
    }
    let star = d / (1.0 + d * bhat);
    debug_assert!(star > 0.0 && star <= d);
    Ok(star)
}
