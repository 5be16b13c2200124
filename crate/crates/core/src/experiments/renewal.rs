use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::parallel::Workers;
use crate::rng::stream;
use crate::stats::{kaplan_meier, linear_fit, LinearFit, SurvivalPoint};

/// Tail-fit window `[FIT_START_FRACTION, FIT_END_FRACTION] · horizon`.
/// The local slope of the intersection tail approaches `-γ*` only with a
/// relative correction of order `n^{-(1-γ)}`, so the fit uses the largest
/// decade that censoring leaves intact.
pub const FIT_START_FRACTION: f64 = 1e-3;
pub const FIT_END_FRACTION: f64 = 1e-2;
/// Rescaled time unit of the first-meeting transform as a fraction of the
/// horizon.
pub const LAPLACE_SCALE_FRACTION: f64 = 1e-3;
pub const LAPLACE_LAMBDAS: [f64; 5] = [0.1, 0.3, 1.0, 3.0, 10.0];
const FIT_POINTS_PER_DECADE: usize = 10;

/// Discrete increment with `P(X ≥ n) = n^{-γ}`, capped at `cap`.
pub fn sample_increment<R: Rng + ?Sized>(gamma: f64, cap: u64, rng: &mut R) -> u64 {
    let u = 1.0 - rng.random::<f64>();
    let x = u.powf(-1.0 / gamma).floor();
    if x >= cap as f64 {
        cap
    } else {
        x as u64
    }
}

/// Gaps between successive common points of two independent renewal
/// processes started at 0, up to `horizon`, and the censored remainder.
pub fn intersection_increments<R: Rng + ?Sized>(gamma: f64, horizon: u64, rng: &mut R) -> (Vec<u64>, u64) {
    let cap = horizon + 1;
    let (mut a, mut b) = (0u64, 0u64);
    let mut last = 0u64;
    let mut gaps = Vec::new();
    loop {
        if a < b {
            a = a.saturating_add(sample_increment(gamma, cap, rng));
        } else {
            b = b.saturating_add(sample_increment(gamma, cap, rng));
        }
        if a.min(b) > horizon {
            return (gaps, horizon - last);
        }
        if a == b {
            gaps.push(a - last);
            last = a;
        }
    }
}

/// Renewal density `u_n` of the increment law, `n = 0..=n_max`.
pub fn renewal_density(gamma: f64, n_max: usize) -> Vec<f64> {
    let f: Vec<f64> = (0..=n_max)
        .map(|k| if k == 0 { 0.0 } else { (k as f64).powf(-gamma) - ((k + 1) as f64).powf(-gamma) })
        .collect();
    let mut u = vec![0.0; n_max + 1];
    u[0] = 1.0;
    for n in 1..=n_max {
        u[n] = (1..=n).map(|k| f[k] * u[n - k]).sum();
    }
    u
}

/// Exact increment law `f*_n` of the intersection, from `u*_n = u_n^2`.
pub fn intersection_law(gamma: f64, n_max: usize) -> Vec<f64> {
    let u2: Vec<f64> = renewal_density(gamma, n_max).iter().map(|u| u * u).collect();
    let mut f = vec![0.0; n_max + 1];
    for n in 1..=n_max {
        f[n] = u2[n] - (1..n).map(|k| f[k] * u2[n - k]).sum::<f64>();
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplacePoint {
    pub lambda: f64,
    pub empirical: f64,
    /// `(1 + D λ^{γ*})^{-1}` at the fitted `D`.
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceFit {
    /// Success probability of the geometric number of increments is `1/N`.
    pub n: f64,
    /// Time rescaling `N^{1/γ*}`.
    pub scale: f64,
    pub d: f64,
    /// Free least-squares exponent of `1/L - 1` against `λ`.
    pub effective_exponent: f64,
    /// Largest `|empirical - model|`.
    pub max_deviation: f64,
    pub points: Vec<LaplacePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenewalReport {
    pub gamma: f64,
    /// `2γ - 1`.
    pub target: f64,
    pub fitted: f64,
    pub fit: LinearFit,
    pub fit_window: (f64, f64),
    pub increments: usize,
    pub censored: usize,
    /// Kaplan-Meier tail `P(Y > t)` on the fit grid.
    pub tail: Vec<(f64, f64)>,
    pub laplace: LaplaceFit,
}

fn survival_at(km: &[SurvivalPoint], t: f64) -> f64 {
    let k = km.partition_point(|p| p.t <= t);
    if k == 0 {
        1.0
    } else {
        km[k - 1].survival
    }
}

fn laplace_fit(km: &[SurvivalPoint], gamma_star: f64, horizon: f64) -> LaplaceFit {
    let scale = (LAPLACE_SCALE_FRACTION * horizon).max(1.0);
    let n = scale.powf(gamma_star);
    // Kaplan-Meier jumps; mass beyond the last event sits at infinity.
    let mut prev = 1.0;
    let jumps: Vec<(f64, f64)> = km
        .iter()
        .map(|p| {
            let mass = prev - p.survival;
            prev = p.survival;
            (p.t, mass)
        })
        .collect();
    let transform: Vec<(f64, f64)> = LAPLACE_LAMBDAS
        .iter()
        .map(|&lambda| {
            let s = lambda / scale;
            let phi: f64 = jumps.iter().map(|(t, m)| m * (-s * t).exp()).sum();
            (lambda, (phi / n) / (1.0 - (1.0 - 1.0 / n) * phi))
        })
        .collect();
    // `log(1/L - 1) = log D + γ* log λ`: D from the mean intercept, the
    // free slope reported as the effective exponent.
    let logs: Vec<(f64, f64)> = transform.iter().map(|(l, v)| (l.ln(), (1.0 / v - 1.0).ln())).collect();
    let d = (logs.iter().map(|(x, y)| y - gamma_star * x).sum::<f64>() / logs.len() as f64).exp();
    let effective_exponent = linear_fit(&logs.iter().map(|p| p.0).collect::<Vec<_>>(), &logs.iter().map(|p| p.1).collect::<Vec<_>>()).slope;
    let points: Vec<LaplacePoint> = transform
        .iter()
        .map(|&(lambda, empirical)| LaplacePoint { lambda, empirical, model: 1.0 / (1.0 + d * lambda.powf(gamma_star)) })
        .collect();
    let max_deviation = points.iter().map(|p| (p.empirical - p.model).abs()).fold(0.0, f64::max);
    LaplaceFit { n, scale, d, effective_exponent, max_deviation, points }
}

/// Fits the tail exponent of the intersection of two independent renewal
/// processes with increment tail index `γ`.
pub fn renewal_intersection_exponent(
    gamma: f64,
    horizon: u64,
    replicas: usize,
    seed: u64,
    workers: &Workers,
) -> Result<RenewalReport> {
    if !(gamma > 0.5 && gamma < 1.0) {
        return Err(Error::invalid("gamma", format!("needs 1/2 < gamma < 1, got {gamma}")));
    }
    let h = horizon as f64;
    let window = (FIT_START_FRACTION * h, FIT_END_FRACTION * h);
    if window.0 < 10.0 {
        return Err(Error::invalid("horizon", "tail-fit window would start below 10"));
    }
    if replicas == 0 {
        return Err(Error::invalid("replicas", "must be positive"));
    }
    let runs = workers.map(replicas, |r| {
        let mut rng = stream(seed, r as u64, "renewal");
        intersection_increments(gamma, horizon, &mut rng)
    });
    let mut obs: Vec<(f64, bool)> = Vec::new();
    for (gaps, rest) in &runs {
        obs.extend(gaps.iter().map(|&g| (g as f64, false)));
        if *rest > 0 {
            obs.push((*rest as f64, true));
        }
    }
    let increments = obs.iter().filter(|o| !o.1).count();
    let censored = obs.len() - increments;
    let km = kaplan_meier(&obs);
    let decades = (window.1 / window.0).log10();
    let points = (decades * FIT_POINTS_PER_DECADE as f64).round() as usize;
    let tail: Vec<(f64, f64)> = (0..=points)
        .map(|k| window.0 * 10f64.powf(k as f64 / FIT_POINTS_PER_DECADE as f64))
        .map(|t| (t, survival_at(&km, t)))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    if tail.len() < 3 {
        return Err(Error::Numerical("too few intersection increments in the fit window".into()));
    }
    let fit = linear_fit(
        &tail.iter().map(|p| p.0.ln()).collect::<Vec<_>>(),
        &tail.iter().map(|p| p.1.ln()).collect::<Vec<_>>(),
    );
    let target = 2.0 * gamma - 1.0;
    Ok(RenewalReport {
        gamma,
        target,
        fitted: -fit.slope,
        fit,
        fit_window: window,
        increments,
        censored,
        tail,
        laplace: laplace_fit(&km, target, h),
    })
}
