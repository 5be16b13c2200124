use serde::{Deserialize, Serialize};

use crate::forward::Model;
use crate::geometry::Geography;
use crate::seedbank::SeedBankProfile;

/// Ratio below which one time scale counts as negligible against another.
pub const SCALE_SEPARATION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthRegime {
    /// Slow growth: `β*_n ≪ β**_n`.
    I,
    /// Fast growth: `β**_n ≪ β*_n`.
    II,
    Critical,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeScaleReport {
    pub sites: usize,
    pub model: Model,
    /// `κ_{M_n} = (1 + Σ K_m)^2`.
    pub kappa: f64,
    /// `β_n = κ_{M_n} |G_n|`.
    pub beta: f64,
    pub gamma: Option<f64>,
    /// `β*_n = M_n^β`.
    pub beta_star: Option<f64>,
    /// `β**_n`; infinite for `γ < 1/2`.
    pub beta_double_star: Option<f64>,
    /// `ln(β*_n / β**_n)`.
    pub log_ratio: Option<f64>,
    pub regime: GrowthRegime,
}

pub fn time_scales(geography: &Geography, profile: &SeedBankProfile, model: Model) -> TimeScaleReport {
    let sites = geography.size();
    let kappa = profile.kappa();
    let gamma = profile.gamma().filter(|g| *g > 0.0 && *g <= 1.0);
    let beta_star = match (gamma, profile.wake_exponent()) {
        (Some(_), Some(b)) => Some((profile.deepest() as f64).powf(b)),
        _ => None,
    };
    let g_size = sites as f64;
    // Logarithm of β**, which overflows at γ = 1/2.
    let log_double_star = gamma.map(|g| {
        if g > 0.5 {
            g_size.ln() / (2.0 * g - 1.0)
        } else if g == 0.5 {
            g_size
        } else {
            f64::INFINITY
        }
    });
    let log_ratio = match (beta_star, log_double_star) {
        (Some(bs), Some(lds)) => Some(bs.ln() - lds),
        _ => None,
    };
    let regime = match (gamma, log_ratio) {
        (None, _) | (_, None) => GrowthRegime::NotApplicable,
        (Some(g), _) if g < 0.5 => GrowthRegime::I,
        (_, Some(lr)) if lr < SCALE_SEPARATION.ln() => GrowthRegime::I,
        (_, Some(lr)) if lr > -SCALE_SEPARATION.ln() => GrowthRegime::II,
        _ => GrowthRegime::Critical,
    };
    TimeScaleReport {
        sites,
        model,
        kappa,
        beta: kappa * g_size,
        gamma,
        beta_star,
        beta_double_star: log_double_star.map(f64::exp),
        log_ratio,
        regime,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_for_single_bank() {
        let geo = Geography::torus(2, 5).unwrap();
        let p = SeedBankProfile::single(1.0, 1.0).unwrap();
        let r = time_scales(&geo, &p, Model::M1);
        assert_eq!(r.beta, 400.0);
        assert_eq!(r.regime, GrowthRegime::NotApplicable);
        assert!(r.beta_star.is_none());
    }

    #[test]
    fn double_star_at_three_quarters() {
        // γ = (α + β - 1)/β = 0.75 with α = 0.5, β = 2; |G| = 100^2.
        let geo = Geography::torus(2, 50).unwrap();
        let p = SeedBankProfile::polynomial(1.0, 0.5, 1.0, 2.0, 10).unwrap();
        let r = time_scales(&geo, &p, Model::M2);
        assert!((r.gamma.unwrap() - 0.75).abs() < 1e-15);
        assert!((r.beta_double_star.unwrap() / 1e8 - 1.0).abs() < 1e-9);
        assert!((r.beta_star.unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(r.regime, GrowthRegime::I);
    }

    #[test]
    fn small_gamma_forces_regime_one() {
        // α = 0.2, β = 2 gives γ = 0.6; α = 0, β = 1.25 gives γ = 0.2.
        let geo = Geography::torus(1, 2).unwrap();
        let p = SeedBankProfile::polynomial(1.0, 0.0, 1.0, 1.25, 4096).unwrap();
        let r = time_scales(&geo, &p, Model::M2);
        assert!((r.gamma.unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(r.beta_double_star, Some(f64::INFINITY));
        assert_eq!(r.regime, GrowthRegime::I);
    }

    #[test]
    fn deep_bank_on_small_torus_is_regime_two() {
        let geo = Geography::torus(1, 4).unwrap();
        let p = SeedBankProfile::polynomial(1.0, 0.5, 1.0, 2.0, 32).unwrap();
        let r = time_scales(&geo, &p, Model::M2);
        assert!((r.beta_star.unwrap() - 1024.0).abs() < 1e-9);
        assert!((r.beta_double_star.unwrap() - 64.0).abs() < 1e-9);
        assert_eq!(r.regime, GrowthRegime::II);
        let p = SeedBankProfile::polynomial(1.0, 0.5, 1.0, 2.0, 8).unwrap();
        assert_eq!(time_scales(&geo, &p, Model::M2).regime, GrowthRegime::Critical);
    }

    #[test]
    fn critical_gamma_compares_logarithms() {
        // γ = 1/2 with α = 0.5, β = 1.
        let geo = Geography::torus(1, 2).unwrap();
        let p = SeedBankProfile::polynomial(1.0, 0.5, 1.0, 1.0, 4).unwrap();
        let r = time_scales(&geo, &p, Model::M2);
        assert!((r.log_ratio.unwrap() - (4f64.ln() - 4.0)).abs() < 1e-12);
        assert_eq!(r.regime, GrowthRegime::I);
    }
}
