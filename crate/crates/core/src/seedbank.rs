//! Seed-bank colour profiles `(K_m, e_m)`, their summaries, and the
//! dormancy samplers used by the dual.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::compensated_sum;

/// How the coefficients were produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provenance", rename_all = "snake_case")]
pub enum Provenance {
    /// `K_m = A (m+1)^{-α}`, `e_m = B (m+1)^{-β}`.
    Polynomial {
        #[serde(rename = "A")]
        a: f64,
        alpha: f64,
        #[serde(rename = "B")]
        b: f64,
        beta: f64,
    },
    /// `K_m = K^m`, `e_m = e^m / N^m`.
    HierarchicalBank {
        #[serde(rename = "K")]
        k: f64,
        e: f64,
        #[serde(rename = "N")]
        order: f64,
    },
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBankProfile {
    k: Vec<f64>,
    e: Vec<f64>,
    provenance: Provenance,
}

/// The tail prefactor `C` in `P(τ > t) ≈ C t^{-γ}`. It is the infinite-bank
/// asymptotic value and ignores the index shift of the polynomial profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailConstant {
    pub value: f64,
    pub tag: &'static str,
}

pub const TAIL_CONSTANT_TAG: &str = "asymptotic, shift-uncorrected";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedBankSummary {
    /// `Σ K_m e_m`, the rate of falling asleep.
    pub chi: f64,
    /// `Σ K_m`.
    pub rho: f64,
    pub gamma: Option<f64>,
    pub tail_constant: Option<TailConstant>,
    /// `1 / (1 + ρ)`.
    pub active_fraction: f64,
    /// `(1 + ρ)^2`.
    pub kappa: f64,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

impl SeedBankProfile {
    pub fn polynomial(a: f64, alpha: f64, b: f64, beta: f64, deepest: usize) -> Result<Self> {
        positive("A", a)?;
        positive("B", b)?;
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::invalid("alpha", "exponents must be finite"));
        }
        let k = (0..=deepest).map(|m| a * ((m + 1) as f64).powf(-alpha)).collect();
        let e = (0..=deepest).map(|m| b * ((m + 1) as f64).powf(-beta)).collect();
        Self::checked(k, e, Provenance::Polynomial { a, alpha, b, beta })
    }

    pub fn hierarchical(k: f64, e: f64, order: f64, deepest: usize) -> Result<Self> {
        positive("K", k)?;
        positive("e", e)?;
        positive("N", order)?;
        if k * e >= order {
            return Err(Error::invalid("K", format!("need K e < N, got K e = {}", k * e)));
        }
        let ks = (0..=deepest).map(|m| k.powi(m as i32)).collect();
        let es = (0..=deepest).map(|m| (e / order).powi(m as i32)).collect();
        Self::checked(ks, es, Provenance::HierarchicalBank { k, e, order })
    }

    pub fn explicit(k: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        Self::checked(k, e, Provenance::Explicit)
    }

    /// Single-colour bank of Model 1.
    pub fn single(k: f64, e: f64) -> Result<Self> {
        Self::explicit(vec![k], vec![e])
    }

    fn checked(k: Vec<f64>, e: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if k.is_empty() || k.len() != e.len() {
            return Err(Error::invalid("K", "K and e need the same non-zero length"));
        }
        for &v in &k {
            positive("K", v)?;
        }
        for &v in &e {
            positive("e", v)?;
        }
        Ok(SeedBankProfile { k, e, provenance })
    }

    /// Deepest colour `M`.
    pub fn deepest(&self) -> usize {
        self.k.len() - 1
    }

    pub fn colours(&self) -> usize {
        self.k.len()
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn e(&self) -> &[f64] {
        &self.e
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn chi(&self) -> f64 {
        compensated_sum(self.k.iter().zip(&self.e).map(|(k, e)| k * e))
    }

    pub fn rho(&self) -> f64 {
        compensated_sum(self.k.iter().copied())
    }

    pub fn kappa(&self) -> f64 {
        (1.0 + self.rho()).powi(2)
    }

    pub fn max_rate(&self) -> f64 {
        self.e.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_rate(&self) -> f64 {
        self.e.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(α + β - 1)/β` for polynomial profiles with `α ≤ 1 < α + β`.
    pub fn gamma(&self) -> Option<f64> {
        match self.provenance {
            Provenance::Polynomial { alpha, beta, .. } if alpha <= 1.0 && alpha + beta > 1.0 => {
                Some((alpha + beta - 1.0) / beta)
            }
            _ => None,
        }
    }

    /// The `β` exponent of the wake-up rates, when the profile has one.
    pub fn wake_exponent(&self) -> Option<f64> {
        match self.provenance {
            Provenance::Polynomial { beta, .. } => Some(beta),
            _ => None,
        }
    }

    pub fn summary(&self) -> SeedBankSummary {
        let chi = self.chi();
        let rho = self.rho();
        let gamma = self.gamma();
        let tail_constant = match (self.provenance, gamma) {
            (Provenance::Polynomial { a, b, beta, .. }, Some(g)) => Some(TailConstant {
                value: a / (beta * chi) * b.powf(1.0 - g) * statrs::function::gamma::gamma(g),
                tag: TAIL_CONSTANT_TAG,
            }),
            _ => None,
        };
        SeedBankSummary {
            chi,
            rho,
            gamma,
            tail_constant,
            active_fraction: 1.0 / (1.0 + rho),
            kappa: (1.0 + rho).powi(2),
        }
    }

    /// Probabilities `K_m e_m / χ` of entering colour `m`.
    pub fn colour_probabilities(&self) -> Vec<f64> {
        let chi = self.chi();
        self.k.iter().zip(&self.e).map(|(k, e)| k * e / chi).collect()
    }

    /// Exact wake-up survival `P(τ > t) = Σ_m (K_m e_m / χ) e^{-e_m t}`.
    pub fn wake_survival(&self, t: f64) -> f64 {
        let chi = self.chi();
        compensated_sum(self.k.iter().zip(&self.e).map(|(k, e)| k * e / chi * (-e * t).exp()))
    }
}

/// Position of a single lineage in the seed-bank coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Active,
    Dormant(usize),
}

/// Samples the alternation between activity and dormancy.
#[derive(Debug, Clone)]
pub struct ExchangeSampler {
    cumulative: Vec<f64>,
    sleep: Exp<f64>,
    wake: Vec<Exp<f64>>,
}

impl ExchangeSampler {
    pub fn new(profile: &SeedBankProfile) -> Self {
        let probs = profile.colour_probabilities();
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in probs {
            acc += p;
            cumulative.push(acc);
        }
        // Normalise exactly so the last colour absorbs rounding.
        let total = acc;
        for c in &mut cumulative {
            *c /= total;
        }
        *cumulative.last_mut().expect("at least one colour") = 1.0;
        ExchangeSampler {
            cumulative,
            sleep: Exp::new(profile.chi()).expect("positive chi"),
            wake: profile.e().iter().map(|&e| Exp::new(e).expect("positive rate")).collect(),
        }
    }

    /// Colour chosen on falling asleep.
    pub fn sample_colour<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative.partition_point(|c| *c <= u).min(self.cumulative.len() - 1)
    }

    pub fn sample_wake_time<R: Rng + ?Sized>(&self, colour: usize, rng: &mut R) -> f64 {
        self.wake[colour].sample(rng)
    }

    /// Holding time in `mode` and the next mode.
    pub fn sample<R: Rng + ?Sized>(&self, mode: Mode, rng: &mut R) -> (f64, Mode) {
        match mode {
            Mode::Active => {
                let dt = self.sleep.sample(rng);
                (dt, Mode::Dormant(self.sample_colour(rng)))
            }
            Mode::Dormant(m) => (self.wake[m].sample(rng), Mode::Active),
        }
    }
}
