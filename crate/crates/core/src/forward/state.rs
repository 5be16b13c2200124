use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seedbank::SeedBankProfile;

/// Which system of equations drives the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Model {
    /// One seed-bank per colony.
    M1,
    /// Coloured seed-banks.
    M2,
    /// Coloured seed-banks with displaced seeds.
    M3,
}

/// Active frequencies `x_i` and dormant frequencies `y_{i,m}`, stored
/// site-major (`y[i * colours + m]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    colours: usize,
    pub time: f64,
}

impl SystemState {
    pub fn new(x: Vec<f64>, y: Vec<f64>, colours: usize) -> Result<Self> {
        if colours == 0 || y.len() != x.len() * colours {
            return Err(Error::invalid("y", "dormant layer does not match sites x colours"));
        }
        if x.iter().chain(&y).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("x", "frequencies must lie in [0, 1]"));
        }
        Ok(SystemState { x, y, colours, time: 0.0 })
    }

    /// Every component equal to `theta`.
    pub fn constant(sites: usize, colours: usize, theta: f64) -> Result<Self> {
        Self::new(vec![theta; sites], vec![theta; sites * colours], colours)
    }

    /// Independent Bernoulli(`theta`) components.
    pub fn bernoulli<R: Rng + ?Sized>(sites: usize, colours: usize, theta: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid("theta", "must lie in [0, 1]"));
        }
        let mut draw = || f64::from(rng.random::<f64>() < theta);
        let x = (0..sites).map(|_| draw()).collect();
        let y = (0..sites * colours).map(|_| draw()).collect();
        Self::new(x, y, colours)
    }

    pub fn sites(&self) -> usize {
        self.x.len()
    }

    pub fn colours(&self) -> usize {
        self.colours
    }

    pub fn dormant(&self, site: usize) -> &[f64] {
        &self.y[site * self.colours..(site + 1) * self.colours]
    }

    /// `(θ̂, θ̂_x)`: the seed-bank weighted average and the active average.
    pub fn macroscopic(&self, profile: &SeedBankProfile) -> (f64, f64) {
        let n = self.sites() as f64;
        let k = profile.k();
        let rho: f64 = k.iter().sum();
        let mut total = 0.0;
        let mut active = 0.0;
        for i in 0..self.sites() {
            let weighted: f64 = self.dormant(i).iter().zip(k).map(|(y, k)| k * y).sum();
            total += self.x[i] + weighted;
            active += self.x[i];
        }
        (total / (n * (1.0 + rho)), active / n)
    }

    /// True when every component is within `eps` of the same trap.
    pub fn trapped(&self, eps: f64) -> bool {
        let all = |target: f64| self.x.iter().chain(&self.y).all(|v| (v - target).abs() <= eps);
        all(0.0) || all(1.0)
    }
}

/// Site-averaged second-order statistics of a state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthMoments {
    /// Mean of `x_i (1 - x_i)`.
    pub diversity: f64,
    /// Mean of `x_i (1 - x_j)` over ordered pairs `i ≠ j`.
    pub pair_diversity: f64,
    pub active_mean: f64,
    pub active_variance: f64,
    /// Per colour `0..=L`: site mean of `y_{·,m}`.
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Site covariance of `x` with `y_{·,m}`.
    pub covariances: Vec<f64>,
}

impl SystemState {
    pub fn depth_moments(&self, depth: usize) -> Result<DepthMoments> {
        if depth >= self.colours {
            return Err(Error::invalid("L", format!("depth {depth} beyond deepest colour {}", self.colours - 1)));
        }
        let n = self.sites() as f64;
        let sx: f64 = self.x.iter().sum();
        let diversity_sum: f64 = self.x.iter().map(|x| x * (1.0 - x)).sum();
        let pair_diversity = if self.sites() > 1 {
            (sx * (n - sx) - diversity_sum) / (n * (n - 1.0))
        } else {
            0.0
        };
        let active_mean = sx / n;
        let active_variance = self.x.iter().map(|x| (x - active_mean).powi(2)).sum::<f64>() / n;
        let mut means = Vec::with_capacity(depth + 1);
        let mut variances = Vec::with_capacity(depth + 1);
        let mut covariances = Vec::with_capacity(depth + 1);
        for m in 0..=depth {
            let col = (0..self.sites()).map(|i| self.y[i * self.colours + m]);
            let mean = col.clone().sum::<f64>() / n;
            let var = col.clone().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
            let cov = col.zip(&self.x).map(|(y, x)| (y - mean) * (x - active_mean)).sum::<f64>() / n;
            means.push(mean);
            variances.push(var);
            covariances.push(cov);
        }
        Ok(DepthMoments {
            diversity: diversity_sum / n,
            pair_diversity,
            active_mean,
            active_variance,
            means,
            variances,
            covariances,
        })
    }
}
