//! Linear-rate constants `c` (contraction `1 - c` of the FBE gap) under
//! strong convexity, and the optimal randomized parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::STEPSIZE_MARGIN;

/// Shrink factor applied to `gamma_i* = N / L_i` when `kappa_i = 1`, which
/// would otherwise sit on the boundary of the admissible interval.
pub const BOUNDARY_SHRINK: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub n_blocks: usize,
    pub lipschitz: Vec<f64>,
    pub strong_convexity: Vec<f64>,
    #[serde(default)]
    pub gammas: Vec<f64>,
    /// Per-block sampling floor probabilities (randomized rule only).
    #[serde(default)]
    pub probabilities: Vec<f64>,
    /// Essential-cyclic period `T`.
    #[serde(default)]
    pub period: Option<usize>,
}

impl RateInputs {
    fn check_constants(&self) -> Result<()> {
        let n = self.n_blocks;
        if n == 0 {
            return Err(Error::Config("n_blocks must be positive".into()));
        }
        if self.lipschitz.len() != n || self.strong_convexity.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.lipschitz.len().min(self.strong_convexity.len()),
            });
        }
        for (i, (&l, &m)) in self.lipschitz.iter().zip(&self.strong_convexity).enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Config(format!("L_{i} = {l} must be positive")));
            }
            if m == 0.0 {
                return Err(Error::Unsupported(format!("rate constants need mu_{i} > 0")));
            }
            if !(m > 0.0) || m > l {
                return Err(Error::Contract(format!("mu_{i} = {m} must lie in (0, L_{i} = {l}]")));
            }
        }
        Ok(())
    }

    fn check_gammas(&self) -> Result<()> {
        self.check_constants()?;
        let n = self.n_blocks as f64;
        if self.gammas.len() != self.n_blocks {
            return Err(Error::DimensionMismatch {
                expected: self.n_blocks,
                actual: self.gammas.len(),
            });
        }
        for (i, (&g, &l)) in self.gammas.iter().zip(&self.lipschitz).enumerate() {
            let bound = n / l;
            if !(g > 0.0) || !(g * l < n * (1.0 - STEPSIZE_MARGIN)) {
                return Err(Error::InvalidStepsize {
                    block: i,
                    gamma: g,
                    bound,
                });
            }
        }
        Ok(())
    }

    /// `xi_i = (N - gamma_i L_i) / N`.
    pub fn xi(&self) -> Vec<f64> {
        let n = self.n_blocks as f64;
        self.gammas
            .iter()
            .zip(&self.lipschitz)
            .map(|(g, l)| (n - g * l) / n)
            .collect()
    }

    /// `kappa_i = L_i / mu_i`.
    pub fn kappa(&self) -> Vec<f64> {
        self.lipschitz
            .iter()
            .zip(&self.strong_convexity)
            .map(|(l, m)| l / m)
            .collect()
    }

    /// `delta = min_i gamma_i mu_i / N`.
    pub fn delta(&self) -> f64 {
        let n = self.n_blocks as f64;
        self.gammas
            .iter()
            .zip(&self.strong_convexity)
            .map(|(g, m)| g * m / n)
            .fold(f64::INFINITY, f64::min)
    }

    /// `Delta = max_i gamma_i L_i / N`.
    pub fn big_delta(&self) -> f64 {
        let n = self.n_blocks as f64;
        self.gammas
            .iter()
            .zip(&self.lipschitz)
            .map(|(g, l)| g * l / n)
            .fold(0.0, f64::max)
    }
}

/// `c = min_i (xi_i p_i / gamma_i) / max_i ((N - gamma_i mu_i) / (gamma_i^2 mu_i))`.
pub fn rate_randomized(input: &RateInputs) -> Result<f64> {
    input.check_gammas()?;
    if input.probabilities.len() != input.n_blocks {
        return Err(Error::DimensionMismatch {
            expected: input.n_blocks,
            actual: input.probabilities.len(),
        });
    }
    if let Some(i) = input.probabilities.iter().position(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::Contract(format!("p_{i} must lie in (0, 1]")));
    }
    let n = input.n_blocks as f64;
    let xi = input.xi();
    let num = (0..input.n_blocks)
        .map(|i| xi[i] * input.probabilities[i] / input.gammas[i])
        .fold(f64::INFINITY, f64::min);
    let den = (0..input.n_blocks)
        .map(|i| {
            let (g, m) = (input.gammas[i], input.strong_convexity[i]);
            (n - g * m) / (g * g * m)
        })
        .fold(0.0, f64::max);
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalRate {
    pub gammas: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub c: f64,
}

/// `gamma_i = (N / mu_i)(1 - sqrt(1 - 1/kappa_i))`,
/// `p_i ~ (sqrt(kappa_i) + sqrt(kappa_i - 1))^2` and
/// `c = 1 / sum_i (sqrt(kappa_i) + sqrt(kappa_i - 1))^2`.
pub fn rate_randomized_optimal(n_blocks: usize, lipschitz: &[f64], strong_convexity: &[f64]) -> Result<OptimalRate> {
    let input = RateInputs {
        n_blocks,
        lipschitz: lipschitz.to_vec(),
        strong_convexity: strong_convexity.to_vec(),
        gammas: Vec::new(),
        probabilities: Vec::new(),
        period: None,
    };
    input.check_constants()?;
    let n = n_blocks as f64;
    let mut gammas = Vec::with_capacity(n_blocks);
    let mut weights = Vec::with_capacity(n_blocks);
    for (&l, &m) in lipschitz.iter().zip(strong_convexity) {
        let kappa = l / m;
        if kappa < 1.0 {
            return Err(Error::Contract(format!("condition number {kappa} below 1")));
        }
        let mut g = n / m * (1.0 - (1.0 - 1.0 / kappa).sqrt());
        if !(g * l < n * (1.0 - STEPSIZE_MARGIN)) {
            g = n / l * BOUNDARY_SHRINK;
        }
        gammas.push(g);
        let s = kappa.sqrt() + (kappa - 1.0).sqrt();
        weights.push(s * s);
    }
    let total: f64 = weights.iter().sum();
    Ok(OptimalRate {
        gammas,
        probabilities: weights.iter().map(|w| w / total).collect(),
        c: 1.0 / total,
    })
}

/// `c = delta (1 - Delta) / (N (1 + T (1 - delta))^2 (1 - delta))`.
pub fn rate_essentially_cyclic(input: &RateInputs) -> Result<f64> {
    input.check_gammas()?;
    let t = match input.period {
        Some(t) if t >= 1 => t as f64,
        _ => return Err(Error::Config("essentially cyclic rate needs a period T >= 1".into())),
    };
    let (d, big) = (input.delta(), input.big_delta());
    let n = input.n_blocks as f64;
    let s = 1.0 + t * (1.0 - d);
    Ok(d * (1.0 - big) / (n * s * s * (1.0 - d)))
}

/// `c = delta (1 - Delta) / (N (2 - delta)^2 (1 - delta))`, valid for the
/// cyclic and shuffled cyclic rules (per epoch of `N` iterations).
pub fn rate_shuffled_cyclic(input: &RateInputs) -> Result<f64> {
    input.check_gammas()?;
    let (d, big) = (input.delta(), input.big_delta());
    let n = input.n_blocks as f64;
    Ok(d * (1.0 - big) / (n * (2.0 - d) * (2.0 - d) * (1.0 - d)))
}
