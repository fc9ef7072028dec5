//! Least-squares fit of `log v_k = a + b k`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `exp(slope)`: the fitted per-step contraction factor.
    pub factor: f64,
    pub points: usize,
}

/// Fits over the pairs with `v > 0`; needs at least three of them.
pub fn log_linear_fit(ks: &[f64], values: &[f64]) -> Option<LogLinearFit> {
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(k, v)| (*k, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mk = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let skk: f64 = pts.iter().map(|p| (p.0 - mk).powi(2)).sum();
    if skk == 0.0 {
        return None;
    }
    let skv: f64 = pts.iter().map(|p| (p.0 - mk) * (p.1 - mv)).sum();
    let slope = skv / skk;
    let intercept = mv - slope * mk;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mv).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LogLinearFit {
        slope,
        intercept,
        r_squared,
        factor: slope.exp(),
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_geometric_sequence() {
        let ks: Vec<f64> = (0..20).map(f64::from).collect();
        let vs: Vec<f64> = ks.iter().map(|k| 3.0 * 0.8f64.powf(*k)).collect();
        let f = log_linear_fit(&ks, &vs).unwrap();
        assert!((f.factor - 0.8).abs() < 1e-12);
        assert!((f.intercept - 3.0f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn skips_nonpositive_values() {
        let f = log_linear_fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 0.5, 0.0, 0.125]).unwrap();
        assert_eq!(f.points, 3);
        assert!((f.factor - 0.5).abs() < 1e-12);
        assert!(log_linear_fit(&[0.0, 1.0], &[1.0, 0.5]).is_none());
    }
}
