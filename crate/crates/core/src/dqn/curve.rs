//! Learning-curve summaries across seeds.

use serde::Serialize;

use super::MeanStd;
use crate::error::{Error, Result};

/// Mean of the last `fraction` of the curve (at least one point).
pub fn final_mean(rewards: &[f64], fraction: f64) -> f64 {
    if rewards.is_empty() {
        return 0.0;
    }
    let n = ((rewards.len() as f64 * fraction).ceil() as usize).clamp(1, rewards.len());
    rewards[rewards.len() - n..].iter().sum::<f64>() / n as f64
}

/// Trapezoidal area under the curve with unit episode spacing.
pub fn trapezoid_auc(rewards: &[f64]) -> f64 {
    rewards.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum()
}

/// Per-episode mean and sample standard deviation across seeds.
pub fn mean_std_curve(curves: &[Vec<f64>]) -> Result<Vec<MeanStd>> {
    let len = check_lengths(curves)?;
    Ok((0..len)
        .map(|e| MeanStd::of(&curves.iter().map(|c| c[e]).collect::<Vec<_>>()))
        .collect())
}

fn check_lengths(curves: &[Vec<f64>]) -> Result<usize> {
    let len = curves.first().map(Vec::len).ok_or_else(|| Error::invalid("no learning curves"))?;
    if len == 0 || curves.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("learning curves must be non-empty and of equal length"));
    }
    Ok(len)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSummary {
    pub fraction: f64,
    /// Final-window mean of each seed.
    pub final_means: Vec<f64>,
    pub final_mean: f64,
    /// Cross-seed sample standard deviation of the final-window means.
    pub terminal_std: f64,
    pub auc_per_seed: Vec<f64>,
    pub auc: f64,
}

pub fn summarize_curves(curves: &[Vec<f64>], fraction: f64) -> Result<CurveSummary> {
    check_lengths(curves)?;
    let final_means: Vec<f64> = curves.iter().map(|c| final_mean(c, fraction)).collect();
    let auc_per_seed: Vec<f64> = curves.iter().map(|c| trapezoid_auc(c)).collect();
    let f = MeanStd::of(&final_means);
    Ok(CurveSummary {
        fraction,
        final_mean: f.mean,
        terminal_std: f.std,
        auc: MeanStd::of(&auc_per_seed).mean,
        final_means,
        auc_per_seed,
    })
}

/// FNV-1a over the bit patterns of a curve.
pub fn curve_fingerprint(rewards: &[f64]) -> u64 {
    rewards
        .iter()
        .flat_map(|r| r.to_bits().to_le_bytes())
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_window() {
        let r: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(final_mean(&r, 0.05), (96.0 + 97.0 + 98.0 + 99.0 + 100.0) / 5.0);
        assert_eq!(final_mean(&r[..3], 0.05), 3.0);
        assert_eq!(final_mean(&[], 0.05), 0.0);
    }

    #[test]
    fn auc_of_line() {
        let r: Vec<f64> = (0..11).map(f64::from).collect();
        assert_eq!(trapezoid_auc(&r), 50.0);
        assert_eq!(trapezoid_auc(&[4.0]), 0.0);
    }

    #[test]
    fn summary_across_seeds() {
        let curves = vec![vec![-10.0, -5.0, -2.0], vec![-12.0, -6.0, -4.0]];
        let s = summarize_curves(&curves, 0.05).unwrap();
        assert_eq!(s.final_means, vec![-2.0, -4.0]);
        assert_eq!(s.final_mean, -3.0);
        assert!((s.terminal_std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.auc_per_seed, vec![-11.0, -14.0]);
        let ms = mean_std_curve(&curves).unwrap();
        assert_eq!(ms[0].mean, -11.0);
        assert!(summarize_curves(&[vec![1.0], vec![]], 0.05).is_err());
    }

    #[test]
    fn fingerprint_sensitive_to_bits() {
        let a = curve_fingerprint(&[1.0, 2.0]);
        assert_eq!(a, curve_fingerprint(&[1.0, 2.0]));
        assert_ne!(a, curve_fingerprint(&[1.0, 2.0000000000000004]));
    }
}
