//! Fanger PMV/PPD, occupancy-weighted aggregation, energy and reward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_TCL_ITERATIONS: usize = 200;
/// Convergence threshold on the clothing surface temperature, K.
const TCL_TOLERANCE_K: f64 = 1e-5;
const PMV_CLAMP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComfortParams {
    pub air_velocity_m_s: f64,
    pub relative_humidity_pct: f64,
    pub clothing_clo: f64,
    pub metabolic_met: f64,
    /// Mean radiant temperature taken equal to air temperature.
    pub mean_radiant_equals_air: bool,
}

impl Default for ComfortParams {
    fn default() -> Self {
        Self {
            air_velocity_m_s: 0.15,
            relative_humidity_pct: 40.0,
            clothing_clo: 0.63,
            metabolic_met: 1.1,
            mean_radiant_equals_air: true,
        }
    }
}

impl ComfortParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.air_velocity_m_s,
            self.relative_humidity_pct,
            self.clothing_clo,
            self.metabolic_met,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !self.mean_radiant_equals_air {
            return Err(Error::config(
                "comfort parameters must be positive with mean radiant temperature equal to air",
            ));
        }
        Ok(())
    }
}

/// Predicted Mean Vote for air temperature `t_air_c`, clamped to [-4, 4].
pub fn pmv(t_air_c: f64, params: &ComfortParams) -> Result<f64> {
    if !(10.0..=40.0).contains(&t_air_c) {
        return Err(Error::invalid(format!("air temperature {t_air_c} outside [10, 40] °C")));
    }
    let ta = t_air_c;
    let tr = t_air_c;
    // water vapour partial pressure, Pa
    let pa = params.relative_humidity_pct * 10.0 * (16.6536 - 4030.183 / (ta + 235.0)).exp();
    let icl = 0.155 * params.clothing_clo;
    let m = params.metabolic_met * 58.15;
    let mw = m; // no external work
    let fcl = if icl <= 0.078 {
        1.0 + 1.29 * icl
    } else {
        1.05 + 0.645 * icl
    };
    let hcf = 12.1 * params.air_velocity_m_s.sqrt();
    let taa = ta + 273.0;
    let tra = tr + 273.0;

    // clothing surface temperature by fixed-point iteration (in units of 100 K)
    let tcla = taa + (35.5 - ta) / (3.5 * icl + 0.1);
    let p1 = icl * fcl;
    let p2 = p1 * 3.96;
    let p3 = p1 * 100.0;
    let p4 = p1 * taa;
    let p5 = 308.7 - 0.028 * mw + p2 * (tra / 100.0).powi(4);
    let mut xn = tcla / 100.0;
    let mut xf = tcla / 50.0;
    let mut hc = hcf;
    let mut converged = false;
    for _ in 0..MAX_TCL_ITERATIONS {
        xf = (xf + xn) / 2.0;
        let hcn = 2.38 * (100.0 * xf - taa).abs().powf(0.25);
        hc = hcf.max(hcn);
        xn = (p5 + p4 * hc - p2 * xf.powi(4)) / (100.0 + p3 * hc);
        if 100.0 * (xn - xf).abs() <= TCL_TOLERANCE_K {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "clothing temperature iteration did not converge at {t_air_c} °C"
        )));
    }
    let tcl = 100.0 * xn - 273.0;

    let hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa); // skin diffusion
    let hl2 = if mw > 58.15 { 0.42 * (mw - 58.15) } else { 0.0 }; // sweating
    let hl3 = 1.7e-5 * m * (5867.0 - pa); // latent respiration
    let hl4 = 0.0014 * m * (34.0 - ta); // dry respiration
    let hl5 = 3.96 * fcl * (xn.powi(4) - (tra / 100.0).powi(4)); // radiation
    let hl6 = fcl * hc * (tcl - ta); // convection
    let ts = 0.303 * (-0.036 * m).exp() + 0.028;
    let value = ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6);
    Ok(value.clamp(-PMV_CLAMP, PMV_CLAMP))
}

/// Predicted Percentage of Dissatisfied, %.
pub fn ppd(pmv_value: f64) -> f64 {
    let p2 = pmv_value * pmv_value;
    100.0 - 95.0 * (-0.03353 * p2 * p2 - 0.2179 * p2).exp()
}

/// Occupancy-weighted mean PPD; zero when nobody is present.
pub fn mean_ppd(zone_ppds: &[f64], zone_occupancy: &[u32]) -> Result<f64> {
    weighted_mean(zone_ppds, zone_occupancy)
}

/// Occupancy-weighted mean of a per-zone quantity (zero for an empty building).
pub fn weighted_mean(values: &[f64], occupancy: &[u32]) -> Result<f64> {
    if values.len() != occupancy.len() {
        return Err(Error::invalid(format!(
            "{} zone values but {} occupancy entries",
            values.len(),
            occupancy.len()
        )));
    }
    let total: u32 = occupancy.iter().sum();
    if total == 0 {
        return Ok(0.0);
    }
    let weighted: f64 = values
        .iter()
        .zip(occupancy)
        .map(|(v, &n)| f64::from(n) * v)
        .sum();
    Ok(weighted / f64::from(total))
}

/// Reward split into its comfort and energy parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub comfort: f64,
    pub energy: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.comfort + self.energy
    }
}

pub fn reward_terms(ppd_mean: f64, power_kw: f64, occupants_total: u32, lambda_p: f64) -> RewardTerms {
    RewardTerms {
        comfort: if occupants_total > 0 { -ppd_mean } else { 0.0 },
        energy: -lambda_p * power_kw,
    }
}

pub fn step_reward(ppd_mean: f64, power_kw: f64, occupants_total: u32, lambda_p: f64) -> f64 {
    reward_terms(ppd_mean, power_kw, occupants_total, lambda_p).total()
}

/// Cumulative energy of a power series sampled every `dt_h` hours, kWh.
pub fn episode_energy(power_series_kw: &[f64], dt_h: f64) -> f64 {
    power_series_kw.iter().map(|p| p * dt_h).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub ppd_mean_pct: f64,
    pub pmv_abs_mean: f64,
    pub power_kw: f64,
    pub occupants_total: u32,
    pub reward: f64,
}
