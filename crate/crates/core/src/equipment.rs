//! Fan-coil and circulating-pump performance laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of FCU fan-speed levels (off plus three speeds).
pub const LEVELS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcuParams {
    pub rated_airflow_m3_s: f64,
    pub rated_fan_power_w: f64,
    pub mode_airflow_fractions: [f64; LEVELS],
    pub rated_water_flow_m3_s: f64,
    pub coil_effectiveness_by_mode: [f64; LEVELS],
}

impl Default for FcuParams {
    fn default() -> Self {
        Self {
            rated_airflow_m3_s: 0.2,
            rated_fan_power_w: 100.0,
            mode_airflow_fractions: [0.0, 0.5, 0.75, 1.0],
            rated_water_flow_m3_s: 1.0e-4,
            coil_effectiveness_by_mode: [0.0, 0.15, 0.2, 0.25],
        }
    }
}

fn check_mode(mode: u8) -> Result<usize> {
    if (mode as usize) < LEVELS {
        Ok(mode as usize)
    } else {
        Err(Error::invalid(format!("fan mode {mode} outside 0..=3")))
    }
}

impl FcuParams {
    pub fn validate(&self) -> Result<()> {
        let f = &self.mode_airflow_fractions;
        if self.rated_airflow_m3_s <= 0.0 || self.rated_fan_power_w <= 0.0 || self.rated_water_flow_m3_s <= 0.0 {
            return Err(Error::config("FCU rated values must be positive"));
        }
        if f[0] != 0.0 || f[LEVELS - 1] != 1.0 || f.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config(
                "FCU airflow fractions must start at 0, end at 1 and be non-decreasing",
            ));
        }
        if self.coil_effectiveness_by_mode.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::config("coil effectiveness must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Supply airflow at a fan mode, m³/s.
    pub fn airflow(&self, mode: u8) -> Result<f64> {
        let m = check_mode(mode)?;
        Ok(self.mode_airflow_fractions[m] * self.rated_airflow_m3_s)
    }

    /// Fan electrical power from the similarity law with exponent 1.5, W.
    pub fn fan_power(&self, mode: u8) -> Result<f64> {
        let ratio = self.airflow(mode)? / self.rated_airflow_m3_s;
        Ok(ratio.powf(1.5) * self.rated_fan_power_w)
    }

    pub fn effectiveness(&self, mode: u8) -> Result<f64> {
        Ok(self.coil_effectiveness_by_mode[check_mode(mode)?])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpParams {
    /// Quadratic head-curve coefficients at rated speed (kPa, flow in m³/s).
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub rated_freq_hz: f64,
    pub rated_power_w: f64,
    pub min_freq_hz: f64,
    pub max_freq_hz: f64,
    /// Design flow at rated speed; seeds the hydraulic solver.
    pub rated_flow_m3_s: f64,
}

impl Default for PumpParams {
    fn default() -> Self {
        Self {
            alpha1: -2.0e7,
            alpha2: 0.0,
            alpha3: 120.0,
            rated_freq_hz: 50.0,
            rated_power_w: 4000.0,
            min_freq_hz: 20.0,
            max_freq_hz: 50.0,
            rated_flow_m3_s: 1.5e-3,
        }
    }
}

impl PumpParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha1 >= 0.0 || self.alpha3 <= 0.0 {
            return Err(Error::config("pump curve needs alpha1 < 0 and alpha3 > 0"));
        }
        if !(0.0 <= self.min_freq_hz
            && self.min_freq_hz <= self.max_freq_hz
            && self.max_freq_hz <= self.rated_freq_hz
            && self.rated_freq_hz > 0.0)
        {
            return Err(Error::config("pump frequencies must satisfy 0 <= min <= max <= rated"));
        }
        if self.rated_power_w <= 0.0 || self.rated_flow_m3_s <= 0.0 {
            return Err(Error::config("pump rated power and flow must be positive"));
        }
        Ok(())
    }

    /// Zero is always admissible (pump stopped); otherwise the frequency must
    /// lie in `[min, max]`.
    pub fn check_frequency(&self, freq_hz: f64) -> Result<f64> {
        if freq_hz == 0.0 || (self.min_freq_hz..=self.max_freq_hz).contains(&freq_hz) {
            Ok(freq_hz / self.rated_freq_hz)
        } else {
            Err(Error::invalid(format!(
                "pump frequency {freq_hz} Hz outside [{}, {}]",
                self.min_freq_hz, self.max_freq_hz
            )))
        }
    }

    /// Head at rated speed, kPa.
    pub fn head_rated(&self, vdot_m3_s: f64) -> f64 {
        self.alpha1 * vdot_m3_s * vdot_m3_s + self.alpha2 * vdot_m3_s + self.alpha3
    }

    /// d(head_rated)/d(vdot).
    pub fn head_rated_slope(&self, vdot_m3_s: f64) -> f64 {
        2.0 * self.alpha1 * vdot_m3_s + self.alpha2
    }

    /// Head at a given frequency from the affinity law, kPa.
    pub fn head(&self, vdot_m3_s: f64, freq_hz: f64) -> Result<f64> {
        let ratio = self.check_frequency(freq_hz)?;
        Ok(ratio * ratio * self.head_rated(vdot_m3_s))
    }

    /// Electrical power from the cube law, W.
    pub fn power(&self, freq_hz: f64) -> Result<f64> {
        let ratio = self.check_frequency(freq_hz)?;
        Ok(ratio.powi(3) * self.rated_power_w)
    }

    /// Frequency proportional to the number of running FCUs, clamped to
    /// `[min, max]`.
    pub fn scheduled_frequency(&self, active_fcus: usize, total_fcus: usize) -> f64 {
        let share = if total_fcus == 0 {
            0.0
        } else {
            active_fcus as f64 / total_fcus as f64
        };
        (self.rated_freq_hz * share).clamp(self.min_freq_hz, self.max_freq_hz)
    }
}

/// Convenience wrappers mirroring the operation names.
pub fn fcu_airflow(mode: u8, params: &FcuParams) -> Result<f64> {
    params.airflow(mode)
}

pub fn fcu_fan_power(mode: u8, params: &FcuParams) -> Result<f64> {
    params.fan_power(mode)
}

pub fn pump_head_rated(vdot_m3_s: f64, params: &PumpParams) -> f64 {
    params.head_rated(vdot_m3_s)
}

pub fn pump_head(vdot_m3_s: f64, freq_hz: f64, params: &PumpParams) -> Result<f64> {
    params.head(vdot_m3_s, freq_hz)
}

pub fn pump_power(freq_hz: f64, params: &PumpParams) -> Result<f64> {
    params.power(freq_hz)
}
