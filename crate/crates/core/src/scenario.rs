//! Scenario configuration: building, equipment, network, schedules and
//! simulation settings. Loaded from TOML; every field has a default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comfort::ComfortParams;
use crate::equipment::{FcuParams, PumpParams};
use crate::error::{Error, Result};
use crate::hydraulics::NetworkConfig;
use crate::thermal::{check_symmetric_adjacency, Adjacency, AirProps, Wall, ZoneParams};

/// Number of conditioned zones (one FCU each).
pub const ZONES: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationParams {
    pub control_interval_min: u32,
    pub substep_s: f64,
    pub episode_steps: usize,
    /// Wall-clock hour at which an episode starts.
    pub start_hour: u32,
    pub hydraulic_tol_kpa: f64,
    pub lambda_p: f64,
    pub initial_temp_c: f64,
    pub initial_temp_spread_c: f64,
    /// First calendar day used for log timestamps.
    pub start_date: String,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            control_interval_min: 5,
            substep_s: 60.0,
            episode_steps: 120,
            start_hour: 9,
            hydraulic_tol_kpa: 1e-3,
            lambda_p: 3.0,
            initial_temp_c: 27.0,
            initial_temp_spread_c: 1.0,
            start_date: "2021-08-07".into(),
        }
    }
}

impl SimulationParams {
    pub fn horizon_min(&self) -> u32 {
        self.control_interval_min * self.episode_steps as u32
    }

    pub fn dt_hours(&self) -> f64 {
        f64::from(self.control_interval_min) / 60.0
    }
}

/// Person-level occupancy generator. Times are minutes after the episode start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OccupancyParams {
    pub capacity: [u32; ZONES],
    pub attendance_prob: f64,
    pub arrival_window: [f64; 2],
    pub lunch_leave_window: [f64; 2],
    pub lunch_return_window: [f64; 2],
    pub departure_window: [f64; 2],
}

impl Default for OccupancyParams {
    fn default() -> Self {
        Self {
            capacity: [2, 2, 2, 2, 4, 4, 3],
            attendance_prob: 0.9,
            arrival_window: [0.0, 60.0],
            lunch_leave_window: [180.0, 200.0],
            lunch_return_window: [285.0, 300.0],
            departure_window: [540.0, 600.0],
        }
    }
}

/// Outdoor temperature: daily sinusoid peaking at `peak_hour`, shifted by a
/// seeded per-day offset drawn uniformly from `±day_offset_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherParams {
    pub base_c: f64,
    pub amplitude_c: f64,
    pub peak_hour: f64,
    pub day_offset_c: f64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        Self {
            base_c: 28.0,
            amplitude_c: 4.0,
            peak_hour: 15.0,
            day_offset_c: 1.5,
        }
    }
}

/// Occupancy- and temperature-reactive rule used for demonstrations and the
/// rule-based baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorParams {
    /// Zone temperature at which an occupied zone runs at level 1.
    pub base_temp_c: f64,
    /// Temperature rise per extra level, K.
    pub temp_per_level_k: f64,
    /// Demand added per occupant, in levels.
    pub level_per_occupant: f64,
    /// Probability of a ±1 level deviation in demonstrations.
    pub noise_prob: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            base_temp_c: 25.0,
            temp_per_level_k: 1.0,
            level_per_occupant: 0.3,
            noise_prob: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub seed: u64,
    pub simulation: SimulationParams,
    pub air: AirProps,
    pub comfort: ComfortParams,
    pub weather: WeatherParams,
    pub occupancy: OccupancyParams,
    pub behavior: BehaviorParams,
    pub pump: PumpParams,
    pub network: NetworkConfig,
    pub zones: Vec<ZoneParams>,
    pub fcus: Vec<FcuParams>,
}

fn office(zone_id: usize) -> ZoneParams {
    ZoneParams {
        walls: vec![Wall {
            area_m2: 30.0,
            u_value_w_m2k: 2.5,
            solar_w_m2: 6.0,
        }],
        ..ZoneParams::new(zone_id, 90.0)
    }
}

fn hall(zone_id: usize, neighbours: &[usize]) -> ZoneParams {
    ZoneParams {
        walls: vec![Wall {
            area_m2: 60.0,
            u_value_w_m2k: 2.5,
            solar_w_m2: 6.0,
        }],
        adjacency: neighbours
            .iter()
            .map(|&z| Adjacency {
                zone_id: z,
                eta_w_k: 60.0,
            })
            .collect(),
        ..ZoneParams::new(zone_id, 220.0)
    }
}

impl Default for Scenario {
    fn default() -> Self {
        let office_fcu = FcuParams {
            rated_airflow_m3_s: 0.12,
            rated_fan_power_w: 200.0,
            mode_airflow_fractions: [0.0, 0.5, 0.75, 1.0],
            rated_water_flow_m3_s: 6.0e-5,
            coil_effectiveness_by_mode: [0.0, 0.176, 0.232, 0.288],
        };
        let hall_fcu = FcuParams {
            rated_airflow_m3_s: 0.25,
            rated_fan_power_w: 400.0,
            mode_airflow_fractions: [0.0, 0.5, 0.75, 1.0],
            rated_water_flow_m3_s: 1.5e-4,
            coil_effectiveness_by_mode: [0.0, 0.138, 0.176, 0.219],
        };
        Self {
            seed: 0,
            simulation: SimulationParams::default(),
            air: AirProps::default(),
            comfort: ComfortParams::default(),
            weather: WeatherParams::default(),
            occupancy: OccupancyParams::default(),
            behavior: BehaviorParams::default(),
            pump: PumpParams {
                alpha1: -1.0e8,
                alpha2: 0.0,
                alpha3: 120.0,
                rated_freq_hz: 50.0,
                rated_power_w: 1500.0,
                min_freq_hz: 30.0,
                max_freq_hz: 50.0,
                rated_flow_m3_s: 8.0e-4,
            },
            network: NetworkConfig {
                supply_header_resistance: 1.0e7,
                return_header_resistance: 1.0e7,
                bypass_resistance: 4.4e10,
                coil_design_dp_kpa: 40.0,
                reference_pressure_kpa: 150.0,
                supply_temp_c: 7.0,
            },
            zones: vec![
                office(1),
                office(2),
                office(3),
                office(4),
                hall(5, &[6]),
                hall(6, &[5, 7]),
                hall(7, &[6]),
            ],
            fcus: vec![
                office_fcu.clone(),
                office_fcu.clone(),
                office_fcu.clone(),
                office_fcu,
                hall_fcu.clone(),
                hall_fcu.clone(),
                hall_fcu,
            ],
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.zones.len() != ZONES || self.fcus.len() != ZONES {
            return Err(Error::config(format!(
                "scenario needs exactly {ZONES} zones and FCUs, got {} and {}",
                self.zones.len(),
                self.fcus.len()
            )));
        }
        for (i, z) in self.zones.iter().enumerate() {
            if z.zone_id != i + 1 {
                return Err(Error::config(format!(
                    "zone ids must be 1..={ZONES} in order, found {} at position {}",
                    z.zone_id,
                    i + 1
                )));
            }
            z.validate()?;
        }
        check_symmetric_adjacency(&self.zones)?;
        for f in &self.fcus {
            f.validate()?;
        }
        self.pump.validate()?;
        self.comfort.validate()?;
        let sim = &self.simulation;
        if sim.control_interval_min == 0 || sim.episode_steps == 0 || !(sim.substep_s > 0.0) {
            return Err(Error::config("simulation timing must be positive"));
        }
        if f64::from(sim.control_interval_min * 60) % sim.substep_s != 0.0 {
            return Err(Error::config("control interval must be a whole number of sub-steps"));
        }
        if !(sim.lambda_p > 0.0) {
            return Err(Error::config("lambda_p must be positive"));
        }
        if !(sim.hydraulic_tol_kpa > 0.0) {
            return Err(Error::config("hydraulic tolerance must be positive"));
        }
        chrono::NaiveDate::parse_from_str(&sim.start_date, "%Y-%m-%d")
            .map_err(|e| Error::config(format!("start_date: {e}")))?;
        let o = &self.occupancy;
        if !(0.0..=1.0).contains(&o.attendance_prob) {
            return Err(Error::config("attendance probability must lie in [0, 1]"));
        }
        for w in [
            o.arrival_window,
            o.lunch_leave_window,
            o.lunch_return_window,
            o.departure_window,
        ] {
            if w[0] > w[1] {
                return Err(Error::config("occupancy windows must be ordered [start, end]"));
            }
        }
        if !(0.0..=1.0).contains(&self.behavior.noise_prob) || !(self.behavior.temp_per_level_k > 0.0) {
            return Err(Error::config("behavior parameters out of range"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let s = Scenario::default();
        s.validate().unwrap();
        let text = s.to_toml_string();
        let back = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let s = Scenario::from_toml_str("seed = 7\n[simulation]\nlambda_p = 2.0\n").unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.simulation.lambda_p, 2.0);
        assert_eq!(s.simulation.episode_steps, 120);
        assert_eq!(s.zones.len(), ZONES);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Scenario::from_toml_str("[simulation]\nlambda_p = -1.0\n").is_err());
        assert!(Scenario::from_toml_str("[simulation]\nsubstep_s = 70.0\n").is_err());
        let mut s = Scenario::default();
        s.zones[0].beta = 2.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::default();
        s.zones[4].adjacency.clear();
        assert!(s.validate().is_err());
    }
}
