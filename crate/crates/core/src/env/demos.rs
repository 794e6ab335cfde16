//! Occupancy-reactive rule policy and synthetic demonstration logs.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, BuildingState, Environment, HistoricalLog, JointAction, LogRow};
use crate::error::{Error, Result};
use crate::scenario::{BehaviorParams, Scenario, ZONES};

const NOISE_STREAM: u64 = 0x6e6f_6973_6500;

/// Fan level rises with zone temperature and headcount; vacant zones are off.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorPolicy {
    pub params: BehaviorParams,
}

impl BehaviorPolicy {
    pub fn new(params: BehaviorParams) -> Self {
        Self { params }
    }

    pub fn zone_level(&self, temp_c: f64, occupants: u32) -> u8 {
        if occupants == 0 {
            return 0;
        }
        let p = &self.params;
        let demand = (temp_c - p.base_temp_c) / p.temp_per_level_k + p.level_per_occupant * f64::from(occupants);
        (demand.floor() + 1.0).clamp(0.0, 3.0) as u8
    }

    pub fn levels(&self, state: &BuildingState) -> [u8; ZONES] {
        std::array::from_fn(|j| self.zone_level(state.zone_temps_c[j], state.occupancy[j]))
    }

    pub fn act(&self, state: &BuildingState) -> JointAction {
        JointAction::from_levels(&self.levels(state)).expect("levels are clamped to 0..=3")
    }

    /// Rule action with an independent ±1 deviation per zone.
    pub fn act_noisy<R: Rng + ?Sized>(&self, state: &BuildingState, rng: &mut R) -> JointAction {
        let mut levels = self.levels(state);
        for l in levels.iter_mut() {
            // both draws are made every time to keep the stream aligned
            let deviate = rng.random::<f64>() < self.params.noise_prob;
            let up = rng.random::<bool>();
            if deviate {
                *l = if up { (*l + 1).min(3) } else { l.saturating_sub(1) };
            }
        }
        JointAction::from_levels(&levels).expect("levels are clamped to 0..=3")
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s).round() / s
}

impl LogRow {
    /// Records a state and the action taken in it. Measurements are rounded
    /// to sensor resolution so that the CSV form is exact.
    pub fn from_state(state: &BuildingState, action: JointAction, timestamp: NaiveDateTime) -> Self {
        let r3 = |a: &[f64; ZONES]| a.map(|v| round_to(v, 3));
        let r2 = |a: &[f64; ZONES]| a.map(|v| round_to(v, 2));
        Self {
            timestamp,
            outdoor_temp: round_to(state.outdoor_temp_c, 3),
            zone_temp: r3(&state.zone_temps_c),
            fcu_fan: action.levels(),
            supply_temp: r3(&state.aux.supply_temp_c),
            return_temp: r3(&state.aux.return_temp_c),
            supply_pressure: r2(&state.aux.supply_pressure_kpa),
            return_pressure: r2(&state.aux.return_pressure_kpa),
            occupant_num: state.occupancy,
        }
    }
}

/// Rolls out the noisy rule policy for `n_days` working days and logs every
/// control step.
pub fn generate_demonstrations(
    scenario: &Scenario,
    policy: &BehaviorPolicy,
    n_days: usize,
    seed: u64,
) -> Result<HistoricalLog> {
    let sim = &scenario.simulation;
    let start = NaiveDate::parse_from_str(&sim.start_date, "%Y-%m-%d")
        .map_err(|e| Error::config(format!("start_date: {e}")))?
        .and_hms_opt(sim.start_hour, 0, 0)
        .ok_or_else(|| Error::config("start hour out of range"))?;
    let mut env = Environment::new(scenario.clone())?;
    let mut rows = Vec::with_capacity(n_days * sim.episode_steps);
    for day in 0..n_days {
        let mut state = env.reset(derive_seed(seed, day as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ NOISE_STREAM, day as u64));
        let day_start = start + Duration::days(day as i64);
        for t in 0..sim.episode_steps {
            let action = policy.act_noisy(&state, &mut rng);
            let ts = day_start + Duration::minutes(i64::from(sim.control_interval_min) * t as i64);
            rows.push(LogRow::from_state(&state, action, ts));
            state = env.step(action)?.state;
        }
    }
    Ok(HistoricalLog { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_levels() {
        let p = BehaviorPolicy::new(BehaviorParams::default());
        assert_eq!(p.zone_level(30.0, 0), 0);
        assert_eq!(p.zone_level(25.0, 1), 1);
        assert_eq!(p.zone_level(26.0, 2), 2);
        assert_eq!(p.zone_level(27.5, 1), 3);
        assert_eq!(p.zone_level(22.5, 1), 0);
    }

    #[test]
    fn demonstrations_shape_and_vacancy() {
        let sc = Scenario::default();
        let policy = BehaviorPolicy::new(sc.behavior.clone());
        let log = generate_demonstrations(&sc, &policy, 2, 11).unwrap();
        assert_eq!(log.len(), 240);
        let again = generate_demonstrations(&sc, &policy, 2, 11).unwrap();
        assert_eq!(log, again);
        let (mut vacant, mut off) = (0, 0);
        for r in &log.rows {
            for j in 0..ZONES {
                if r.occupant_num[j] == 0 {
                    vacant += 1;
                    off += usize::from(r.fcu_fan[j] == 0);
                }
            }
        }
        assert!(off as f64 >= 0.85 * vacant as f64, "{off}/{vacant}");
        // day boundary: first row of day 2 has no predecessor action
        assert_eq!(log.prev_action(120, 5), JointAction::ALL_OFF);
        assert_eq!(log.prev_action(121, 5), log.rows[120].action());
    }
}
