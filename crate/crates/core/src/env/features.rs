//! Observation features shared by the learner and the kNN oracle.
//!
//! Layout (24 values): zone temperatures 1..7, occupancies 1..7, outdoor
//! temperature, previous fan levels 1..7 divided by 3, sin and cos of the
//! time of day on a 24 h cycle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::BuildingState;
use crate::error::{Error, Result};
use crate::scenario::{Scenario, ZONES};

pub const FEATURE_DIM: usize = 3 * ZONES + 3;

const TEMP_OFFSET: usize = 0;
const OCC_OFFSET: usize = ZONES;
const OUTDOOR: usize = 2 * ZONES;
const PREV_OFFSET: usize = 2 * ZONES + 1;
const SIN: usize = 3 * ZONES + 1;
const COS: usize = 3 * ZONES + 2;

pub type Features = [f64; FEATURE_DIM];

/// Unscaled feature vector of a state.
pub fn raw_features(state: &BuildingState, start_hour: u32) -> Features {
    raw_from_parts(
        &state.zone_temps_c,
        &state.occupancy,
        state.outdoor_temp_c,
        &state.prev_action.levels(),
        state.clock_min,
        start_hour,
    )
}

pub fn raw_from_parts(
    temps: &[f64; ZONES],
    occupancy: &[u32; ZONES],
    outdoor_c: f64,
    prev_levels: &[u8; ZONES],
    clock_min: u32,
    start_hour: u32,
) -> Features {
    let mut f = [0.0; FEATURE_DIM];
    for j in 0..ZONES {
        f[TEMP_OFFSET + j] = temps[j];
        f[OCC_OFFSET + j] = f64::from(occupancy[j]);
        f[PREV_OFFSET + j] = f64::from(prev_levels[j]) / 3.0;
    }
    f[OUTDOOR] = outdoor_c;
    let hour = f64::from(start_hour) + f64::from(clock_min) / 60.0;
    let angle = 2.0 * PI * hour / 24.0;
    f[SIN] = angle.sin();
    f[COS] = angle.cos();
    f
}

/// Per-feature min-max scaling to [0, 1]. Constant features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaler {
    /// Bounds fitted on a set of raw feature rows.
    pub fn fit(rows: &[Features]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("cannot fit a scaler on zero rows"));
        }
        let mut min = vec![f64::INFINITY; FEATURE_DIM];
        let mut max = vec![f64::NEG_INFINITY; FEATURE_DIM];
        for r in rows {
            for q in 0..FEATURE_DIM {
                min[q] = min[q].min(r[q]);
                max[q] = max[q].max(r[q]);
            }
        }
        Ok(Self { min, max })
    }

    /// Fixed bounds derived from the scenario, independent of any data.
    pub fn for_scenario(s: &Scenario) -> Self {
        let mut min = vec![0.0; FEATURE_DIM];
        let mut max = vec![1.0; FEATURE_DIM];
        for j in 0..ZONES {
            min[TEMP_OFFSET + j] = 18.0;
            max[TEMP_OFFSET + j] = 32.0;
            max[OCC_OFFSET + j] = f64::from(s.occupancy.capacity[j].max(1));
        }
        let w = &s.weather;
        min[OUTDOOR] = w.base_c - w.amplitude_c - w.day_offset_c;
        max[OUTDOOR] = w.base_c + w.amplitude_c + w.day_offset_c;
        min[SIN] = -1.0;
        min[COS] = -1.0;
        Self { min, max }
    }

    pub fn transform(&self, raw: &Features) -> Features {
        let mut out = [0.0; FEATURE_DIM];
        for q in 0..FEATURE_DIM {
            let span = self.max[q] - self.min[q];
            out[q] = if span > 0.0 {
                (raw[q] - self.min[q]) / span
            } else {
                0.0
            };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let f = raw_from_parts(&[25.0; ZONES], &[2; ZONES], 30.0, &[3; ZONES], 180, 9);
        assert_eq!(f[0], 25.0);
        assert_eq!(f[ZONES], 2.0);
        assert_eq!(f[OUTDOOR], 30.0);
        assert_eq!(f[PREV_OFFSET], 1.0);
        // 12:00 sits at angle π
        assert!((f[SIN]).abs() < 1e-12 && (f[COS] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaler_fit_and_constant_columns() {
        let a = raw_from_parts(&[20.0; ZONES], &[0; ZONES], 28.0, &[0; ZONES], 0, 9);
        let b = raw_from_parts(&[30.0; ZONES], &[4; ZONES], 28.0, &[0; ZONES], 60, 9);
        let s = FeatureScaler::fit(&[a, b]).unwrap();
        let t = s.transform(&a);
        assert_eq!(t[0], 0.0);
        assert_eq!(s.transform(&b)[0], 1.0);
        assert_eq!(t[OUTDOOR], 0.0);
        assert!(FeatureScaler::fit(&[]).is_err());
    }

    #[test]
    fn scenario_bounds_cover_weather() {
        let s = Scenario::default();
        let sc = FeatureScaler::for_scenario(&s);
        assert_eq!(sc.min[OUTDOOR], 22.5);
        assert_eq!(sc.max[OUTDOOR], 33.5);
    }
}
