//! Seeded occupancy and outdoor-temperature profiles for one working day.

use std::f64::consts::PI;

use rand::Rng;

use crate::scenario::{OccupancyParams, Scenario, WeatherParams, ZONES};

/// Occupancy per zone sampled at every control step, `episode_steps + 1`
/// entries (the final entry is the state after the last action).
pub fn occupancy_schedule<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Vec<[u32; ZONES]> {
    let sim = &scenario.simulation;
    let occ = &scenario.occupancy;
    let mut series = vec![[0u32; ZONES]; sim.episode_steps + 1];
    for (zone, &cap) in occ.capacity.iter().enumerate() {
        for _ in 0..cap {
            let Some(p) = Person::sample(occ, rng) else {
                continue;
            };
            for (t, row) in series.iter_mut().enumerate() {
                let minute = (t as u32 * sim.control_interval_min) as f64;
                if p.present(minute) {
                    row[zone] += 1;
                }
            }
        }
    }
    series
}

struct Person {
    arrive: f64,
    lunch_out: f64,
    lunch_back: f64,
    leave: f64,
}

impl Person {
    fn sample<R: Rng + ?Sized>(p: &OccupancyParams, rng: &mut R) -> Option<Self> {
        // always draw the full record so attendance does not shift later draws
        let attends = rng.random::<f64>() < p.attendance_prob;
        let person = Self {
            arrive: uniform(rng, p.arrival_window),
            lunch_out: uniform(rng, p.lunch_leave_window),
            lunch_back: uniform(rng, p.lunch_return_window),
            leave: uniform(rng, p.departure_window),
        };
        attends.then_some(person)
    }

    fn present(&self, minute: f64) -> bool {
        (self.arrive <= minute && minute < self.lunch_out)
            || (self.lunch_back <= minute && minute < self.leave)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, w: [f64; 2]) -> f64 {
    w[0] + (w[1] - w[0]) * rng.random::<f64>()
}

/// Daily outdoor temperature profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherDay {
    pub params: WeatherParams,
    pub offset_c: f64,
    pub start_hour: f64,
}

impl WeatherDay {
    pub fn sample<R: Rng + ?Sized>(params: &WeatherParams, start_hour: u32, rng: &mut R) -> Self {
        let offset_c = params.day_offset_c * (2.0 * rng.random::<f64>() - 1.0);
        Self {
            params: *params,
            offset_c,
            start_hour: f64::from(start_hour),
        }
    }

    /// Outdoor temperature `seconds` after the episode start, °C.
    pub fn temperature(&self, seconds: f64) -> f64 {
        let hour = self.start_hour + seconds / 3600.0;
        let p = &self.params;
        p.base_c + self.offset_c + p.amplitude_c * (2.0 * PI * (hour - p.peak_hour) / 24.0).cos()
    }
}
