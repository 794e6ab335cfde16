//! Lumped-capacitance zone model.
//!
//! Each zone is a single air node. Heat gains come from occupants, neighbouring
//! zones, the envelope and the FCU supply air; the temperature is advanced with
//! explicit Euler steps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Skin-side reference temperature of the occupant heat model.
const BODY_TEMP_C: f64 = 37.0;
/// Room temperature at which `q_p` is quoted.
const REFERENCE_ROOM_TEMP_C: f64 = 24.0;

/// Density and specific heat of air.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirProps {
    pub density_kg_m3: f64,
    pub specific_heat_j_kgk: f64,
}

impl Default for AirProps {
    fn default() -> Self {
        Self {
            density_kg_m3: 1.2,
            specific_heat_j_kgk: 1005.0,
        }
    }
}

impl AirProps {
    /// Heat capacity rate of an airflow, W/K.
    pub fn capacity_rate(&self, vdot_m3_s: f64) -> f64 {
        self.density_kg_m3 * self.specific_heat_j_kgk * vdot_m3_s
    }
}

/// One external wall. The transfer value per unit area is
/// `u_value * (t_out - t_in) + solar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub area_m2: f64,
    pub u_value_w_m2k: f64,
    pub solar_w_m2: f64,
}

impl Wall {
    pub fn ottv(&self, ctx: &OutdoorContext) -> f64 {
        self.u_value_w_m2k * (ctx.t_out_c - ctx.t_in_c) + self.solar_w_m2
    }
}

/// Thermal coupling to a neighbouring zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adjacency {
    pub zone_id: usize,
    pub eta_w_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneParams {
    pub zone_id: usize,
    pub air_volume_m3: f64,
    #[serde(default)]
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub adjacency: Vec<Adjacency>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_q_p")]
    pub q_p_w: f64,
    #[serde(default = "default_q_d")]
    pub q_d_w: f64,
}

fn default_beta() -> f64 {
    1.0
}
fn default_q_p() -> f64 {
    70.0
}
fn default_q_d() -> f64 {
    10.0
}

impl ZoneParams {
    pub fn new(zone_id: usize, air_volume_m3: f64) -> Self {
        Self {
            zone_id,
            air_volume_m3,
            walls: Vec::new(),
            adjacency: Vec::new(),
            beta: default_beta(),
            q_p_w: default_q_p(),
            q_d_w: default_q_d(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.zone_id;
        if !(self.air_volume_m3 > 0.0 && self.air_volume_m3.is_finite()) {
            return Err(Error::config(format!("zone {id}: air volume must be positive")));
        }
        if !(0.8..=1.2).contains(&self.beta) {
            return Err(Error::config(format!(
                "zone {id}: beta {} outside [0.8, 1.2]",
                self.beta
            )));
        }
        if self.q_p_w <= 0.0 || self.q_d_w < 0.0 {
            return Err(Error::config(format!("zone {id}: occupant heat constants invalid")));
        }
        for w in &self.walls {
            if w.area_m2 < 0.0 || w.u_value_w_m2k < 0.0 || w.solar_w_m2 < 0.0 {
                return Err(Error::config(format!("zone {id}: negative wall property")));
            }
        }
        for a in &self.adjacency {
            if a.eta_w_k < 0.0 || a.zone_id == id {
                return Err(Error::config(format!("zone {id}: invalid adjacency entry")));
            }
        }
        Ok(())
    }
}

/// Checks that every adjacency is listed from both sides with the same coefficient.
pub fn check_symmetric_adjacency(zones: &[ZoneParams]) -> Result<()> {
    for z in zones {
        for a in &z.adjacency {
            let other = zones
                .iter()
                .find(|o| o.zone_id == a.zone_id)
                .ok_or_else(|| {
                    Error::config(format!("zone {} lists unknown neighbour {}", z.zone_id, a.zone_id))
                })?;
            let back = other.adjacency.iter().find(|b| b.zone_id == z.zone_id);
            match back {
                Some(b) if b.eta_w_k == a.eta_w_k => {}
                _ => {
                    return Err(Error::config(format!(
                        "adjacency {}-{} is not symmetric",
                        z.zone_id, a.zone_id
                    )))
                }
            }
        }
    }
    Ok(())
}

/// Outdoor and indoor temperatures seen by the envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutdoorContext {
    pub t_out_c: f64,
    pub t_in_c: f64,
}

/// Supply-air stream delivered by the zone's terminal unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplyAir {
    pub air: AirProps,
    pub vdot_m3_s: f64,
    pub t_supply_c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneThermalInput {
    pub t_in_c: f64,
    pub occupants: u32,
    pub supply: SupplyAir,
    pub neighbor_temps_c: BTreeMap<usize, f64>,
}

/// Sensible heat released by the occupants of a zone, W.
pub fn occupant_heat(t_in_c: f64, occupants: u32, params: &ZoneParams) -> f64 {
    let scale = (BODY_TEMP_C - t_in_c) / (BODY_TEMP_C - REFERENCE_ROOM_TEMP_C);
    (scale * params.q_p_w + params.q_d_w) * f64::from(occupants)
}

/// Heat exchanged with adjacent zones, W (positive when the zone gains heat).
pub fn interzone_heat(
    t_in_c: f64,
    neighbor_temps_c: &BTreeMap<usize, f64>,
    params: &ZoneParams,
) -> Result<f64> {
    params.adjacency.iter().try_fold(0.0, |acc, adj| {
        let t_j = neighbor_temps_c.get(&adj.zone_id).ok_or_else(|| {
            Error::config(format!(
                "zone {}: no temperature for neighbour {}",
                params.zone_id, adj.zone_id
            ))
        })?;
        Ok(acc + (t_j - t_in_c) * adj.eta_w_k)
    })
}

/// Envelope gain summed over the zone's external walls, W.
pub fn envelope_load(params: &ZoneParams, ctx: &OutdoorContext) -> f64 {
    params.walls.iter().map(|w| w.ottv(ctx) * w.area_m2).sum()
}

/// Sensible capacity delivered by the supply air, W. Negative when cooling.
pub fn supply_capacity(t_in_c: f64, supply: &SupplyAir) -> f64 {
    supply.air.capacity_rate(supply.vdot_m3_s) * (supply.t_supply_c - t_in_c)
}

/// Total zone load (occupants, neighbours, envelope), W.
pub fn zone_load(input: &ZoneThermalInput, params: &ZoneParams, t_out_c: f64) -> Result<f64> {
    let occ = occupant_heat(input.t_in_c, input.occupants, params);
    let int = interzone_heat(input.t_in_c, &input.neighbor_temps_c, params)?;
    let env = envelope_load(
        params,
        &OutdoorContext {
            t_out_c,
            t_in_c: input.t_in_c,
        },
    );
    Ok(occ + int + env)
}

/// One explicit-Euler step of the zone air temperature.
pub fn zone_temperature_step(
    t_in_c: f64,
    q_load_w: f64,
    q_sup_w: f64,
    params: &ZoneParams,
    air: &AirProps,
    dt_s: f64,
) -> Result<f64> {
    if !(dt_s > 0.0 && dt_s.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt_s}")));
    }
    if !(t_in_c.is_finite() && q_load_w.is_finite() && q_sup_w.is_finite()) {
        return Err(Error::Numerical(format!(
            "zone {}: non-finite input (T={t_in_c}, Qload={q_load_w}, Qsup={q_sup_w})",
            params.zone_id
        )));
    }
    let capacitance = air.density_kg_m3 * air.specific_heat_j_kgk * params.air_volume_m3;
    let next = t_in_c + dt_s * (q_load_w + q_sup_w) / capacitance * params.beta;
    if !next.is_finite() {
        return Err(Error::Numerical(format!("zone {}: temperature diverged", params.zone_id)));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn zone() -> ZoneParams {
        ZoneParams::new(1, 100.0)
    }

    #[test]
    fn occupant_heat_examples() {
        let p = zone();
        assert_relative_eq!(occupant_heat(24.0, 3, &p), 240.0, epsilon = 1e-12);
        assert_eq!(occupant_heat(30.0, 0, &p), 0.0);
        assert_relative_eq!(occupant_heat(37.0, 2, &p), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn interzone_examples() {
        let mut p = zone();
        p.adjacency.push(Adjacency { zone_id: 2, eta_w_k: 5.0 });
        let mut temps = BTreeMap::new();
        temps.insert(2, 25.0);
        assert_eq!(interzone_heat(25.0, &temps, &p).unwrap(), 0.0);
        temps.insert(2, 27.0);
        assert_relative_eq!(interzone_heat(25.0, &temps, &p).unwrap(), 10.0);

        p.adjacency.push(Adjacency { zone_id: 3, eta_w_k: 5.0 });
        temps.insert(2, 26.0);
        temps.insert(3, 24.0);
        assert_eq!(interzone_heat(25.0, &temps, &p).unwrap(), 0.0);

        temps.remove(&3);
        assert!(matches!(interzone_heat(25.0, &temps, &p), Err(Error::Config(_))));
    }

    #[test]
    fn envelope_examples() {
        let mut p = zone();
        let ctx = OutdoorContext { t_out_c: 30.0, t_in_c: 25.0 };
        assert_eq!(envelope_load(&p, &ctx), 0.0);
        p.walls.push(Wall { area_m2: 12.0, u_value_w_m2k: 0.0, solar_w_m2: 20.0 });
        assert_relative_eq!(envelope_load(&p, &ctx), 240.0);
        p.walls.push(Wall { area_m2: 8.0, u_value_w_m2k: 0.0, solar_w_m2: 15.0 });
        assert_relative_eq!(envelope_load(&p, &ctx), 360.0);
        // conduction part follows the outdoor temperature
        p.walls[0].u_value_w_m2k = 2.0;
        assert_relative_eq!(envelope_load(&p, &ctx), 360.0 + 2.0 * 5.0 * 12.0);
    }

    #[test]
    fn supply_examples() {
        let air = AirProps::default();
        let s = |v, t| SupplyAir { air, vdot_m3_s: v, t_supply_c: t };
        assert_eq!(supply_capacity(22.0, &s(0.2, 22.0)), 0.0);
        assert_relative_eq!(supply_capacity(26.0, &s(0.1, 16.0)), -1206.0, epsilon = 1e-9);
        assert_eq!(supply_capacity(26.0, &s(0.0, 16.0)), 0.0);
    }

    #[test]
    fn temperature_step_examples() {
        let air = AirProps::default();
        let mut p = zone();
        assert_eq!(zone_temperature_step(25.3, 500.0, -500.0, &p, &air, 300.0).unwrap(), 25.3);
        // 300 s * 1206 W / (1.2 * 1005 * 100 J/K) = 3 K
        let t = zone_temperature_step(20.0, 1206.0, 0.0, &p, &air, 300.0).unwrap();
        assert_relative_eq!(t - 20.0, 3.0, epsilon = 1e-12);
        p.beta = 1.2;
        let t2 = zone_temperature_step(20.0, 1206.0, 0.0, &p, &air, 300.0).unwrap();
        assert_relative_eq!(t2 - 20.0, 3.6, epsilon = 1e-12);
        assert!(zone_temperature_step(20.0, f64::NAN, 0.0, &p, &air, 300.0).is_err());
        assert!(zone_temperature_step(20.0, 0.0, 0.0, &p, &air, 0.0).is_err());
    }

    #[test]
    fn validation() {
        let mut p = zone();
        assert!(p.validate().is_ok());
        p.beta = 1.3;
        assert!(p.validate().is_err());
        p.beta = 1.0;
        p.air_volume_m3 = 0.0;
        assert!(p.validate().is_err());

        let mut a = ZoneParams::new(1, 50.0);
        let mut b = ZoneParams::new(2, 50.0);
        a.adjacency.push(Adjacency { zone_id: 2, eta_w_k: 10.0 });
        assert!(check_symmetric_adjacency(&[a.clone(), b.clone()]).is_err());
        b.adjacency.push(Adjacency { zone_id: 1, eta_w_k: 10.0 });
        assert!(check_symmetric_adjacency(&[a, b]).is_ok());
    }

    proptest! {
        #[test]
        fn step_linear_in_flux_and_beta(q in -5000.0..5000.0f64, beta in 0.8..1.2f64) {
            let air = AirProps::default();
            let mut p = zone();
            p.beta = beta;
            let d1 = zone_temperature_step(0.0, q, 0.0, &p, &air, 60.0).unwrap();
            let d2 = zone_temperature_step(0.0, 2.0 * q, 0.0, &p, &air, 60.0).unwrap();
            prop_assert!((d2 - 2.0 * d1).abs() <= 1e-12 * d1.abs().max(1.0));
            p.beta = 1.0;
            let unit = zone_temperature_step(0.0, q, 0.0, &p, &air, 60.0).unwrap();
            prop_assert!((d1 - beta * unit).abs() <= 1e-12 * d1.abs().max(1.0));
        }

        #[test]
        fn occupant_heat_monotone(t in 10.0..36.0f64, dt in 0.0..5.0f64, n in 0u32..20) {
            let p = zone();
            prop_assert!(occupant_heat(t + dt, n, &p) <= occupant_heat(t, n, &p) + 1e-12);
            let one = occupant_heat(t, 1, &p);
            prop_assert!((occupant_heat(t, n, &p) - f64::from(n) * one).abs() < 1e-9);
        }

        #[test]
        fn interzone_antisymmetric(ti in 15.0..35.0f64, tj in 15.0..35.0f64, eta in 0.0..100.0f64) {
            let mut a = ZoneParams::new(1, 50.0);
            let mut b = ZoneParams::new(2, 50.0);
            a.adjacency.push(Adjacency { zone_id: 2, eta_w_k: eta });
            b.adjacency.push(Adjacency { zone_id: 1, eta_w_k: eta });
            let qa = interzone_heat(ti, &BTreeMap::from([(2, tj)]), &a).unwrap();
            let qb = interzone_heat(tj, &BTreeMap::from([(1, ti)]), &b).unwrap();
            prop_assert_eq!(qa, -qb);
        }
    }
}
