//! Seven-zone FCU building as a sequential decision process.
//!
//! Each control step applies a joint fan-level action, schedules the pump from
//! the number of running FCUs, solves the water network, and integrates the
//! zone temperatures over the control interval in fixed sub-steps.

mod demos;
mod features;
mod log;
mod schedule;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use demos::{generate_demonstrations, BehaviorPolicy};
pub use features::{raw_features, raw_from_parts, FeatureScaler, Features, FEATURE_DIM};
pub use log::{load_historical, log_columns, HistoricalLog, LogRow};
pub use schedule::{occupancy_schedule, WeatherDay};

use crate::comfort::{self, RewardTerms, StepMetrics};
use crate::equipment::LEVELS;
use crate::error::{Error, Result};
use crate::hydraulics::{
    build_network, propagate_temperatures, CoilState, HydraulicSolution, HydraulicSolver,
    NetworkTopology, WATER_DENSITY_KG_M3, WATER_SPECIFIC_HEAT_J_KGK,
};
use crate::scenario::{Scenario, ZONES};
use crate::thermal::{self, SupplyAir, ZoneThermalInput};

/// Size of the joint action space, `4^7`.
pub const NUM_ACTIONS: usize = 16_384;

/// Comfort is evaluated with zone temperatures clamped to this range.
const PMV_TEMP_RANGE: (f64, f64) = (10.0, 40.0);

/// SplitMix64 finaliser applied to a pair of seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Joint fan-level vector. Zone 1 is the least-significant base-4 digit of
/// the flat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct JointAction(u16);

impl JointAction {
    pub const ALL_OFF: JointAction = JointAction(0);

    pub fn from_index(index: usize) -> Result<Self> {
        if index < NUM_ACTIONS {
            Ok(Self(index as u16))
        } else {
            Err(Error::invalid(format!("action index {index} outside [0, {NUM_ACTIONS})")))
        }
    }

    pub fn from_levels(levels: &[u8; ZONES]) -> Result<Self> {
        let mut index = 0usize;
        for (j, &l) in levels.iter().enumerate().rev() {
            if l as usize >= LEVELS {
                return Err(Error::invalid(format!("zone {} level {l} outside 0..=3", j + 1)));
            }
            index = index * LEVELS + l as usize;
        }
        Ok(Self(index as u16))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn level(self, zone: usize) -> u8 {
        ((self.0 >> (2 * zone)) & 3) as u8
    }

    pub fn levels(self) -> [u8; ZONES] {
        std::array::from_fn(|j| self.level(j))
    }

    pub fn active_count(self) -> usize {
        (0..ZONES).filter(|&j| self.level(j) > 0).count()
    }
}

/// Water-side measurements carried alongside the thermal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxState {
    pub supply_temp_c: [f64; ZONES],
    pub return_temp_c: [f64; ZONES],
    pub supply_pressure_kpa: [f64; ZONES],
    pub return_pressure_kpa: [f64; ZONES],
    pub pump_freq_hz: f64,
    pub pump_flow_m3_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingState {
    pub zone_temps_c: [f64; ZONES],
    pub occupancy: [u32; ZONES],
    pub outdoor_temp_c: f64,
    pub prev_action: JointAction,
    /// Minutes since the episode start.
    pub clock_min: u32,
    pub aux: AuxState,
}

impl BuildingState {
    pub fn total_occupancy(&self) -> u32 {
        self.occupancy.iter().sum()
    }
}

/// Diagnostics returned with every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub metrics: StepMetrics,
    pub terms: RewardTerms,
    pub zone_pmv: [f64; ZONES],
    pub zone_ppd: [f64; ZONES],
    pub fan_power_kw: f64,
    pub pump_power_kw: f64,
    pub energy_kwh: f64,
    /// Largest hydraulic loop residual over the step, kPa.
    pub hydraulic_residual_kpa: f64,
    /// Largest nodal mass imbalance relative to the pump flow.
    pub mass_imbalance_rel: f64,
    pub hydraulic_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: BuildingState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Simulator instance. Single-threaded; clone it to branch a rollout.
#[derive(Debug, Clone)]
pub struct Environment {
    scenario: Scenario,
    topology: NetworkTopology,
    solver: HydraulicSolver,
    coil_branches: [usize; ZONES],
    occupancy: Vec<[u32; ZONES]>,
    weather: WeatherDay,
    state: BuildingState,
    step: usize,
    day_seed: u64,
}

impl Environment {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let topology = build_network(&scenario.zones, &scenario.fcus, &scenario.pump, &scenario.network)?;
        let mut coil_branches = [0usize; ZONES];
        for (j, c) in coil_branches.iter_mut().enumerate() {
            *c = topology
                .coil_branch(j)
                .ok_or_else(|| Error::config(format!("network has no coil for FCU {}", j + 1)))?;
        }
        let mut env = Self {
            state: BuildingState {
                zone_temps_c: [0.0; ZONES],
                occupancy: [0; ZONES],
                outdoor_temp_c: 0.0,
                prev_action: JointAction::ALL_OFF,
                clock_min: 0,
                aux: idle_aux(&scenario),
            },
            weather: WeatherDay::sample(&scenario.weather, scenario.simulation.start_hour, &mut ChaCha8Rng::seed_from_u64(0)),
            occupancy: Vec::new(),
            solver: HydraulicSolver::new(),
            coil_branches,
            topology,
            scenario,
            step: 0,
            day_seed: 0,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn state(&self) -> &BuildingState {
        &self.state
    }

    /// Index of the next step to execute.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.scenario.simulation.episode_steps
    }

    /// Seed of the current day, derived from the scenario seed and the reset seed.
    pub fn day_seed(&self) -> u64 {
        self.day_seed
    }

    /// Occupancy series of the current day.
    pub fn occupancy_series(&self) -> &[[u32; ZONES]] {
        &self.occupancy
    }

    pub fn weather(&self) -> &WeatherDay {
        &self.weather
    }

    /// Starts a new day. The same (scenario, seed) pair always yields the same day.
    pub fn reset(&mut self, seed: u64) -> BuildingState {
        self.day_seed = derive_seed(self.scenario.seed, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(self.day_seed);
        let sim = &self.scenario.simulation;
        self.occupancy = occupancy_schedule(&self.scenario, &mut rng);
        self.weather = WeatherDay::sample(&self.scenario.weather, sim.start_hour, &mut rng);
        let spread = sim.initial_temp_spread_c;
        let temps: [f64; ZONES] = std::array::from_fn(|_| {
            sim.initial_temp_c + spread * (2.0 * rng.random::<f64>() - 1.0)
        });
        self.state = BuildingState {
            zone_temps_c: temps,
            occupancy: self.occupancy[0],
            outdoor_temp_c: self.weather.temperature(0.0),
            prev_action: JointAction::ALL_OFF,
            clock_min: 0,
            aux: idle_aux(&self.scenario),
        };
        self.step = 0;
        self.state.clone()
    }

    /// Applies `action` for one control interval.
    pub fn step(&mut self, action: JointAction) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::invalid("episode already finished; call reset"));
        }
        let step = self.step;
        self.advance(action).map_err(|e| e.at_step(step))
    }

    fn advance(&mut self, action: JointAction) -> Result<StepOutcome> {
        let sc = &self.scenario;
        let sim = &sc.simulation;
        let levels = action.levels();
        let valve_open: [bool; ZONES] = std::array::from_fn(|j| levels[j] > 0);
        let freq = sc.pump.scheduled_frequency(action.active_count(), ZONES);
        let solution = self.solver.solve(
            &self.topology,
            &sc.pump,
            freq,
            &valve_open,
            sim.hydraulic_tol_kpa,
            sc.network.reference_pressure_kpa,
        )?;
        let mass_imbalance_rel = mass_imbalance(&self.topology, &solution);

        let airflow: [f64; ZONES] = std::array::from_fn(|j| {
            sc.fcus[j].airflow(levels[j]).expect("levels validated by JointAction")
        });
        let fan_power_w: f64 = (0..ZONES)
            .map(|j| sc.fcus[j].fan_power(levels[j]).expect("levels validated by JointAction"))
            .sum();
        let pump_power_w = sc.pump.power(freq)?;

        // coil effectiveness is capped so the supply air never undershoots the water inlet
        let water_flow: [f64; ZONES] =
            std::array::from_fn(|j| solution.branch_flows_m3_s[self.coil_branches[j]].max(0.0));
        let eff: [f64; ZONES] = std::array::from_fn(|j| {
            let c_w = WATER_DENSITY_KG_M3 * WATER_SPECIFIC_HEAT_J_KGK * water_flow[j];
            let c_a = sc.air.capacity_rate(airflow[j]);
            let e = sc.fcus[j].coil_effectiveness_by_mode[levels[j] as usize];
            if c_w > 0.0 {
                e.min(c_a / c_w)
            } else {
                0.0
            }
        });

        let substeps = (f64::from(sim.control_interval_min) * 60.0 / sim.substep_s).round() as usize;
        let t0 = f64::from(self.state.clock_min) * 60.0;
        let occupants = self.state.occupancy;
        let mut temps = self.state.zone_temps_c;
        let mut water = None;
        for k in 0..substeps {
            let t_out = self.weather.temperature(t0 + k as f64 * sim.substep_s);
            let coil_states: Vec<CoilState> = (0..ZONES)
                .map(|j| CoilState {
                    t_air_c: temps[j],
                    effectiveness: eff[j],
                })
                .collect();
            let w = propagate_temperatures(&self.topology, &solution, &coil_states, sc.network.supply_temp_c)?;
            let mut next = temps;
            for j in 0..ZONES {
                let zone = &sc.zones[j];
                let c_a = sc.air.capacity_rate(airflow[j]);
                let t_supply = if c_a > 0.0 {
                    temps[j] - w.coil_heat_w[j] / c_a
                } else {
                    temps[j]
                };
                let neighbor_temps_c: BTreeMap<usize, f64> = zone
                    .adjacency
                    .iter()
                    .map(|a| (a.zone_id, temps[a.zone_id - 1]))
                    .collect();
                let input = ZoneThermalInput {
                    t_in_c: temps[j],
                    occupants: occupants[j],
                    supply: SupplyAir {
                        air: sc.air,
                        vdot_m3_s: airflow[j],
                        t_supply_c: t_supply,
                    },
                    neighbor_temps_c,
                };
                let q_load = thermal::zone_load(&input, zone, t_out)?;
                let q_sup = thermal::supply_capacity(temps[j], &input.supply);
                next[j] = thermal::zone_temperature_step(temps[j], q_load, q_sup, zone, &sc.air, sim.substep_s)?;
            }
            temps = next;
            water = Some(w);
        }

        let power_kw = (fan_power_w + pump_power_w) / 1000.0;
        let mut zone_pmv = [0.0; ZONES];
        let mut zone_ppd = [0.0; ZONES];
        for j in 0..ZONES {
            let t = temps[j].clamp(PMV_TEMP_RANGE.0, PMV_TEMP_RANGE.1);
            zone_pmv[j] = comfort::pmv(t, &sc.comfort)?;
            zone_ppd[j] = comfort::ppd(zone_pmv[j]);
        }
        let abs_pmv = zone_pmv.map(f64::abs);
        let ppd_mean = comfort::mean_ppd(&zone_ppd, &occupants)?;
        let pmv_abs_mean = comfort::weighted_mean(&abs_pmv, &occupants)?;
        let occupants_total: u32 = occupants.iter().sum();
        let terms = comfort::reward_terms(ppd_mean, power_kw, occupants_total, sim.lambda_p);
        let reward = terms.total();

        let mut aux = idle_aux(sc);
        aux.pump_freq_hz = freq;
        aux.pump_flow_m3_s = solution.pump_flow_m3_s;
        if let Some(w) = &water {
            for j in 0..ZONES {
                let b = &self.topology.branches()[self.coil_branches[j]];
                aux.supply_temp_c[j] = w.branch_inlet_c[self.coil_branches[j]];
                aux.return_temp_c[j] = w.branch_outlet_c[self.coil_branches[j]];
                aux.supply_pressure_kpa[j] = solution.node_pressures_kpa[b.upstream];
                aux.return_pressure_kpa[j] = solution.node_pressures_kpa[b.downstream];
            }
        }

        self.step += 1;
        let clock = self.step as u32 * sim.control_interval_min;
        self.state = BuildingState {
            zone_temps_c: temps,
            occupancy: self.occupancy[self.step],
            outdoor_temp_c: self.weather.temperature(f64::from(clock) * 60.0),
            prev_action: action,
            clock_min: clock,
            aux,
        };
        let info = StepInfo {
            metrics: StepMetrics {
                ppd_mean_pct: ppd_mean,
                pmv_abs_mean,
                power_kw,
                occupants_total,
                reward,
            },
            terms,
            zone_pmv,
            zone_ppd,
            fan_power_kw: fan_power_w / 1000.0,
            pump_power_kw: pump_power_w / 1000.0,
            energy_kwh: power_kw * sim.dt_hours(),
            hydraulic_residual_kpa: solution.residual_kpa,
            mass_imbalance_rel,
            hydraulic_iterations: solution.iterations,
        };
        Ok(StepOutcome {
            state: self.state.clone(),
            reward,
            done: self.is_done(),
            info,
        })
    }
}

fn idle_aux(sc: &Scenario) -> AuxState {
    let p = sc.network.reference_pressure_kpa;
    let t = sc.network.supply_temp_c;
    AuxState {
        supply_temp_c: [t; ZONES],
        return_temp_c: [t; ZONES],
        supply_pressure_kpa: [p; ZONES],
        return_pressure_kpa: [p; ZONES],
        pump_freq_hz: 0.0,
        pump_flow_m3_s: 0.0,
    }
}

fn mass_imbalance(topo: &NetworkTopology, sol: &HydraulicSolution) -> f64 {
    let scale = sol.pump_flow_m3_s.abs();
    if scale == 0.0 {
        return 0.0;
    }
    topo.nodal_imbalance(&sol.branch_flows_m3_s)
        .iter()
        .fold(0.0f64, |a, x| a.max(x.abs() / scale))
}
