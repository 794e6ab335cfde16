//! Text interface of a language-model mask provider: prompt serialization,
//! recommendation parsing and supervised fine-tuning export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use chrono::Timelike;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{FeasibleSets, KnnOracle, MaskProvider, RecommendationError};
use crate::env::{AuxState, BuildingState, HistoricalLog};
use crate::equipment::LEVELS;
use crate::error::{Error, Result};
use crate::scenario::{Scenario, ZONES};

/// Number of consecutive control steps shown to the model.
pub const WINDOW: usize = 5;

const SYSTEM: &str = "You are the supervisory assistant of a chilled-water fan-coil system serving a \
seven-zone office floor. For every zone, recommend the fan levels that are reasonable to apply at \
the current control step.";

const KNOWLEDGE: &str = "\
- Fan levels: 0 = off, 1 = low, 2 = medium, 3 = high. Higher levels remove more heat and draw more \
fan and pump power.
- Zones 1-4 are separate small offices with little thermal coupling between them.
- Zones 5-7 are adjacent parts of one open hall; heat flows between zones 5-6 and 6-7.
- Occupancy drives comfort: an empty zone needs no cooling, while a warm and crowded zone needs more.
- The chilled-water pump speeds up with the number of running fan coils.";

const OUTPUT_SCHEMA: &str = "Respond with a single JSON object and nothing else. It must have exactly \
two fields: \"analysis\" (a short string explaining the situation) and \"recommendations\" (an object \
with keys \"zone_1\" to \"zone_7\", each mapping to a non-empty array of integer fan levels from 0 to 3).";

fn clock_label(clock_min: u32, start_hour: u32) -> String {
    let total = start_hour * 60 + clock_min;
    format!("{:02}:{:02}", total / 60, total % 60)
}

/// Renders a window of exactly five consecutive states, oldest first.
pub fn serialize_prompt(window: &[BuildingState], start_hour: u32) -> Result<String> {
    if window.len() != WINDOW {
        return Err(Error::invalid(format!(
            "prompt window needs {WINDOW} states, got {}",
            window.len()
        )));
    }
    let mut s = String::new();
    let _ = writeln!(s, "SYSTEM:\n{SYSTEM}\n");
    let _ = writeln!(s, "DOMAIN KNOWLEDGE:\n{KNOWLEDGE}\n");
    let _ = writeln!(s, "RECENT STATES (oldest first; fan level is the one applied in the previous step):");
    for (i, st) in window.iter().enumerate() {
        let lag = WINDOW - 1 - i;
        let tag = if lag == 0 { "t".to_string() } else { format!("t-{lag}") };
        let _ = writeln!(
            s,
            "{tag} ({}): outdoor {:.2} C",
            clock_label(st.clock_min, start_hour),
            st.outdoor_temp_c
        );
        let levels = st.prev_action.levels();
        for j in 0..ZONES {
            let _ = writeln!(
                s,
                "  zone_{}: temperature {:.2} C, occupants {}, fan level {}, water {:.2}/{:.2} C",
                j + 1,
                st.zone_temps_c[j],
                st.occupancy[j],
                levels[j],
                st.aux.supply_temp_c[j],
                st.aux.return_temp_c[j]
            );
        }
    }
    let _ = write!(s, "\nOUTPUT FORMAT:\n{OUTPUT_SCHEMA}\n");
    Ok(s)
}

/// Rebuilds the logged states, one per row.
pub fn states_from_log(log: &HistoricalLog, scenario: &Scenario) -> Vec<BuildingState> {
    let sim = &scenario.simulation;
    (0..log.len())
        .map(|i| {
            let r = &log.rows[i];
            let minutes = (r.timestamp.hour() * 60 + r.timestamp.minute()).saturating_sub(sim.start_hour * 60);
            let prev_action = log.prev_action(i, sim.control_interval_min);
            BuildingState {
                zone_temps_c: r.zone_temp,
                occupancy: r.occupant_num,
                outdoor_temp_c: r.outdoor_temp,
                prev_action,
                clock_min: minutes,
                aux: AuxState {
                    supply_temp_c: r.supply_temp,
                    return_temp_c: r.return_temp,
                    supply_pressure_kpa: r.supply_pressure,
                    return_pressure_kpa: r.return_pressure,
                    pump_freq_hz: scenario.pump.scheduled_frequency(prev_action.active_count(), ZONES),
                    pump_flow_m3_s: 0.0,
                },
            }
        })
        .collect()
}

fn zone_key(j: usize) -> String {
    format!("zone_{}", j + 1)
}

/// The `recommendations` object for a set tuple.
pub fn recommendations_json(sets: &FeasibleSets) -> BTreeMap<String, Vec<u8>> {
    (0..ZONES).map(|j| (zone_key(j), sets.levels(j))).collect()
}

fn zone_levels(recs: &serde_json::Map<String, Value>, j: usize) -> std::result::Result<u8, RecommendationError> {
    let zone = j + 1;
    let list = recs
        .get(&zone_key(j))
        .ok_or(RecommendationError::MissingZone(zone))?
        .as_array()
        .ok_or_else(|| RecommendationError::Malformed(format!("zone_{zone} is not an array")))?;
    let mut bits = 0u8;
    for v in list {
        let level = v
            .as_i64()
            .ok_or_else(|| RecommendationError::Malformed(format!("zone_{zone} holds a non-integer level {v}")))?;
        if !(0..LEVELS as i64).contains(&level) {
            return Err(RecommendationError::LevelOutOfRange { zone, level });
        }
        bits |= 1 << level;
    }
    if bits == 0 {
        return Err(RecommendationError::EmptySet(zone));
    }
    Ok(bits)
}

fn recommendations_object(text: &str) -> std::result::Result<serde_json::Map<String, Value>, RecommendationError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| RecommendationError::Malformed(e.to_string()))?;
    match doc.get("recommendations") {
        Some(Value::Object(m)) => Ok(m.clone()),
        Some(_) => Err(RecommendationError::Malformed("`recommendations` is not an object".into())),
        None => Err(RecommendationError::Malformed("no `recommendations` field".into())),
    }
}

/// Strict parse of a model reply; the `analysis` field is ignored.
pub fn parse_recommendations(text: &str) -> std::result::Result<FeasibleSets, RecommendationError> {
    let recs = recommendations_object(text)?;
    let mut bits = [0u8; ZONES];
    for (j, b) in bits.iter_mut().enumerate() {
        *b = zone_levels(&recs, j)?;
    }
    Ok(FeasibleSets::from_bits(bits).expect("every zone validated non-empty"))
}

/// Parse that never fails: zones that cannot be read fall back to the full
/// level set, and the problems are returned alongside.
pub fn parse_recommendations_lenient(text: &str) -> (FeasibleSets, Vec<RecommendationError>) {
    let recs = match recommendations_object(text) {
        Ok(r) => r,
        Err(e) => return (FeasibleSets::full(), vec![e]),
    };
    let mut errors = Vec::new();
    let mut bits = FeasibleSets::full().bits();
    for (j, b) in bits.iter_mut().enumerate() {
        match zone_levels(&recs, j) {
            Ok(v) => *b = v,
            Err(e) => errors.push(e),
        }
    }
    (FeasibleSets::from_bits(bits).expect("zones are non-empty"), errors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftTarget {
    pub analysis: String,
    pub recommendations: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub input: String,
    pub target: SftTarget,
}

fn analysis_text(window: &[BuildingState], sets: &FeasibleSets) -> String {
    let mean = |s: &BuildingState| s.zone_temps_c.iter().sum::<f64>() / ZONES as f64;
    let change = mean(&window[WINDOW - 1]) - mean(&window[0]);
    let trend = if change > 0.05 {
        "rising"
    } else if change < -0.05 {
        "falling"
    } else {
        "steady"
    };
    let occupants = window[WINDOW - 1].total_occupancy();
    format!(
        "The mean zone temperature is {trend} ({change:+.2} C over the window). \
         The floor currently holds {occupants} occupants. \
         The recommendation prunes {} of {} zone fan levels.",
        sets.pruned_levels(),
        ZONES * LEVELS
    )
}

/// Writes one record per eligible log step (a full five-step window inside
/// one day) and returns the record count.
pub fn export_sft_dataset<W: Write>(
    log: &HistoricalLog,
    scenario: &Scenario,
    oracle: &KnnOracle,
    mut out: W,
    max_records: Option<usize>,
) -> Result<usize> {
    let k = oracle.config().k;
    if log.len() < k + WINDOW {
        return Err(Error::invalid(format!(
            "log has {} rows; at least k + {WINDOW} = {} are needed",
            log.len(),
            k + WINDOW
        )));
    }
    let sim = &scenario.simulation;
    let states = states_from_log(log, scenario);
    let mut count = 0;
    for i in 0..log.len() {
        if max_records.is_some_and(|m| count >= m) {
            break;
        }
        if log.run_position(i, sim.control_interval_min) < WINDOW - 1 {
            continue;
        }
        let window = &states[i + 1 - WINDOW..=i];
        let sets = oracle.sets_for_state(&states[i])?;
        let record = SftRecord {
            input: serialize_prompt(window, sim.start_hour)?,
            target: SftTarget {
                analysis: analysis_text(window, &sets),
                recommendations: recommendations_json(&sets),
            },
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
        count += 1;
    }
    out.flush()?;
    Ok(count)
}

/// Provider backed by a text model: prompt in, recommendation JSON out.
/// Unreadable zones fall back to the full level set with a warning.
pub struct PromptedProvider<F> {
    model: F,
    start_hour: u32,
}

impl<F> PromptedProvider<F>
where
    F: Fn(&str) -> Result<String> + Send + Sync,
{
    pub fn new(model: F, start_hour: u32) -> Self {
        Self { model, start_hour }
    }
}

impl<F> MaskProvider for PromptedProvider<F>
where
    F: Fn(&str) -> Result<String> + Send + Sync,
{
    fn feasible_sets(&self, history: &[BuildingState]) -> Result<FeasibleSets> {
        let last = history
            .last()
            .ok_or_else(|| Error::invalid("mask query needs at least the current state"))?;
        // early in the day the window is padded with the first available state
        let tail = &history[history.len().saturating_sub(WINDOW)..];
        let mut window: Vec<BuildingState> = vec![tail[0].clone(); WINDOW - tail.len()];
        window.extend_from_slice(tail);
        let prompt = serialize_prompt(&window, self.start_hour)?;
        let reply = (self.model)(&prompt)?;
        let (sets, errors) = parse_recommendations_lenient(&reply);
        for e in &errors {
            log::warn!("clock {} min: {e}; using the full level set", last.clock_min);
        }
        Ok(sets)
    }

    fn name(&self) -> &str {
        "prompted"
    }
}
