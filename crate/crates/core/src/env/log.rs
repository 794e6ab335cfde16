//! Historical operation logs in the building's CSV export format.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};

use super::features::{raw_from_parts, Features};
use super::JointAction;
use crate::error::{Error, Result};
use crate::scenario::ZONES;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

const PER_ZONE: [&str; 7] = [
    "zone_temp",
    "FCU_fan",
    "supply_temp",
    "return_temp",
    "supply_pressure",
    "return_pressure",
    "occupant_num",
];

/// Column names in file order.
pub fn log_columns() -> Vec<String> {
    let mut cols = vec!["timestamp".to_string(), "outdoor_temp".to_string()];
    for name in PER_ZONE {
        for i in 1..=ZONES {
            cols.push(format!("{name}_{i}"));
        }
    }
    cols
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub timestamp: NaiveDateTime,
    pub outdoor_temp: f64,
    pub zone_temp: [f64; ZONES],
    pub fcu_fan: [u8; ZONES],
    pub supply_temp: [f64; ZONES],
    pub return_temp: [f64; ZONES],
    pub supply_pressure: [f64; ZONES],
    pub return_pressure: [f64; ZONES],
    pub occupant_num: [u32; ZONES],
}

impl LogRow {
    pub fn action(&self) -> JointAction {
        JointAction::from_levels(&self.fcu_fan).expect("levels validated on construction")
    }

    fn record(&self) -> Vec<String> {
        let mut out = vec![
            self.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            self.outdoor_temp.to_string(),
        ];
        let floats = |a: &[f64; ZONES], out: &mut Vec<String>| out.extend(a.iter().map(f64::to_string));
        floats(&self.zone_temp, &mut out);
        out.extend(self.fcu_fan.iter().map(u8::to_string));
        floats(&self.supply_temp, &mut out);
        floats(&self.return_temp, &mut out);
        floats(&self.supply_pressure, &mut out);
        floats(&self.return_pressure, &mut out);
        out.extend(self.occupant_num.iter().map(u32::to_string));
        out
    }
}

/// Ordered sequence of log rows with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HistoricalLog {
    pub rows: Vec<LogRow>,
}

impl HistoricalLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Action in force before row `i`: the previous row's fan levels when it
    /// lies exactly one control interval earlier, otherwise all-off.
    pub fn prev_action(&self, i: usize, interval_min: u32) -> JointAction {
        if i == 0 {
            return JointAction::ALL_OFF;
        }
        let (prev, cur) = (&self.rows[i - 1], &self.rows[i]);
        if cur.timestamp - prev.timestamp == chrono::Duration::minutes(i64::from(interval_min)) {
            prev.action()
        } else {
            JointAction::ALL_OFF
        }
    }

    /// Number of rows before `i` that belong to the same contiguous run of
    /// control steps.
    pub fn run_position(&self, i: usize, interval_min: u32) -> usize {
        let step = chrono::Duration::minutes(i64::from(interval_min));
        let mut k = i;
        while k > 0 && self.rows[k].timestamp - self.rows[k - 1].timestamp == step {
            k -= 1;
        }
        i - k
    }

    /// Unscaled feature vector of the state recorded in row `i`.
    pub fn raw_features(&self, i: usize, start_hour: u32, interval_min: u32) -> Features {
        let r = &self.rows[i];
        let minutes = i64::from(r.timestamp.hour()) * 60 + i64::from(r.timestamp.minute())
            - i64::from(start_hour) * 60;
        raw_from_parts(
            &r.zone_temp,
            &r.occupant_num,
            r.outdoor_temp,
            &self.prev_action(i, interval_min).levels(),
            minutes.max(0) as u32,
            start_hour,
        )
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(log_columns())?;
        for r in &self.rows {
            wr.write_record(r.record())?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parses and validates a log, keeping only rows on control-step
    /// boundaries (`interval_min` minutes).
    pub fn read_csv<R: Read>(reader: R, interval_min: u32) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rd.headers()?.clone();
        let expected = log_columns();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (pos, name) in header.iter().enumerate() {
            if !expected.iter().any(|e| e == name) {
                return Err(Error::Log {
                    row: 0,
                    column: name.to_string(),
                    message: "unknown column".into(),
                });
            }
            if index.insert(name, pos).is_some() {
                return Err(Error::Log {
                    row: 0,
                    column: name.to_string(),
                    message: "duplicate column".into(),
                });
            }
        }
        if let Some(missing) = expected.iter().find(|e| !index.contains_key(e.as_str())) {
            return Err(Error::Log {
                row: 0,
                column: missing.clone(),
                message: "missing column".into(),
            });
        }

        let mut rows: Vec<LogRow> = Vec::new();
        for (n, rec) in rd.records().enumerate() {
            let row_no = n + 1;
            let rec = rec?;
            let field = |name: &str| -> &str { rec.get(index[name]).unwrap_or("") };
            let err = |column: &str, message: String| Error::Log {
                row: row_no,
                column: column.to_string(),
                message,
            };
            let float = |name: &str| -> Result<f64> {
                let raw = field(name);
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(name, format!("cannot parse `{raw}` as a number")))
            };
            let zone_floats = |prefix: &str| -> Result<[f64; ZONES]> {
                let mut a = [0.0; ZONES];
                for (j, v) in a.iter_mut().enumerate() {
                    *v = float(&format!("{prefix}_{}", j + 1))?;
                }
                Ok(a)
            };
            let ts_raw = field("timestamp");
            let timestamp = NaiveDateTime::parse_from_str(ts_raw, TIMESTAMP_FORMAT)
                .map_err(|e| err("timestamp", format!("cannot parse `{ts_raw}`: {e}")))?;
            let mut fcu_fan = [0u8; ZONES];
            let mut occupant_num = [0u32; ZONES];
            for j in 0..ZONES {
                let name = format!("FCU_fan_{}", j + 1);
                let raw = field(&name);
                fcu_fan[j] = raw
                    .parse::<u8>()
                    .ok()
                    .filter(|&l| l <= 3)
                    .ok_or_else(|| err(&name, format!("`{raw}` is not a fan level in 0..=3")))?;
                let name = format!("occupant_num_{}", j + 1);
                let raw = field(&name);
                occupant_num[j] = raw
                    .parse::<u32>()
                    .map_err(|_| err(&name, format!("`{raw}` is not a non-negative integer")))?;
            }
            if let Some(prev) = rows.last() {
                if timestamp <= prev.timestamp {
                    return Err(err("timestamp", "timestamps must be strictly increasing".into()));
                }
            }
            let row = LogRow {
                timestamp,
                outdoor_temp: float("outdoor_temp")?,
                zone_temp: zone_floats("zone_temp")?,
                fcu_fan,
                supply_temp: zone_floats("supply_temp")?,
                return_temp: zone_floats("return_temp")?,
                supply_pressure: zone_floats("supply_pressure")?,
                return_pressure: zone_floats("return_pressure")?,
                occupant_num,
            };
            rows.push(row);
        }
        rows.retain(|r| r.timestamp.second() == 0 && r.timestamp.minute() % interval_min == 0);
        Ok(Self { rows })
    }
}

/// Loads a log file sampled at 5-minute control steps.
pub fn load_historical(path: &Path) -> Result<HistoricalLog> {
    let f = std::fs::File::open(path)?;
    HistoricalLog::read_csv(std::io::BufReader::new(f), 5)
}
