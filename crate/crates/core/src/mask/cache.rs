//! Memoised provider keyed on a discretised state.
//!
//! A miss evaluates the wrapped provider on the bucket representative of the
//! query (bucket midpoints for the continuous coordinates), so a cached
//! answer depends on the key alone and never on which state filled the slot.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::{FeasibleSets, MaskProvider};
use crate::env::BuildingState;
use crate::error::{Error, Result};
use crate::scenario::ZONES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub temp_step_c: f64,
    pub outdoor_step_c: f64,
    pub clock_bucket_min: u32,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            temp_step_c: 0.5,
            outdoor_step_c: 1.0,
            clock_bucket_min: 30,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temp_step_c > 0.0 && self.outdoor_step_c > 0.0) || self.clock_bucket_min == 0 {
            return Err(Error::config("cache bucket sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub temps: [i64; ZONES],
    pub outdoor: i64,
    pub occupancy: [u32; ZONES],
    pub prev_action: u16,
    pub clock_bucket: u32,
}

pub struct CachedProvider<P> {
    inner: P,
    config: CacheConfig,
    map: RwLock<HashMap<CacheKey, FeasibleSets>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<P: MaskProvider> CachedProvider<P> {
    pub fn new(inner: P, config: CacheConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            inner,
            config,
            map: RwLock::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn key(&self, s: &BuildingState) -> CacheKey {
        let c = &self.config;
        CacheKey {
            temps: s.zone_temps_c.map(|t| (t / c.temp_step_c).floor() as i64),
            outdoor: (s.outdoor_temp_c / c.outdoor_step_c).floor() as i64,
            occupancy: s.occupancy,
            prev_action: s.prev_action.index() as u16,
            clock_bucket: s.clock_min / c.clock_bucket_min,
        }
    }

    /// State at the centre of the query's bucket.
    pub fn representative(&self, s: &BuildingState) -> BuildingState {
        let c = &self.config;
        let k = self.key(s);
        let mut r = s.clone();
        for j in 0..ZONES {
            r.zone_temps_c[j] = (k.temps[j] as f64 + 0.5) * c.temp_step_c;
        }
        r.outdoor_temp_c = (k.outdoor as f64 + 0.5) * c.outdoor_step_c;
        r.clock_min = k.clock_bucket * c.clock_bucket_min + c.clock_bucket_min / 2;
        r
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Hits over all lookups, %; zero before the first lookup.
    pub fn hit_rate(&self) -> f64 {
        let (h, m) = (self.hits(), self.misses());
        if h + m == 0 {
            0.0
        } else {
            h as f64 / (h + m) as f64 * 100.0
        }
    }

    pub fn reset_counters(&self) {
        self.hits.store(0, Ordering::Relaxed);
        self.misses.store(0, Ordering::Relaxed);
    }

    pub fn len(&self) -> usize {
        self.map.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<P: MaskProvider> MaskProvider for CachedProvider<P> {
    fn feasible_sets(&self, history: &[BuildingState]) -> Result<FeasibleSets> {
        let state = history
            .last()
            .ok_or_else(|| Error::invalid("mask query needs at least the current state"))?;
        let key = self.key(state);
        if let Some(sets) = self.map.read().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(*sets);
        }
        let mut window = history.to_vec();
        let last = window.len() - 1;
        window[last] = self.representative(state);
        let sets = self.inner.feasible_sets(&window)?;
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.map.write().entry(key).or_insert(sets);
        Ok(sets)
    }

    fn name(&self) -> &str {
        "cached"
    }
}

impl<P: MaskProvider + ?Sized> MaskProvider for Box<P> {
    fn feasible_sets(&self, history: &[BuildingState]) -> Result<FeasibleSets> {
        (**self).feasible_sets(history)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<P: MaskProvider + ?Sized> MaskProvider for std::sync::Arc<P> {
    fn feasible_sets(&self, history: &[BuildingState]) -> Result<FeasibleSets> {
        (**self).feasible_sets(history)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}
