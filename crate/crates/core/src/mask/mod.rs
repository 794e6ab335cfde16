//! State-dependent action pruning.
//!
//! A provider maps the recent state history to one non-empty set of fan
//! levels per zone. The joint mask over all 4^7 actions is the Cartesian
//! product of those sets.

mod cache;
mod knn;
mod prompt;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheConfig, CacheKey, CachedProvider};
pub use knn::{knn_feasible_sets, weighted_distance, KnnDataset, KnnOracle, MaskProviderConfig};
pub use prompt::{
    export_sft_dataset, parse_recommendations, parse_recommendations_lenient, recommendations_json,
    serialize_prompt, states_from_log, PromptedProvider, SftRecord, WINDOW,
};

use crate::env::{BuildingState, JointAction, NUM_ACTIONS};
use crate::equipment::LEVELS;
use crate::error::{Error, Result};
use crate::scenario::ZONES;

const FULL_LEVELS: u8 = (1 << LEVELS) - 1;
const WORDS: usize = NUM_ACTIONS / 64;

/// Per-zone feasible fan levels, each stored as a 4-bit set.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeasibleSets([u8; ZONES]);

impl FeasibleSets {
    pub fn full() -> Self {
        Self([FULL_LEVELS; ZONES])
    }

    /// Builds sets from per-zone bit patterns (bit `l` = level `l` allowed).
    pub fn from_bits(bits: [u8; ZONES]) -> Result<Self> {
        for (j, &b) in bits.iter().enumerate() {
            if b == 0 || b > FULL_LEVELS {
                return Err(Error::invalid(format!("zone {} has an invalid level set {b:#06b}", j + 1)));
            }
        }
        Ok(Self(bits))
    }

    pub fn from_lists(lists: &[Vec<u8>]) -> Result<Self> {
        if lists.len() != ZONES {
            return Err(Error::invalid(format!("expected {ZONES} level lists, got {}", lists.len())));
        }
        let mut bits = [0u8; ZONES];
        for (j, list) in lists.iter().enumerate() {
            for &l in list {
                if l as usize >= LEVELS {
                    return Err(Error::invalid(format!("zone {} level {l} outside 0..=3", j + 1)));
                }
                bits[j] |= 1 << l;
            }
        }
        Self::from_bits(bits)
    }

    pub fn bits(&self) -> [u8; ZONES] {
        self.0
    }

    pub fn contains(&self, zone: usize, level: u8) -> bool {
        (level as usize) < LEVELS && self.0[zone] & (1 << level) != 0
    }

    pub fn levels(&self, zone: usize) -> Vec<u8> {
        (0..LEVELS as u8).filter(|&l| self.contains(zone, l)).collect()
    }

    pub fn to_lists(&self) -> Vec<Vec<u8>> {
        (0..ZONES).map(|j| self.levels(j)).collect()
    }

    pub fn size(&self, zone: usize) -> usize {
        self.0[zone].count_ones() as usize
    }

    pub fn joint_count(&self) -> usize {
        (0..ZONES).map(|j| self.size(j)).product()
    }

    pub fn allows(&self, action: JointAction) -> bool {
        (0..ZONES).all(|j| self.contains(j, action.level(j)))
    }

    /// The `r`-th allowed joint action in increasing flat-index order.
    pub fn nth_action(&self, mut r: usize) -> Option<JointAction> {
        if r >= self.joint_count() {
            return None;
        }
        let mut levels = [0u8; ZONES];
        for (j, slot) in levels.iter_mut().enumerate() {
            let allowed = self.levels(j);
            *slot = allowed[r % allowed.len()];
            r /= allowed.len();
        }
        JointAction::from_levels(&levels).ok()
    }

    /// Allowed flat action indices in increasing order, enumerated from the
    /// product directly instead of testing every index.
    pub fn actions(&self) -> impl Iterator<Item = usize> {
        let lists: [Vec<u8>; ZONES] = std::array::from_fn(|j| self.levels(j));
        let mut digits = Some([0usize; ZONES]);
        std::iter::from_fn(move || {
            let d = digits.as_mut()?;
            let index = (0..ZONES).rev().fold(0, |acc, j| acc * LEVELS + lists[j][d[j]] as usize);
            // zone 1 is the least significant digit
            let mut j = 0;
            loop {
                if j == ZONES {
                    digits = None;
                    break;
                }
                d[j] += 1;
                if d[j] < lists[j].len() {
                    break;
                }
                d[j] = 0;
                j += 1;
            }
            Some(index)
        })
    }

    /// Number of zone levels excluded across all zones.
    pub fn pruned_levels(&self) -> usize {
        ZONES * LEVELS - (0..ZONES).map(|j| self.size(j)).sum::<usize>()
    }
}

impl fmt::Debug for FeasibleSets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_lists()).finish()
    }
}

/// Indicator over all joint actions.
#[derive(Clone, PartialEq, Eq)]
pub struct ActionMask {
    bits: Box<[u64; WORDS]>,
    count: usize,
}

impl fmt::Debug for ActionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ActionMask({} of {NUM_ACTIONS})", self.count)
    }
}

impl ActionMask {
    pub fn all() -> Self {
        Self {
            bits: Box::new([u64::MAX; WORDS]),
            count: NUM_ACTIONS,
        }
    }

    pub fn from_sets(sets: &FeasibleSets) -> Self {
        if *sets == FeasibleSets::full() {
            return Self::all();
        }
        let mut bits = Box::new([0u64; WORDS]);
        let mut count = 0;
        for index in sets.actions() {
            bits[index / 64] |= 1 << (index % 64);
            count += 1;
        }
        Self { bits, count }
    }

    pub fn contains(&self, index: usize) -> bool {
        index < NUM_ACTIONS && self.bits[index / 64] & (1 << (index % 64)) != 0
    }

    /// Number of allowed actions (population count).
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.bits[..]
    }

    /// Allowed action indices in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &word)| {
            let mut x = word;
            std::iter::from_fn(move || {
                if x == 0 {
                    None
                } else {
                    let b = x.trailing_zeros() as usize;
                    x &= x - 1;
                    Some(w * 64 + b)
                }
            })
        })
    }

    /// The `r`-th allowed index in increasing order.
    pub fn nth(&self, mut r: usize) -> Option<usize> {
        for (w, &word) in self.bits.iter().enumerate() {
            let c = word.count_ones() as usize;
            if r < c {
                let mut x = word;
                for _ in 0..r {
                    x &= x - 1;
                }
                return Some(w * 64 + x.trailing_zeros() as usize);
            }
            r -= c;
        }
        None
    }
}

pub fn joint_mask(sets: &FeasibleSets) -> ActionMask {
    ActionMask::from_sets(sets)
}

/// Share of the joint action space left by a mask, %.
pub fn remaining_percentage(mask: &ActionMask) -> f64 {
    mask.count() as f64 / NUM_ACTIONS as f64 * 100.0
}

/// Produces feasible sets from the state history; the last entry is the
/// current state.
pub trait MaskProvider: Send + Sync {
    fn feasible_sets(&self, history: &[BuildingState]) -> Result<FeasibleSets>;

    fn name(&self) -> &str;
}

/// Allows every action; turns masked training into vanilla DQN.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullMaskProvider;

impl MaskProvider for FullMaskProvider {
    fn feasible_sets(&self, _history: &[BuildingState]) -> Result<FeasibleSets> {
        Ok(FeasibleSets::full())
    }

    fn name(&self) -> &str {
        "full"
    }
}

/// Ways a recommendation document can fail validation.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecommendationError {
    #[error("malformed recommendation document: {0}")]
    Malformed(String),
    #[error("recommendations lack zone_{0}")]
    MissingZone(usize),
    #[error("zone_{0} has an empty level set")]
    EmptySet(usize),
    #[error("zone_{zone} recommends level {level}, outside 0..=3")]
    LevelOutOfRange { zone: usize, level: i64 },
}
