//! Nearest-neighbour feasible sets mined from a demonstration log.

use serde::{Deserialize, Serialize};

use super::{FeasibleSets, MaskProvider};
use crate::env::{raw_features, BuildingState, FeatureScaler, Features, HistoricalLog, JointAction, FEATURE_DIM};
use crate::equipment::LEVELS;
use crate::error::{Error, Result};
use crate::scenario::{Scenario, ZONES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskProviderConfig {
    /// Neighbourhood size.
    pub k: usize,
    /// Minimum neighbourhood frequency for a level to stay feasible.
    pub tau: f64,
    /// Per-feature distance weights; empty means all ones.
    pub feature_weights: Vec<f64>,
}

impl Default for MaskProviderConfig {
    fn default() -> Self {
        Self {
            k: 50,
            tau: 0.05,
            feature_weights: Vec::new(),
        }
    }
}

impl MaskProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0 / LEVELS as f64) {
            return Err(Error::config(format!("tau {} outside (0, 0.25]", self.tau)));
        }
        if !self.feature_weights.is_empty() {
            if self.feature_weights.len() != FEATURE_DIM {
                return Err(Error::config(format!(
                    "{} feature weights given, {FEATURE_DIM} expected",
                    self.feature_weights.len()
                )));
            }
            if self.feature_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::config("feature weights must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        if self.feature_weights.is_empty() {
            vec![1.0; FEATURE_DIM]
        } else {
            self.feature_weights.clone()
        }
    }
}

/// `sqrt(Σ w_q (a_q − b_q)²)`.
pub fn weighted_distance(a: &[f64], b: &[f64], weights: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != weights.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {} with {} weights",
            a.len(),
            b.len(),
            weights.len()
        )));
    }
    Ok(distance(a, b, weights))
}

fn distance(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Scaled feature rows paired with the joint action taken in each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnnDataset {
    pub features: Vec<Features>,
    pub actions: Vec<JointAction>,
}

impl KnnDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Level frequencies over the `k` rows nearest to `query`, thresholded at τ.
/// Ties at equal distance go to the earlier row.
pub fn knn_feasible_sets(dataset: &KnnDataset, query: &[f64], config: &MaskProviderConfig) -> Result<FeasibleSets> {
    if dataset.is_empty() {
        return Err(Error::invalid("kNN dataset is empty"));
    }
    let k = config.k;
    if k == 0 || k > dataset.len() {
        return Err(Error::invalid(format!("k = {k} but the dataset has {} rows", dataset.len())));
    }
    let weights = config.weights();
    if query.len() != FEATURE_DIM || weights.len() != FEATURE_DIM {
        return Err(Error::invalid(format!("query has {} features, {FEATURE_DIM} expected", query.len())));
    }
    let mut scored: Vec<(f64, u32)> = dataset
        .features
        .iter()
        .enumerate()
        .map(|(i, row)| (distance(row, query, &weights), i as u32))
        .collect();
    let order = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, order);
    }
    let mut counts = [[0usize; LEVELS]; ZONES];
    for &(_, i) in &scored[..k] {
        let a = dataset.actions[i as usize];
        for (j, c) in counts.iter_mut().enumerate() {
            c[a.level(j) as usize] += 1;
        }
    }
    let mut bits = [0u8; ZONES];
    for j in 0..ZONES {
        for l in 0..LEVELS {
            if counts[j][l] as f64 / k as f64 >= config.tau {
                bits[j] |= 1 << l;
            }
        }
    }
    FeasibleSets::from_bits(bits).map_err(|_| {
        Error::Numerical("a zone ended with no feasible level; tau must not exceed 0.25".into())
    })
}

/// Read-only kNN provider over a demonstration log. Features are min-max
/// scaled with bounds fitted on the log itself.
#[derive(Debug, Clone)]
pub struct KnnOracle {
    dataset: KnnDataset,
    scaler: FeatureScaler,
    config: MaskProviderConfig,
    start_hour: u32,
}

impl KnnOracle {
    pub fn from_log(log: &HistoricalLog, scenario: &Scenario, config: MaskProviderConfig) -> Result<Self> {
        config.validate()?;
        let sim = &scenario.simulation;
        let raw: Vec<Features> = (0..log.len())
            .map(|i| log.raw_features(i, sim.start_hour, sim.control_interval_min))
            .collect();
        if raw.len() < config.k {
            return Err(Error::invalid(format!(
                "demonstration log has {} rows, fewer than k = {}",
                raw.len(),
                config.k
            )));
        }
        let scaler = FeatureScaler::fit(&raw)?;
        let features = raw.iter().map(|r| scaler.transform(r)).collect();
        let actions = log.rows.iter().map(|r| r.action()).collect();
        Ok(Self {
            dataset: KnnDataset { features, actions },
            scaler,
            config,
            start_hour: sim.start_hour,
        })
    }

    pub fn dataset(&self) -> &KnnDataset {
        &self.dataset
    }

    pub fn config(&self) -> &MaskProviderConfig {
        &self.config
    }

    pub fn scaler(&self) -> &FeatureScaler {
        &self.scaler
    }

    pub fn query_features(&self, state: &BuildingState) -> Features {
        self.scaler.transform(&raw_features(state, self.start_hour))
    }

    pub fn sets_for_state(&self, state: &BuildingState) -> Result<FeasibleSets> {
        knn_feasible_sets(&self.dataset, &self.query_features(state), &self.config)
    }
}

impl MaskProvider for KnnOracle {
    fn feasible_sets(&self, history: &[BuildingState]) -> Result<FeasibleSets> {
        let state = history
            .last()
            .ok_or_else(|| Error::invalid("mask query needs at least the current state"))?;
        self.sets_for_state(state)
    }

    fn name(&self) -> &str {
        "knn"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset_with(levels: impl Fn(usize) -> [u8; ZONES], n: usize) -> KnnDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        KnnDataset {
            features: (0..n).map(|_| std::array::from_fn(|_| rng.random())).collect(),
            actions: (0..n).map(|i| JointAction::from_levels(&levels(i)).unwrap()).collect(),
        }
    }

    #[test]
    fn distance_examples() {
        let w = [1.0; 3];
        assert_eq!(weighted_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &w).unwrap(), 0.0);
        assert_eq!(weighted_distance(&[3.0, 4.0, 0.0], &[0.0, 0.0, 0.0], &w).unwrap(), 5.0);
        assert_eq!(
            weighted_distance(&[3.0, 4.0, 100.0], &[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0]).unwrap(),
            5.0
        );
        assert!(weighted_distance(&[1.0], &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn unanimous_neighbours_give_singleton() {
        let ds = dataset_with(|_| [2, 0, 0, 0, 0, 0, 0], 80);
        let s = knn_feasible_sets(&ds, &[0.5; FEATURE_DIM], &MaskProviderConfig::default()).unwrap();
        assert_eq!(s.levels(0), vec![2]);
    }

    #[test]
    fn uniform_neighbours_keep_all_levels() {
        let ds = dataset_with(|i| [(i % 4) as u8; ZONES], 200);
        let cfg = MaskProviderConfig {
            k: 200,
            ..MaskProviderConfig::default()
        };
        let s = knn_feasible_sets(&ds, &[0.5; FEATURE_DIM], &cfg).unwrap();
        assert_eq!(s, FeasibleSets::full());
    }

    #[test]
    fn ties_prefer_earlier_rows() {
        let ds = KnnDataset {
            features: vec![[0.0; FEATURE_DIM]; 4],
            actions: [1u8, 2, 3, 0]
                .iter()
                .map(|&l| JointAction::from_levels(&[l; ZONES]).unwrap())
                .collect(),
        };
        let cfg = MaskProviderConfig {
            k: 2,
            tau: 0.25,
            ..MaskProviderConfig::default()
        };
        let s = knn_feasible_sets(&ds, &[0.0; FEATURE_DIM], &cfg).unwrap();
        assert_eq!(s.levels(3), vec![1, 2]);
    }

    #[test]
    fn errors() {
        let empty = KnnDataset::default();
        assert!(knn_feasible_sets(&empty, &[0.0; FEATURE_DIM], &MaskProviderConfig::default()).is_err());
        let small = dataset_with(|_| [0; ZONES], 10);
        assert!(knn_feasible_sets(&small, &[0.0; FEATURE_DIM], &MaskProviderConfig::default()).is_err());
        assert!(MaskProviderConfig { tau: 0.3, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn smaller_tau_never_shrinks_sets() {
        let ds = dataset_with(|i| std::array::from_fn(|j| ((i * (j + 3) / 7) % 4) as u8), 300);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let q: Features = std::array::from_fn(|_| rng.random());
            let big = knn_feasible_sets(&ds, &q, &MaskProviderConfig { tau: 0.2, ..Default::default() }).unwrap();
            let small = knn_feasible_sets(&ds, &q, &MaskProviderConfig { tau: 0.04, ..Default::default() }).unwrap();
            for j in 0..ZONES {
                assert_eq!(big.bits()[j] & !small.bits()[j], 0);
            }
        }
    }
}
