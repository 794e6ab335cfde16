//! Control policies used for evaluation: the greedy learner and the baselines.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{greedy_action, QNetwork, MASK_PENALTY};
use crate::env::{raw_features, BehaviorPolicy, BuildingState, FeatureScaler, JointAction, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::mask::{ActionMask, FeasibleSets};
use crate::scenario::{Scenario, ZONES};

pub trait Policy {
    fn name(&self) -> &str;

    /// Chooses an action; `sets` are the current feasible sets when a mask
    /// source is active.
    fn act(&mut self, state: &BuildingState, sets: Option<&FeasibleSets>) -> Result<JointAction>;
}

/// Greedy (ε = 0) policy of a trained network.
#[derive(Debug, Clone)]
pub struct GreedyQ {
    net: QNetwork,
    scaler: FeatureScaler,
    start_hour: u32,
    name: String,
}

impl GreedyQ {
    pub fn new(net: QNetwork, scenario: &Scenario, name: impl Into<String>) -> Result<Self> {
        if net.output_dim() != NUM_ACTIONS {
            return Err(Error::invalid(format!("network has {} outputs, expected {NUM_ACTIONS}", net.output_dim())));
        }
        Ok(Self {
            net,
            scaler: FeatureScaler::for_scenario(scenario),
            start_hour: scenario.simulation.start_hour,
            name: name.into(),
        })
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }
}

impl Policy for GreedyQ {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, state: &BuildingState, sets: Option<&FeasibleSets>) -> Result<JointAction> {
        let x = self.scaler.transform(&raw_features(state, self.start_hour));
        let q = self.net.forward(&x)?;
        let mask = sets.map(ActionMask::from_sets);
        JointAction::from_index(greedy_action(&q, mask.as_ref(), MASK_PENALTY)?)
    }
}

/// Uniform over all 16384 joint actions.
#[derive(Debug, Clone)]
pub struct FullRandom {
    rng: ChaCha8Rng,
}

impl FullRandom {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for FullRandom {
    fn name(&self) -> &str {
        "full_random"
    }

    fn act(&mut self, _state: &BuildingState, _sets: Option<&FeasibleSets>) -> Result<JointAction> {
        JointAction::from_index(self.rng.random_range(0..NUM_ACTIONS))
    }
}

/// Uniform over the joint actions allowed by the current feasible sets.
#[derive(Debug, Clone)]
pub struct MaskedRandom {
    rng: ChaCha8Rng,
}

impl MaskedRandom {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for MaskedRandom {
    fn name(&self) -> &str {
        "masked_random"
    }

    fn act(&mut self, _state: &BuildingState, sets: Option<&FeasibleSets>) -> Result<JointAction> {
        let sets = sets.ok_or_else(|| Error::invalid("masked_random needs a mask source"))?;
        let r = self.rng.random_range(0..sets.joint_count());
        Ok(sets.nth_action(r).expect("r is below the joint count"))
    }
}

/// The demonstration behaviour policy without noise.
#[derive(Debug, Clone)]
pub struct RuleBased {
    policy: BehaviorPolicy,
}

impl RuleBased {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            policy: BehaviorPolicy::new(scenario.behavior.clone()),
        }
    }
}

impl Policy for RuleBased {
    fn name(&self) -> &str {
        "rule_based"
    }

    fn act(&mut self, state: &BuildingState, _sets: Option<&FeasibleSets>) -> Result<JointAction> {
        Ok(self.policy.act(state))
    }
}

/// Rule levels moved to the nearest feasible level of each zone (ties go to
/// the lower level). Deterministic, so repeated days revisit the same states.
#[derive(Debug, Clone)]
pub struct MaskedRule {
    policy: BehaviorPolicy,
}

impl MaskedRule {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            policy: BehaviorPolicy::new(scenario.behavior.clone()),
        }
    }
}

impl Policy for MaskedRule {
    fn name(&self) -> &str {
        "masked_rule"
    }

    fn act(&mut self, state: &BuildingState, sets: Option<&FeasibleSets>) -> Result<JointAction> {
        let mut levels = self.policy.levels(state);
        if let Some(s) = sets {
            for (j, l) in levels.iter_mut().enumerate().take(ZONES) {
                *l = s
                    .levels(j)
                    .into_iter()
                    .min_by_key(|&c| (c.abs_diff(*l), c))
                    .expect("feasible sets are non-empty");
            }
        }
        JointAction::from_levels(&levels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    FullRandom,
    MaskedRandom,
    RuleBased,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::FullRandom, PolicyKind::MaskedRandom, PolicyKind::RuleBased];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::FullRandom => "full_random",
            PolicyKind::MaskedRandom => "masked_random",
            PolicyKind::RuleBased => "rule_based",
        }
    }

    pub fn needs_mask(self) -> bool {
        self == PolicyKind::MaskedRandom
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown policy kind '{s}' (expected full_random, masked_random or rule_based)")))
    }
}

/// Baseline policy by name.
pub fn baseline_policy(kind: &str, scenario: &Scenario, seed: u64) -> Result<Box<dyn Policy>> {
    Ok(match kind.parse::<PolicyKind>()? {
        PolicyKind::FullRandom => Box::new(FullRandom::new(seed)),
        PolicyKind::MaskedRandom => Box::new(MaskedRandom::new(seed)),
        PolicyKind::RuleBased => Box::new(RuleBased::new(scenario)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Environment;

    fn state() -> BuildingState {
        Environment::new(Scenario::default()).unwrap().reset(1)
    }

    #[test]
    fn full_random_covers_the_space() {
        let mut p = FullRandom::new(0);
        let s = state();
        let mut seen = vec![false; NUM_ACTIONS];
        for _ in 0..100_000 {
            seen[p.act(&s, None).unwrap().index()] = true;
        }
        let covered = seen.iter().filter(|&&b| b).count() as f64 / NUM_ACTIONS as f64;
        // expected coverage 1 − e^(−100000/16384) ≈ 0.9978
        assert!(covered > 0.99, "coverage {covered}");
    }

    #[test]
    fn masked_random_stays_inside_the_mask() {
        let mut p = MaskedRandom::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = state();
        for _ in 0..10_000 {
            let sets = FeasibleSets::from_bits(std::array::from_fn(|_| rng.random_range(1u8..16))).unwrap();
            assert!(sets.allows(p.act(&s, Some(&sets)).unwrap()));
        }
        assert!(p.act(&s, None).is_err());
    }

    #[test]
    fn rule_based_is_off_in_vacant_zones() {
        let sc = Scenario::default();
        let mut env = Environment::new(sc.clone()).unwrap();
        let mut p = RuleBased::new(&sc);
        let mut s = env.reset(3);
        let mut vacant = 0;
        while !env.is_done() {
            let a = p.act(&s, None).unwrap();
            for j in 0..ZONES {
                if s.occupancy[j] == 0 {
                    vacant += 1;
                    assert_eq!(a.level(j), 0);
                }
            }
            s = env.step(a).unwrap().state;
        }
        assert!(vacant > 0);
    }

    #[test]
    fn masked_rule_projects_to_nearest_level() {
        let sc = Scenario::default();
        let mut s = state();
        s.occupancy = [2; ZONES];
        s.zone_temps_c = [27.5; ZONES];
        let mut p = MaskedRule::new(&sc);
        assert_eq!(p.act(&s, None).unwrap().levels(), [3; ZONES]);
        let sets = FeasibleSets::from_bits([0b0011, 0b0101, 0b1000, 0b0110, 0b0001, 0b1111, 0b0100]).unwrap();
        assert_eq!(p.act(&s, Some(&sets)).unwrap().levels(), [1, 2, 3, 2, 0, 3, 2]);
    }

    #[test]
    fn policy_kinds() {
        let sc = Scenario::default();
        for k in PolicyKind::ALL {
            assert_eq!(k.to_string().parse::<PolicyKind>().unwrap(), k);
            assert_eq!(baseline_policy(k.as_str(), &sc, 0).unwrap().name(), k.as_str());
        }
        assert!(baseline_policy("ppo", &sc, 0).is_err());
    }
}
