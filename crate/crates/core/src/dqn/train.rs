//! Episodic training loop: query the feasible sets, act ε-greedily, store the
//! transition with the next state's sets, and learn from uniform replay.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{select_action, Learner, QNetwork, ReplayBuffer, TrainConfig, Transition};
use crate::env::{derive_seed, raw_features, BuildingState, Environment, FeatureScaler, Features, JointAction};
use crate::error::{Error, Result};
use crate::mask::{ActionMask, FeasibleSets, MaskProvider, WINDOW};

/// Stream for the learner's own randomness, kept apart from day sampling.
const LEARNER_STREAM: u64 = 0x7172_6e67;

/// Source of feasible sets during training.
#[derive(Clone, Copy)]
pub enum Masking<'a> {
    Provider(&'a dyn MaskProvider),
    /// No mask is formed anywhere; the plain DQN code path.
    Disabled,
}

impl Masking<'_> {
    pub fn name(&self) -> &str {
        match self {
            Masking::Provider(p) => p.name(),
            Masking::Disabled => "disabled",
        }
    }

    fn sets(&self, history: &[BuildingState]) -> Result<Option<FeasibleSets>> {
        match self {
            Masking::Provider(p) => {
                let start = history.len().saturating_sub(WINDOW);
                p.feasible_sets(&history[start..]).map(Some)
            }
            Masking::Disabled => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    /// Unscaled return.
    pub reward: f64,
    /// Mean over occupied steps, %.
    pub ppd_mean: f64,
    pub energy_kwh: f64,
    /// Mean remaining share of the action space, % (100 without masking).
    pub remaining_avg_pct: f64,
    pub epsilon: f64,
    /// Mean TD loss of the episode's gradient steps.
    pub loss_mean: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    pub network: QNetwork,
    pub curve: Vec<EpisodeStats>,
    pub gradient_steps: u64,
    pub target_syncs: u64,
}

impl TrainOutcome {
    pub fn rewards(&self) -> Vec<f64> {
        self.curve.iter().map(|e| e.reward).collect()
    }
}

/// Trains one agent. Episode `e` replays the day `derive_seed(seed, e)`, so
/// runs that differ only in masking see the same days. `on_episode` is called
/// after every episode with the running online network.
pub fn train(
    env: &mut Environment,
    masking: Masking<'_>,
    config: &TrainConfig,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeStats, &QNetwork) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let scenario = env.scenario().clone();
    let start_hour = scenario.simulation.start_hour;
    let steps_per_episode = scenario.simulation.episode_steps;
    let total_steps = config.episodes * steps_per_episode;
    let scaler = FeatureScaler::for_scenario(&scenario);
    let features = |s: &BuildingState| -> Features { scaler.transform(&raw_features(s, start_hour)) };

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, LEARNER_STREAM));
    let net = QNetwork::new(&config.layer_sizes(), &mut rng)?;
    let masked = matches!(masking, Masking::Provider(_));
    let mut learner = Learner::new(net, config, masked)?;
    let mut replay = ReplayBuffer::new(config.replay_capacity)?;
    let mut curve = Vec::with_capacity(config.episodes);
    let mut global_step = 0usize;

    for episode in 0..config.episodes {
        let state = env.reset(derive_seed(seed, episode as u64));
        let mut history = vec![state.clone()];
        let mut sets = masking.sets(&history)?;
        let mut x = features(&state);
        let (mut ret, mut energy, mut ppd_sum, mut occupied, mut remaining) = (0.0, 0.0, 0.0, 0usize, 0.0);
        let (mut loss_sum, mut losses) = (0.0, 0usize);
        let mut epsilon;
        loop {
            epsilon = config.epsilon(global_step, total_steps);
            let mask = sets.as_ref().map(ActionMask::from_sets);
            remaining += mask.as_ref().map_or(100.0, crate::mask::remaining_percentage);
            let a = select_action(learner.online(), &x, mask.as_ref(), epsilon, config.mask_penalty, &mut rng)?;
            let action = JointAction::from_index(a)?;
            if let Some(s) = &sets {
                if !s.allows(action) {
                    return Err(Error::invalid(format!("action {a} emitted outside the feasible sets")));
                }
            }
            let out = env.step(action)?;
            ret += out.reward;
            energy += out.info.energy_kwh;
            if out.info.metrics.occupants_total > 0 {
                ppd_sum += out.info.metrics.ppd_mean_pct;
                occupied += 1;
            }
            history.push(out.state.clone());
            let next_sets = if out.done { None } else { masking.sets(&history)? };
            let next_x = features(&out.state);
            replay.push(Transition {
                features: x,
                action: a,
                reward: out.reward * config.reward_scale,
                next_features: next_x,
                done: out.done,
                next_sets: next_sets.unwrap_or_else(FeasibleSets::full),
            })?;
            global_step += 1;
            if global_step % config.train_every == 0 && replay.len() >= config.warmup.max(config.batch_size) {
                let batch = replay.sample(config.batch_size, &mut rng)?;
                loss_sum += learner.update(&batch)?;
                losses += 1;
            }
            if out.done {
                break;
            }
            sets = next_sets;
            x = next_x;
        }
        let stats = EpisodeStats {
            episode,
            reward: ret,
            ppd_mean: if occupied > 0 { ppd_sum / occupied as f64 } else { 0.0 },
            energy_kwh: energy,
            remaining_avg_pct: remaining / steps_per_episode as f64,
            epsilon,
            loss_mean: (losses > 0).then(|| loss_sum / losses as f64),
        };
        log::debug!(
            "seed {seed} episode {episode}: return {:.1}, PPD {:.2}%, eps {:.3}",
            stats.reward,
            stats.ppd_mean,
            stats.epsilon
        );
        on_episode(&stats, learner.online())?;
        curve.push(stats);
    }
    let gradient_steps = learner.gradient_steps();
    let target_syncs = learner.target_syncs();
    Ok(TrainOutcome {
        seed,
        network: learner.into_online(),
        curve,
        gradient_steps,
        target_syncs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::FullMaskProvider;
    use crate::scenario::Scenario;

    fn tiny() -> TrainConfig {
        TrainConfig {
            episodes: 3,
            hidden_layers: vec![16],
            warmup: 64,
            batch_size: 16,
            target_update_every: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn reproducible_and_mask_free_equivalent() {
        let mut env = Environment::new(Scenario::default()).unwrap();
        let a = train(&mut env, Masking::Provider(&FullMaskProvider), &tiny(), 4, |_, _| Ok(())).unwrap();
        let b = train(&mut env, Masking::Provider(&FullMaskProvider), &tiny(), 4, |_, _| Ok(())).unwrap();
        let c = train(&mut env, Masking::Disabled, &tiny(), 4, |_, _| Ok(())).unwrap();
        let bits = |o: &TrainOutcome| o.rewards().iter().map(|r| r.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(bits(&a), bits(&c));
        assert_eq!(a.network, c.network);
        assert_eq!(a.curve.len(), 3);
        assert!(a.gradient_steps > 0);
        assert!(a.target_syncs > 0);
    }

    #[test]
    fn callback_errors_abort() {
        let mut env = Environment::new(Scenario::default()).unwrap();
        let r = train(&mut env, Masking::Disabled, &tiny(), 0, |_, _| Err(Error::invalid("stop")));
        assert!(r.is_err());
    }
}
