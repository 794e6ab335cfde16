//! Deep Q-learning over the 4^7 joint fan-level space.
//!
//! Invalid actions are suppressed by subtracting a large constant from their
//! Q-values, both when acting and inside the Bellman target. With the
//! all-ones mask every masked operation reduces to its plain counterpart.

mod bench;
mod checkpoint;
mod curve;
mod eval;
mod net;
mod policy;
mod replay;
mod train;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bench::{cache_benchmark, CacheBenchReport, PassTiming};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use curve::{curve_fingerprint, final_mean, mean_std_curve, summarize_curves, trapezoid_auc, CurveSummary};
pub use eval::{eval_day_seed, evaluate, Comparison, EpisodeMetrics, EvalReport, MeanStd, RemainingStats};
pub use net::{Adam, AdamConfig, Dense, Gradients, LayerGradient, QNetwork, RowGradient};
pub use policy::{baseline_policy, FullRandom, GreedyQ, MaskedRandom, MaskedRule, Policy, PolicyKind, RuleBased};
pub use replay::{ReplayBuffer, Transition};
pub use train::{train, EpisodeStats, Masking, TrainOutcome};

use crate::env::{FEATURE_DIM, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::mask::{ActionMask, FeasibleSets};

/// Penalty subtracted from the Q-value of every masked-out action.
pub const MASK_PENALTY: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Transitions collected before the first gradient step.
    pub warmup: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of all environment steps over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Gradient steps between target-network copies.
    pub target_update_every: u64,
    pub mask_penalty: f64,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub hidden_layers: Vec<usize>,
    /// Environment steps per gradient step.
    pub train_every: usize,
    /// Multiplier applied to rewards before they enter the replay buffer.
    pub reward_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 1e-3,
            replay_capacity: 50_000,
            batch_size: 64,
            warmup: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            target_update_every: 500,
            mask_penalty: MASK_PENALTY,
            episodes: 300,
            seeds: vec![0, 1, 2],
            hidden_layers: vec![256, 256],
            train_every: 4,
            reward_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.train_every == 0 {
            return Err(Error::config("replay capacity, batch size and train_every must be positive"));
        }
        if self.target_update_every == 0 || self.episodes == 0 {
            return Err(Error::config("target_update_every and episodes must be positive"));
        }
        let eps = [self.epsilon_start, self.epsilon_end];
        if eps.iter().any(|e| !(0.0..=1.0).contains(e)) || !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return Err(Error::config("epsilon schedule outside [0, 1]"));
        }
        if self.mask_penalty < 1e6 {
            return Err(Error::config("mask penalty must dominate any reachable Q-value (>= 1e6)"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::config("reward scale must be positive"));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![FEATURE_DIM];
        sizes.extend(&self.hidden_layers);
        sizes.push(NUM_ACTIONS);
        sizes
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over the first
    /// `epsilon_decay_fraction` of `total_steps`, then constant.
    pub fn epsilon(&self, step: usize, total_steps: usize) -> f64 {
        let horizon = (self.epsilon_decay_fraction * total_steps as f64).max(1.0);
        let frac = step as f64 / horizon;
        if frac >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// `q − C(1 − m)`.
pub fn masked_q(q: &[f64], mask: &ActionMask, penalty: f64) -> Result<Vec<f64>> {
    if q.len() != NUM_ACTIONS {
        return Err(Error::invalid(format!("{} Q-values for {NUM_ACTIONS} actions", q.len())));
    }
    Ok(q.iter()
        .enumerate()
        .map(|(i, &v)| v - penalty * (1.0 - f64::from(u8::from(mask.contains(i)))))
        .collect())
}

/// `max(q − C(1 − m))` without materialising the masked vector.
fn masked_max(q: &[f64], mask: &ActionMask, penalty: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (chunk, &word) in q.chunks_exact(64).zip(mask.words()) {
        for (b, &v) in chunk.iter().enumerate() {
            let m = ((word >> b) & 1) as f64;
            best = best.max(v - penalty * (1.0 - m));
        }
    }
    best
}

/// Index of the largest value, ties to the lowest index.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    argmax_of(values.enumerate())
}

/// Greedy action under an optional mask.
pub fn greedy_action(q: &[f64], mask: Option<&ActionMask>, penalty: f64) -> Result<usize> {
    match mask {
        Some(m) => {
            if m.count() == 0 {
                return Err(Error::invalid("empty action mask"));
            }
            Ok(argmax(masked_q(q, m, penalty)?.into_iter()))
        }
        None => Ok(argmax(q.iter().copied())),
    }
}

/// ε-greedy selection. With probability ε the action is uniform over the
/// allowed set, otherwise it is the masked argmax. `None` means no masking.
/// Both branches draw from `rng` identically whether or not a mask is given.
pub fn select_action<R: Rng + ?Sized>(
    qnet: &QNetwork,
    features: &[f64],
    mask: Option<&ActionMask>,
    epsilon: f64,
    penalty: f64,
    rng: &mut R,
) -> Result<usize> {
    let count = mask.map_or(NUM_ACTIONS, ActionMask::count);
    if count == 0 {
        return Err(Error::invalid("empty action mask"));
    }
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        let r = rng.random_range(0..count);
        return Ok(match mask {
            Some(m) => m.nth(r).expect("r is below the mask count"),
            None => r,
        });
    }
    match mask {
        // only the allowed output rows can win the masked argmax
        Some(m) if count < NUM_ACTIONS => {
            let x = ArrayView2::from_shape((1, features.len()), features)
                .map_err(|e| Error::invalid(e.to_string()))?;
            let h = qnet.penultimate(x)?;
            Ok(allowed_argmax(qnet, h.row(0), m.iter()))
        }
        _ => {
            let q = qnet.forward(features)?;
            greedy_action(&q, mask, penalty)
        }
    }
}

/// First allowed action with the largest Q-value, evaluating only the output
/// rows of `allowed` (given in increasing order).
fn allowed_argmax(qnet: &QNetwork, h: ArrayView1<f64>, allowed: impl Iterator<Item = usize>) -> usize {
    argmax_of(allowed.map(|a| (a, qnet.action_value(h, a))))
}

fn allowed_max(qnet: &QNetwork, h: ArrayView1<f64>, allowed: impl Iterator<Item = usize>) -> f64 {
    allowed.map(|a| qnet.action_value(h, a)).fold(f64::NEG_INFINITY, f64::max)
}

fn argmax_of(values: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn stack(rows: impl ExactSizeIterator<Item = [f64; FEATURE_DIM]>) -> Array2<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.flatten().collect();
    Array2::from_shape_vec((n, FEATURE_DIM), flat).expect("rows have FEATURE_DIM columns")
}

/// `y = r + (1 − d)·γ·max over the stored next-state sets of Q⁻(s′, ·)`;
/// with `masked = false` the max runs over every action.
///
/// When every live sample has a partial set, only the allowed output rows
/// are evaluated. The penalised actions can never attain the maximum, so the
/// result equals the dense masked max up to rounding. Any full set keeps the
/// dense path, so the all-ones mask reproduces plain DQN bit for bit.
pub fn bellman_target(
    batch: &[&Transition],
    target_net: &QNetwork,
    gamma: f64,
    penalty: f64,
    masked: bool,
) -> Result<Vec<f64>> {
    let next = stack(batch.iter().map(|t| t.next_features));
    let full = FeasibleSets::full();
    let sparse = masked && batch.iter().all(|t| t.done || t.next_sets != full);
    if sparse {
        let h = target_net.penultimate(next.view())?;
        return Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.done {
                    return t.reward;
                }
                t.reward + gamma * allowed_max(target_net, h.row(i), t.next_sets.actions())
            })
            .collect());
    }
    let q = target_net.forward_batch(next.view())?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.done {
                return t.reward;
            }
            let row = q.row(i);
            let row = row.as_slice().expect("standard layout");
            let best = if masked {
                let m = ActionMask::from_sets(&t.next_sets);
                masked_max(row, &m, penalty)
            } else {
                row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            t.reward + gamma * best
        })
        .collect::<Vec<_>>())
}

/// One gradient step on the mean squared TD error. Returns the loss before
/// the step.
pub fn td_update(
    online: &mut QNetwork,
    target_net: &QNetwork,
    optimizer: &mut Adam,
    batch: &[&Transition],
    gamma: f64,
    penalty: f64,
    masked: bool,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    let y = bellman_target(batch, target_net, gamma, penalty, masked)?;
    let x = stack(batch.iter().map(|t| t.features));
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, grads) = online.loss_and_gradients(x.view(), &actions, &y)?;
    if !loss.is_finite() {
        let max_y = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        return Err(Error::Numerical(format!(
            "non-finite TD loss {loss} (max |target| {max_y:.3e}, batch {})",
            batch.len()
        )));
    }
    optimizer.apply(online, &grads)?;
    Ok(loss)
}

/// Online and target networks with their optimiser.
#[derive(Debug, Clone)]
pub struct Learner {
    online: QNetwork,
    target: QNetwork,
    optimizer: Adam,
    gamma: f64,
    penalty: f64,
    masked: bool,
    target_update_every: u64,
    gradient_steps: u64,
    target_syncs: u64,
}

impl Learner {
    pub fn new(net: QNetwork, config: &TrainConfig, masked: bool) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(
            &net,
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
        );
        Ok(Self {
            target: net.clone(),
            online: net,
            optimizer,
            gamma: config.gamma,
            penalty: config.mask_penalty,
            masked,
            target_update_every: config.target_update_every,
            gradient_steps: 0,
            target_syncs: 0,
        })
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn into_online(self) -> QNetwork {
        self.online
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    pub fn target_syncs(&self) -> u64 {
        self.target_syncs
    }

    /// TD step; copies the online network into the target every
    /// `target_update_every` steps.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let loss = td_update(
            &mut self.online,
            &self.target,
            &mut self.optimizer,
            batch,
            self.gamma,
            self.penalty,
            self.masked,
        )?;
        self.gradient_steps += 1;
        if self.gradient_steps % self.target_update_every == 0 {
            self.target.clone_from(&self.online);
            self.target_syncs += 1;
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ZONES;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64) -> QNetwork {
        QNetwork::new(&[FEATURE_DIM, 8, NUM_ACTIONS], &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn singleton(levels: [u8; ZONES]) -> FeasibleSets {
        FeasibleSets::from_bits(levels.map(|l| 1 << l)).unwrap()
    }

    fn transition(rng: &mut ChaCha8Rng, done: bool, next_sets: FeasibleSets) -> Transition {
        Transition {
            features: std::array::from_fn(|_| rng.random()),
            action: rng.random_range(0..NUM_ACTIONS),
            reward: rng.random_range(-1.0..0.0),
            next_features: std::array::from_fn(|_| rng.random()),
            done,
            next_sets,
        }
    }

    #[test]
    fn masked_q_examples() {
        let q: Vec<f64> = (0..NUM_ACTIONS).map(|i| i as f64 + 1.0).collect();
        assert_eq!(masked_q(&q, &ActionMask::all(), MASK_PENALTY).unwrap(), q);

        let mut bits = [0b1111u8; ZONES];
        bits[0] = 0b1011;
        let m = ActionMask::from_sets(&FeasibleSets::from_bits(bits).unwrap());
        let mq = masked_q(&q, &m, MASK_PENALTY).unwrap();
        assert_eq!(mq[2], 3.0 - MASK_PENALTY);
        assert_eq!(mq[1], 2.0);
        assert!(masked_q(&q[..10], &m, MASK_PENALTY).is_err());
    }

    #[test]
    fn singleton_mask_wins_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q: Vec<f64> = (0..NUM_ACTIONS).map(|_| rng.random_range(-1e4..1e4)).collect();
        let sets = singleton([3, 0, 1, 2, 0, 3, 1]);
        let only = sets.nth_action(0).unwrap().index();
        assert_eq!(greedy_action(&q, Some(&ActionMask::from_sets(&sets)), MASK_PENALTY).unwrap(), only);
        let net = small_net(1);
        let a = select_action(&net, &[0.2; FEATURE_DIM], Some(&ActionMask::from_sets(&sets)), 0.0, MASK_PENALTY, &mut rng)
            .unwrap();
        assert_eq!(a, only);
    }

    #[test]
    fn greedy_ties_go_to_lowest_index() {
        let mut q = vec![0.0; NUM_ACTIONS];
        q[7] = 1.0;
        q[9] = 1.0;
        assert_eq!(greedy_action(&q, None, MASK_PENALTY).unwrap(), 7);
    }

    #[test]
    fn exploration_is_uniform_over_allowed_actions() {
        let mut bits = [1u8; ZONES];
        bits[2] = 0b0111;
        let sets = FeasibleSets::from_bits(bits).unwrap();
        let m = ActionMask::from_sets(&sets);
        assert_eq!(m.count(), 3);
        let net = small_net(2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let allowed: Vec<usize> = m.iter().collect();
        let mut counts = [0usize; 3];
        let draws = 10_000;
        for _ in 0..draws {
            let a = select_action(&net, &[0.0; FEATURE_DIM], Some(&m), 1.0, MASK_PENALTY, &mut rng).unwrap();
            counts[allowed.iter().position(|&x| x == a).unwrap()] += 1;
        }
        let e = draws as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99.9% quantile with 2 degrees of freedom
        assert!(chi2 < 13.82, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn selected_actions_respect_random_masks() {
        let net = small_net(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..10_000 {
            let sets = FeasibleSets::from_bits(std::array::from_fn(|_| rng.random_range(1u8..16))).unwrap();
            let m = ActionMask::from_sets(&sets);
            let eps = if i % 2 == 0 { 1.0 } else { 0.0 };
            let f: [f64; FEATURE_DIM] = std::array::from_fn(|_| rng.random());
            let a = select_action(&net, &f, Some(&m), eps, MASK_PENALTY, &mut rng).unwrap();
            let action = crate::env::JointAction::from_index(a).unwrap();
            for j in 0..ZONES {
                assert!(sets.contains(j, action.level(j)));
            }
        }
    }

    #[test]
    fn full_mask_matches_unmasked_paths_bitwise() {
        let net = small_net(4);
        let full = ActionMask::all();
        let mut r1 = ChaCha8Rng::seed_from_u64(8);
        let mut r2 = ChaCha8Rng::seed_from_u64(8);
        let mut fr = ChaCha8Rng::seed_from_u64(9);
        for k in 0..200 {
            let f: [f64; FEATURE_DIM] = std::array::from_fn(|_| fr.random());
            let eps = (k % 5) as f64 / 4.0;
            let a = select_action(&net, &f, Some(&full), eps, MASK_PENALTY, &mut r1).unwrap();
            let b = select_action(&net, &f, None, eps, MASK_PENALTY, &mut r2).unwrap();
            assert_eq!(a, b);
        }
        let batch: Vec<Transition> = (0..16).map(|i| transition(&mut fr, i % 4 == 0, FeasibleSets::full())).collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let masked = bellman_target(&refs, &net, 0.99, MASK_PENALTY, true).unwrap();
        let plain = bellman_target(&refs, &net, 0.99, MASK_PENALTY, false).unwrap();
        assert_eq!(
            masked.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            plain.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn bellman_target_examples() {
        let net = small_net(5);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let terminal = transition(&mut rng, true, FeasibleSets::full());
        assert_eq!(bellman_target(&[&terminal], &net, 0.99, MASK_PENALTY, true).unwrap(), vec![terminal.reward]);

        let open = transition(&mut rng, false, FeasibleSets::full());
        assert_eq!(bellman_target(&[&open], &net, 0.0, MASK_PENALTY, true).unwrap(), vec![open.reward]);

        let sets = singleton([1, 2, 0, 0, 3, 1, 2]);
        let t = transition(&mut rng, false, sets);
        let a = sets.nth_action(0).unwrap().index();
        let q = net.forward_batch(stack([t.next_features].into_iter()).view()).unwrap();
        let q = q.row(0);
        let y = bellman_target(&[&t], &net, 0.9, MASK_PENALTY, true).unwrap()[0];
        assert_eq!(y, t.reward + 0.9 * q[a]);
    }

    #[test]
    fn sparse_paths_match_the_dense_penalised_ones() {
        let net = small_net(14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let random_sets = |rng: &mut ChaCha8Rng| {
            let mut bits: [u8; ZONES] = std::array::from_fn(|_| rng.random_range(1u8..16));
            bits[0] &= 0b0111;
            bits[0] |= 0b0001;
            FeasibleSets::from_bits(bits).unwrap()
        };
        let batch: Vec<Transition> = (0..32)
            .map(|i| {
                let sets = random_sets(&mut rng);
                transition(&mut rng, i % 7 == 0, sets)
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let sparse = bellman_target(&refs, &net, 0.99, MASK_PENALTY, true).unwrap();
        let q = net.forward_batch(stack(batch.iter().map(|t| t.next_features)).view()).unwrap();
        for (i, t) in batch.iter().enumerate() {
            let row = q.row(i).to_vec();
            let dense = masked_q(&row, &ActionMask::from_sets(&t.next_sets), MASK_PENALTY).unwrap();
            let best = dense.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let y = if t.done { t.reward } else { t.reward + 0.99 * best };
            assert!((sparse[i] - y).abs() <= 1e-12, "{} vs {y}", sparse[i]);
        }

        for _ in 0..50 {
            let m = ActionMask::from_sets(&random_sets(&mut rng));
            let f: [f64; FEATURE_DIM] = std::array::from_fn(|_| rng.random());
            let a = select_action(&net, &f, Some(&m), 0.0, MASK_PENALTY, &mut rng).unwrap();
            let dense = masked_q(&net.forward(&f).unwrap(), &m, MASK_PENALTY).unwrap();
            let best = dense.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(m.contains(a));
            assert!(dense[a] >= best - 1e-12);
        }
    }

    #[test]
    fn exact_targets_give_zero_loss_and_no_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let target = small_net(6);
        // terminal transitions target their reward, which the online output bias reproduces
        let batch: Vec<Transition> = (0..8)
            .map(|_| Transition {
                action: 0,
                reward: -0.5,
                ..transition(&mut rng, true, FeasibleSets::full())
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let mut online = QNetwork::zeros(&[FEATURE_DIM, 8, NUM_ACTIONS]).unwrap();
        online.layers_mut()[1].bias[0] = -0.5;
        let before = online.clone();
        let mut adam = Adam::new(&online, AdamConfig::default());
        let loss = td_update(&mut online, &target, &mut adam, &refs, 0.99, MASK_PENALTY, true).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(online, before);
    }

    #[test]
    fn loss_decreases_on_frozen_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let target = small_net(7);
        let batch: Vec<Transition> = (0..32).map(|_| transition(&mut rng, false, FeasibleSets::full())).collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let mut online = small_net(8);
        let mut adam = Adam::new(&online, AdamConfig::default());
        let mut losses = Vec::new();
        for _ in 0..50 {
            losses.push(td_update(&mut online, &target, &mut adam, &refs, 0.99, MASK_PENALTY, true).unwrap());
        }
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn target_network_frozen_between_syncs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let config = TrainConfig {
            target_update_every: 5,
            ..TrainConfig::default()
        };
        let mut learner = Learner::new(small_net(9), &config, true).unwrap();
        let frozen = learner.target().parameters();
        let batch: Vec<Transition> = (0..8).map(|_| transition(&mut rng, false, FeasibleSets::full())).collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        for _ in 0..4 {
            learner.update(&refs).unwrap();
            let now = learner.target().parameters();
            assert!(frozen.iter().zip(&now).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        assert_ne!(learner.online().parameters(), frozen);
        learner.update(&refs).unwrap();
        assert_eq!(learner.target(), learner.online());
        assert_eq!(learner.target_syncs(), 1);
    }

    #[test]
    fn epsilon_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.epsilon(0, 1000), 1.0);
        assert!((c.epsilon(250, 1000) - 0.525).abs() < 1e-12);
        assert_eq!(c.epsilon(500, 1000), 0.05);
        assert_eq!(c.epsilon(999, 1000), 0.05);
        assert!(TrainConfig { gamma: 1.0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { mask_penalty: 10.0, ..c }.validate().is_err());
    }
}
