//! Mask-cache latency benchmark.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use super::{MaskedRule, Policy};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::mask::{CacheConfig, CachedProvider, MaskProvider, WINDOW};

/// One timed pass over a day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassTiming {
    pub steps: usize,
    pub reward: f64,
    /// Wall time of the mask queries, µs.
    pub total_latency_us: f64,
    pub mean_latency_us: f64,
    pub max_latency_us: f64,
    pub min_latency_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheBenchReport {
    pub day_seed: u64,
    /// Whether an untimed pass filled the cache first.
    pub warmed: bool,
    pub uncached: PassTiming,
    pub cached: PassTiming,
    /// Cache hit rate during the timed cached pass, %.
    pub hit_rate_pct: f64,
    pub cache_entries: usize,
}

impl CacheBenchReport {
    /// Uncached over cached mean latency.
    pub fn speedup(&self) -> f64 {
        self.uncached.mean_latency_us / self.cached.mean_latency_us.max(f64::MIN_POSITIVE)
    }

    /// Latency reduction, %.
    pub fn reduction_pct(&self) -> f64 {
        (1.0 - self.cached.mean_latency_us / self.uncached.mean_latency_us) * 100.0
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>12} {:>14} {:>12} {:>12} {:>12}",
            "Run", "Steps", "Reward", "Total (µs)", "Mean (µs)", "Max (µs)", "Min (µs)"
        );
        for (name, p) in [("uncached", &self.uncached), ("cached", &self.cached)] {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>12.2} {:>14.1} {:>12.2} {:>12.2} {:>12.2}",
                name, p.steps, p.reward, p.total_latency_us, p.mean_latency_us, p.max_latency_us, p.min_latency_us
            );
        }
        let _ = writeln!(
            s,
            "speedup {:.1}x, reduction {:.2}%, hit rate {:.2}%, {} entries",
            self.speedup(),
            self.reduction_pct(),
            self.hit_rate_pct,
            self.cache_entries
        );
        s
    }
}

/// Rolls `policy` over one day, timing every mask query.
fn timed_pass(
    policy: &mut dyn Policy,
    env: &mut Environment,
    provider: &dyn MaskProvider,
    day_seed: u64,
) -> Result<PassTiming> {
    let mut state = env.reset(day_seed);
    let mut history = vec![state.clone()];
    let mut reward = 0.0;
    let mut latencies = Vec::with_capacity(env.scenario().simulation.episode_steps);
    loop {
        let start = history.len().saturating_sub(WINDOW);
        let t = Instant::now();
        let sets = provider.feasible_sets(&history[start..])?;
        latencies.push(t.elapsed().as_secs_f64() * 1e6);
        let action = policy.act(&state, Some(&sets))?;
        if !sets.allows(action) {
            return Err(Error::invalid("benchmark policy left the feasible sets"));
        }
        let out = env.step(action)?;
        reward += out.reward;
        state = out.state;
        if out.done {
            break;
        }
        history.push(state.clone());
    }
    let total: f64 = latencies.iter().sum();
    Ok(PassTiming {
        steps: latencies.len(),
        reward,
        total_latency_us: total,
        mean_latency_us: total / latencies.len() as f64,
        max_latency_us: latencies.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_latency_us: latencies.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Times the projected rule policy on one day with direct provider queries,
/// then through a cache. With `warm`, an untimed pass over the same day
/// fills the cache first.
pub fn cache_benchmark<P: MaskProvider>(
    env: &mut Environment,
    provider: P,
    config: CacheConfig,
    day_seed: u64,
    warm: bool,
) -> Result<CacheBenchReport> {
    let scenario = env.scenario().clone();
    let uncached = timed_pass(&mut MaskedRule::new(&scenario), env, &provider, day_seed)?;
    let cache = CachedProvider::new(provider, config)?;
    if warm {
        timed_pass(&mut MaskedRule::new(&scenario), env, &cache, day_seed)?;
        cache.reset_counters();
    }
    let cached = timed_pass(&mut MaskedRule::new(&scenario), env, &cache, day_seed)?;
    Ok(CacheBenchReport {
        day_seed,
        warmed: warm,
        uncached,
        cached,
        hit_rate_pct: cache.hit_rate(),
        cache_entries: cache.len(),
    })
}
