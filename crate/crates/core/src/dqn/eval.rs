//! Greedy rollouts and the comfort/energy/pruning report.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Policy;
use crate::env::{derive_seed, Environment, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::mask::{MaskProvider, WINDOW};

/// Evaluation days are drawn from a stream disjoint from training days.
const EVAL_OFFSET: u64 = 1 << 32;

/// Reset seed of evaluation episode `episode` under `seed`.
pub fn eval_day_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(seed, EVAL_OFFSET + episode as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two values.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

/// Max/min/average remaining share of the joint action space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainingStats {
    pub max_count: usize,
    pub min_count: usize,
    pub avg_count: f64,
    pub steps: usize,
}

impl RemainingStats {
    pub fn from_counts(counts: &[usize]) -> Option<Self> {
        if counts.is_empty() {
            return None;
        }
        Some(Self {
            max_count: *counts.iter().max().expect("non-empty"),
            min_count: *counts.iter().min().expect("non-empty"),
            avg_count: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
            steps: counts.len(),
        })
    }

    fn pct(count: f64) -> f64 {
        count / NUM_ACTIONS as f64 * 100.0
    }

    pub fn max_pct(&self) -> f64 {
        Self::pct(self.max_count as f64)
    }

    pub fn min_pct(&self) -> f64 {
        Self::pct(self.min_count as f64)
    }

    pub fn avg_pct(&self) -> f64 {
        Self::pct(self.avg_count)
    }

    /// Statistic / Percentage / Valid Actions table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>10} {:>14}", "Statistic", "Percentage", "Valid Actions");
        let _ = writeln!(s, "{:<10} {:>9.2}% {:>14}", "Maximum", self.max_pct(), self.max_count);
        let _ = writeln!(s, "{:<10} {:>9.2}% {:>14}", "Minimum", self.min_pct(), self.min_count);
        let _ = writeln!(s, "{:<10} {:>9.2}% {:>14.2}", "Average", self.avg_pct(), self.avg_count);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub episode: usize,
    pub reward: f64,
    /// Means over occupied steps.
    pub ppd_mean: f64,
    pub pmv_abs_mean: f64,
    pub energy_kwh: f64,
    /// Mean remaining share of the action space, % (absent without a mask source).
    pub remaining_avg_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub mask_source: Option<String>,
    pub episodes: Vec<EpisodeMetrics>,
    pub reward: MeanStd,
    pub ppd: MeanStd,
    pub pmv_abs: MeanStd,
    pub energy_kwh: MeanStd,
    pub remaining: Option<RemainingStats>,
}

impl EvalReport {
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>18} {:>14} {:>14} {:>16}",
            "Policy", "Reward", "PPD mean (%)", "|PMV| mean", "Energy (kWh)"
        );
        let _ = writeln!(
            s,
            "{:<16} {:>9.2} ± {:>6.2} {:>14.2} {:>14.3} {:>16.2}",
            self.policy, self.reward.mean, self.reward.std, self.ppd.mean, self.pmv_abs.mean, self.energy_kwh.mean
        );
        s
    }

    pub fn write_episodes_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["seed", "episode", "reward", "ppd_mean", "pmv_abs_mean", "energy_kwh", "remaining_avg_pct"])?;
        for e in &self.episodes {
            w.write_record([
                e.seed.to_string(),
                e.episode.to_string(),
                e.reward.to_string(),
                e.ppd_mean.to_string(),
                e.pmv_abs_mean.to_string(),
                e.energy_kwh.to_string(),
                e.remaining_avg_pct.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Relative improvement of a candidate over a baseline, %. Positive is
/// better for every column: lower energy, |PMV| and PPD, higher reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub energy_pct: f64,
    pub pmv_abs_pct: f64,
    pub ppd_pct: f64,
    pub reward_pct: f64,
}

impl Comparison {
    pub fn between(baseline: &EvalReport, candidate: &EvalReport) -> Self {
        let lower_better = |b: f64, c: f64| (b - c) / b.abs() * 100.0;
        Self {
            energy_pct: lower_better(baseline.energy_kwh.mean, candidate.energy_kwh.mean),
            pmv_abs_pct: lower_better(baseline.pmv_abs.mean, candidate.pmv_abs.mean),
            ppd_pct: lower_better(baseline.ppd.mean, candidate.ppd.mean),
            reward_pct: (candidate.reward.mean - baseline.reward.mean) / baseline.reward.mean.abs() * 100.0,
        }
    }

    /// Smallest of the four improvements.
    pub fn worst(&self) -> f64 {
        [self.energy_pct, self.pmv_abs_pct, self.ppd_pct, self.reward_pct]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn table(&self) -> String {
        format!(
            "{:<8} {:>9} {:>9} {:>9}\n{:>+7.2}% {:>+8.2}% {:>+8.2}% {:>+8.2}%\n",
            "Energy", "|PMV|", "PPD", "Reward", self.energy_pct, self.pmv_abs_pct, self.ppd_pct, self.reward_pct
        )
    }
}

/// Rolls `policy` out for `n_episodes` days under each seed. When a mask
/// source is given, every emitted action must lie in its feasible sets.
pub fn evaluate(
    policy: &mut dyn Policy,
    env: &mut Environment,
    mask_source: Option<&dyn MaskProvider>,
    n_episodes: usize,
    seeds: &[u64],
) -> Result<EvalReport> {
    let mut episodes = Vec::with_capacity(n_episodes * seeds.len());
    let mut counts = Vec::new();
    for &seed in seeds {
        for e in 0..n_episodes {
            let mut state = env.reset(eval_day_seed(seed, e));
            let mut history = vec![state.clone()];
            let (mut reward, mut energy, mut ppd, mut pmv, mut occupied) = (0.0, 0.0, 0.0, 0.0, 0usize);
            let mut episode_counts = Vec::new();
            loop {
                let sets = match mask_source {
                    Some(p) => {
                        let start = history.len().saturating_sub(WINDOW);
                        Some(p.feasible_sets(&history[start..])?)
                    }
                    None => None,
                };
                let action = policy.act(&state, sets.as_ref())?;
                if let Some(s) = &sets {
                    episode_counts.push(s.joint_count());
                    if !s.allows(action) {
                        return Err(Error::invalid(format!(
                            "policy {} emitted {:?} outside the feasible sets {s:?}",
                            policy.name(),
                            action.levels()
                        )));
                    }
                }
                let out = env.step(action)?;
                reward += out.reward;
                energy += out.info.energy_kwh;
                if out.info.metrics.occupants_total > 0 {
                    ppd += out.info.metrics.ppd_mean_pct;
                    pmv += out.info.metrics.pmv_abs_mean;
                    occupied += 1;
                }
                state = out.state;
                if out.done {
                    break;
                }
                history.push(state.clone());
            }
            let occ = occupied.max(1) as f64;
            let remaining_avg_pct = RemainingStats::from_counts(&episode_counts).map(|r| r.avg_pct());
            counts.extend(episode_counts);
            episodes.push(EpisodeMetrics {
                seed,
                episode: e,
                reward,
                ppd_mean: ppd / occ,
                pmv_abs_mean: pmv / occ,
                energy_kwh: energy,
                remaining_avg_pct,
            });
        }
    }
    let col = |f: fn(&EpisodeMetrics) -> f64| MeanStd::of(&episodes.iter().map(f).collect::<Vec<_>>());
    Ok(EvalReport {
        policy: policy.name().to_string(),
        mask_source: mask_source.map(|p| p.name().to_string()),
        reward: col(|e| e.reward),
        ppd: col(|e| e.ppd_mean),
        pmv_abs: col(|e| e.pmv_abs_mean),
        energy_kwh: col(|e| e.energy_kwh),
        remaining: RemainingStats::from_counts(&counts),
        episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::{FullRandom, MaskedRandom, RuleBased};
    use crate::mask::FullMaskProvider;
    use crate::scenario::Scenario;

    #[test]
    fn remaining_table_format() {
        let r = RemainingStats::from_counts(&[6912, 864, 2000]).unwrap();
        let t = r.table();
        assert!(t.contains("Maximum"));
        assert!(t.contains("42.19%"));
        assert!(t.contains("5.27%"));
        assert!(t.contains("6912"));
        assert!(t.contains("864"));
        assert_eq!(r.avg_count, (6912.0 + 864.0 + 2000.0) / 3.0);
        assert!(RemainingStats::from_counts(&[]).is_none());
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn deterministic_and_paired() {
        let sc = Scenario::default();
        let mut env = Environment::new(sc.clone()).unwrap();
        let a = evaluate(&mut FullRandom::new(5), &mut env, None, 2, &[0, 1]).unwrap();
        let b = evaluate(&mut FullRandom::new(5), &mut env, None, 2, &[0, 1]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.episodes.len(), 4);
        assert!(a.remaining.is_none());
        let full = evaluate(&mut MaskedRandom::new(5), &mut env, Some(&FullMaskProvider), 1, &[0]).unwrap();
        let r = full.remaining.unwrap();
        assert_eq!((r.max_count, r.min_count, r.steps), (NUM_ACTIONS, NUM_ACTIONS, 120));
        let rule = evaluate(&mut RuleBased::new(&sc), &mut env, None, 1, &[0]).unwrap();
        let c = Comparison::between(&a, &rule);
        assert!(c.worst() <= c.reward_pct);
    }
}
