use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{bail, Context, Result};
use hvaclab_core::dqn::{
    baseline_policy, cache_benchmark, evaluate, load_checkpoint, mean_std_curve, save_checkpoint, summarize_curves,
    train, Comparison, CurveSummary, EpisodeStats, EvalReport, GreedyQ, Masking, Policy,
};
use hvaclab_core::env::{generate_demonstrations, load_historical, BehaviorPolicy, Environment, HistoricalLog};
use hvaclab_core::mask::{export_sft_dataset, CachedProvider, FullMaskProvider, KnnOracle, MaskProvider, WINDOW};
use hvaclab_core::ZONES;
use serde::Serialize;

use crate::config::Config;
use crate::run::RunDir;
use crate::{Cli, Command, MaskArg, MaskOpts, PolicyArg, Variant};

/// Share of the learning curve averaged for the final-performance figure.
const FINAL_FRACTION: f64 = 0.05;
const REPORT_FILE: &str = "report.json";

struct Ctx {
    cfg: Config,
    config_path: Option<PathBuf>,
    out: Option<PathBuf>,
    quiet: bool,
}

impl Ctx {
    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref());
        }
    }

    fn progress(&self, text: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", text.as_ref());
        }
    }

    fn run_dir(&self, command: &str) -> Result<RunDir> {
        RunDir::create(self.out.as_deref(), command)
    }

    fn finish(&self, dir: RunDir, seeds: Vec<u64>) -> Result<()> {
        let path = dir.finish(self.config_path.as_deref(), &self.cfg, seeds)?;
        self.say(format!("run directory: {}", path.display()));
        Ok(())
    }

    fn demonstrations(&self, override_path: Option<&Path>) -> Result<HistoricalLog> {
        match override_path.or(self.cfg.demos.path.as_deref()) {
            Some(p) => load_historical(p).with_context(|| format!("loading demonstrations {}", p.display())),
            None => {
                let sc = &self.cfg.scenario;
                let rule = BehaviorPolicy::new(sc.behavior.clone());
                Ok(generate_demonstrations(sc, &rule, self.cfg.demos.days, self.cfg.demos.seed)?)
            }
        }
    }

    fn oracle(&self, demos: Option<&Path>) -> Result<KnnOracle> {
        let log = self.demonstrations(demos)?;
        Ok(KnnOracle::from_log(&log, &self.cfg.scenario, self.cfg.mask.clone())?)
    }

    fn provider(&self, kind: MaskArg, opts: &MaskOpts) -> Result<Option<Box<dyn MaskProvider>>> {
        let base: Box<dyn MaskProvider> = match kind {
            MaskArg::None => return Ok(None),
            MaskArg::Full => Box::new(FullMaskProvider),
            MaskArg::Knn => Box::new(self.oracle(opts.demos.as_deref())?),
        };
        Ok(Some(if opts.cache {
            Box::new(CachedProvider::new(base, self.cfg.cache.clone())?)
        } else {
            base
        }))
    }

    fn policy(&self, kind: PolicyArg, checkpoint: Option<&Path>, seed: u64) -> Result<Box<dyn Policy>> {
        let sc = &self.cfg.scenario;
        Ok(match kind {
            PolicyArg::Dqn => {
                let path = checkpoint.context("--policy dqn needs --checkpoint")?;
                let net = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
                Box::new(GreedyQ::new(net, sc, "dqn")?)
            }
            PolicyArg::RuleBased => baseline_policy("rule_based", sc, seed)?,
            PolicyArg::FullRandom => baseline_policy("full_random", sc, seed)?,
            PolicyArg::MaskedRandom => baseline_policy("masked_random", sc, seed)?,
        })
    }
}

fn mask_kind(policy: PolicyArg, opts: &MaskOpts) -> MaskArg {
    opts.mask.unwrap_or(if policy == PolicyArg::MaskedRandom { MaskArg::Knn } else { MaskArg::None })
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::resolve(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mut ctx = Ctx {
        cfg,
        config_path: cli.config,
        out: cli.out,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Simulate { policy, checkpoint, mask } => simulate(&ctx, policy, checkpoint.as_deref(), &mask),
        Command::Demos { days } => {
            if let Some(d) = days {
                ctx.cfg.demos.days = d;
            }
            ctx.cfg.validate()?;
            demos(&ctx)
        }
        Command::ExportSft { demos, max_records } => export_sft(&ctx, demos.as_deref(), max_records),
        Command::Train {
            variant,
            seeds,
            episodes,
            hidden,
            cache,
            demos,
        } => {
            let t = &mut ctx.cfg.train;
            match (seeds, cli.seed) {
                (Some(s), _) => t.seeds = s,
                (None, Some(s)) => t.seeds = vec![s],
                _ => {}
            }
            if let Some(e) = episodes {
                t.episodes = e;
            }
            if let Some(h) = hidden {
                t.hidden_layers = h;
            }
            ctx.cfg.validate()?;
            train_cmd(&ctx, variant, cache, demos.as_deref())
        }
        Command::Evaluate {
            policy,
            checkpoint,
            episodes,
            seeds,
            mask,
        } => {
            if let Some(e) = episodes {
                ctx.cfg.eval.episodes = e;
            }
            ctx.cfg.validate()?;
            let seeds = seeds.unwrap_or_else(|| vec![ctx.cfg.seed]);
            evaluate_cmd(&ctx, policy, checkpoint.as_deref(), &seeds, &mask)
        }
        Command::Compare { runs } => compare(&ctx, &runs),
        Command::CacheBench { cold, demos } => cache_bench(&ctx, cold, demos.as_deref()),
        Command::PrintConfig => {
            print!("{}", ctx.cfg.to_toml()?);
            Ok(())
        }
    }
}

fn clock(start_hour: u32, minutes: u32) -> String {
    let m = start_hour * 60 + minutes;
    format!("{:02}:{:02}", m / 60, m % 60)
}

#[derive(Serialize)]
struct EpisodeSummary {
    policy: String,
    day_seed: u64,
    steps: usize,
    reward: f64,
    ppd_mean: f64,
    pmv_abs_mean: f64,
    energy_kwh: f64,
}

fn simulate(ctx: &Ctx, kind: PolicyArg, checkpoint: Option<&Path>, opts: &MaskOpts) -> Result<()> {
    let seed = ctx.cfg.seed;
    let sc = &ctx.cfg.scenario;
    let provider = ctx.provider(mask_kind(kind, opts), opts)?;
    let mut policy = ctx.policy(kind, checkpoint, seed)?;
    let dir = ctx.run_dir("simulate")?;
    let mut env = Environment::new(sc.clone())?;
    let mut state = env.reset(seed);
    let mut history = vec![state.clone()];

    let mut traj = csv::Writer::from_path(dir.file("trajectory.csv"))?;
    let mut header = vec!["step".to_string(), "time".into(), "outdoor_temp".into()];
    for i in 1..=ZONES {
        header.extend([format!("zone_temp_{i}"), format!("occupant_num_{i}"), format!("FCU_fan_{i}"), format!("pmv_{i}")]);
    }
    header.extend(["pump_freq_hz", "power_kw", "ppd_mean", "reward"].map(String::from));
    traj.write_record(&header)?;

    let (mut reward, mut energy, mut ppd, mut pmv, mut occupied, mut steps) = (0.0, 0.0, 0.0, 0.0, 0usize, 0usize);
    loop {
        let sets = match &provider {
            Some(p) => Some(p.feasible_sets(&history[history.len().saturating_sub(WINDOW)..])?),
            None => None,
        };
        let action = policy.act(&state, sets.as_ref())?;
        let out = env.step(action)?;
        let m = &out.info.metrics;
        let mut row = vec![
            steps.to_string(),
            clock(sc.simulation.start_hour, out.state.clock_min),
            out.state.outdoor_temp_c.to_string(),
        ];
        for j in 0..ZONES {
            row.extend([
                out.state.zone_temps_c[j].to_string(),
                out.state.occupancy[j].to_string(),
                action.level(j).to_string(),
                out.info.zone_pmv[j].to_string(),
            ]);
        }
        row.extend([
            out.state.aux.pump_freq_hz.to_string(),
            m.power_kw.to_string(),
            m.ppd_mean_pct.to_string(),
            out.reward.to_string(),
        ]);
        traj.write_record(&row)?;
        reward += out.reward;
        energy += out.info.energy_kwh;
        if m.occupants_total > 0 {
            ppd += m.ppd_mean_pct;
            pmv += m.pmv_abs_mean;
            occupied += 1;
        }
        steps += 1;
        state = out.state;
        if out.done {
            break;
        }
        history.push(state.clone());
    }
    traj.flush()?;
    let occ = occupied.max(1) as f64;
    let summary = EpisodeSummary {
        policy: policy.name().to_string(),
        day_seed: seed,
        steps,
        reward,
        ppd_mean: ppd / occ,
        pmv_abs_mean: pmv / occ,
        energy_kwh: energy,
    };
    let mut metrics = csv::Writer::from_path(dir.file("metrics.csv"))?;
    metrics.serialize(&summary)?;
    metrics.flush()?;
    ctx.say(format!(
        "{}: {steps} steps, reward {:.2}, PPD mean {:.2}%, |PMV| mean {:.3}, energy {:.2} kWh",
        summary.policy, summary.reward, summary.ppd_mean, summary.pmv_abs_mean, summary.energy_kwh
    ));
    ctx.finish(dir, vec![seed])
}

fn demos(ctx: &Ctx) -> Result<()> {
    let sc = &ctx.cfg.scenario;
    let rule = BehaviorPolicy::new(sc.behavior.clone());
    let log = generate_demonstrations(sc, &rule, ctx.cfg.demos.days, ctx.cfg.demos.seed)?;
    let dir = ctx.run_dir("demos")?;
    log.save(&dir.file("demos.csv"))?;
    ctx.say(format!("{} rows over {} days written to demos.csv", log.len(), ctx.cfg.demos.days));
    ctx.finish(dir, vec![ctx.cfg.demos.seed])
}

fn export_sft(ctx: &Ctx, demos: Option<&Path>, max_records: Option<usize>) -> Result<()> {
    let log = ctx.demonstrations(demos)?;
    let oracle = KnnOracle::from_log(&log, &ctx.cfg.scenario, ctx.cfg.mask.clone())?;
    let dir = ctx.run_dir("export-sft")?;
    let out = BufWriter::new(File::create(dir.file("sft.jsonl"))?);
    let n = export_sft_dataset(&log, &ctx.cfg.scenario, &oracle, out, max_records)?;
    ctx.say(format!("{n} records from {} log rows written to sft.jsonl", log.len()));
    ctx.finish(dir, vec![ctx.cfg.demos.seed])
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    variant: &'a str,
    mask_source: &'a str,
    seeds: &'a [u64],
    episodes: usize,
    gradient_steps: Vec<u64>,
    #[serde(flatten)]
    curves: CurveSummary,
}

fn write_curve(path: &Path, curve: &[EpisodeStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in curve {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

fn train_cmd(ctx: &Ctx, variant: Variant, cache: bool, demos: Option<&Path>) -> Result<()> {
    let cfg = &ctx.cfg.train;
    let provider: Option<Box<dyn MaskProvider>> = match variant {
        Variant::Vanilla => None,
        Variant::Masked => {
            let oracle = ctx.oracle(demos)?;
            Some(if cache {
                Box::new(CachedProvider::new(oracle, ctx.cfg.cache.clone())?)
            } else {
                Box::new(oracle)
            })
        }
    };
    let variant_name = match variant {
        Variant::Masked => "masked",
        Variant::Vanilla => "vanilla",
    };
    let dir = ctx.run_dir("train")?;
    let env = Environment::new(ctx.cfg.scenario.clone())?;
    let masking = match &provider {
        Some(p) => Masking::Provider(p.as_ref()),
        None => Masking::Disabled,
    };
    let every = (cfg.episodes / 10).max(1);
    // seeds run in parallel, at most one per core
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cfg.seeds.len());
    let next = AtomicUsize::new(0);
    let mut outcomes = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let mut env = env.clone();
                let next = &next;
                scope.spawn(move || {
                    let mut done = Vec::new();
                    while let Some(&seed) = cfg.seeds.get(next.fetch_add(1, Ordering::Relaxed)) {
                        let out = train(&mut env, masking, cfg, seed, |s, _| {
                            if s.episode % every == 0 || s.episode + 1 == cfg.episodes {
                                ctx.progress(format!(
                                    "{variant_name} seed {seed} episode {:>4}: reward {:9.2}, PPD {:5.2}%, energy {:6.2} kWh, ε {:.3}",
                                    s.episode, s.reward, s.ppd_mean, s.energy_kwh, s.epsilon
                                ));
                            }
                            Ok(())
                        });
                        done.push((seed, out));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("training thread panicked"))
            .collect::<Vec<_>>()
    });
    let order = |seed: u64| cfg.seeds.iter().position(|&s| s == seed);
    outcomes.sort_by_key(|(seed, _)| order(*seed));
    let mut curves = Vec::new();
    let mut gradient_steps = Vec::new();
    for (_, out) in outcomes {
        let out = out?;
        write_curve(&dir.file(&format!("curve_seed{}.csv", out.seed)), &out.curve)?;
        save_checkpoint(&out.network, &dir.file(&format!("checkpoint_seed{}.bin", out.seed)))?;
        gradient_steps.push(out.gradient_steps);
        curves.push(out.rewards());
    }
    let mut pooled = csv::Writer::from_path(dir.file("curves.csv"))?;
    pooled.write_record(["episode", "reward_mean", "reward_std"])?;
    for (e, ms) in mean_std_curve(&curves)?.iter().enumerate() {
        pooled.write_record([e.to_string(), ms.mean.to_string(), ms.std.to_string()])?;
    }
    pooled.flush()?;
    let summary = TrainSummary {
        variant: variant_name,
        mask_source: masking.name(),
        seeds: &cfg.seeds,
        episodes: cfg.episodes,
        gradient_steps,
        curves: summarize_curves(&curves, FINAL_FRACTION)?,
    };
    dir.write_json("summary.json", &summary)?;
    ctx.say(format!(
        "{variant_name}: final-{:.0}% mean {:.2}, terminal std {:.2}, AUC {:.1} over {} seeds",
        FINAL_FRACTION * 100.0,
        summary.curves.final_mean,
        summary.curves.terminal_std,
        summary.curves.auc,
        cfg.seeds.len()
    ));
    ctx.finish(dir, cfg.seeds.clone())
}

fn evaluate_cmd(ctx: &Ctx, kind: PolicyArg, checkpoint: Option<&Path>, seeds: &[u64], opts: &MaskOpts) -> Result<()> {
    let provider = ctx.provider(mask_kind(kind, opts), opts)?;
    let mut policy = ctx.policy(kind, checkpoint, seeds[0])?;
    let dir = ctx.run_dir("evaluate")?;
    let mut env = Environment::new(ctx.cfg.scenario.clone())?;
    let source = provider.as_ref().map(|p| p.as_ref() as &dyn MaskProvider);
    let report = evaluate(policy.as_mut(), &mut env, source, ctx.cfg.eval.episodes, seeds)?;
    report.write_episodes_csv(File::create(dir.file("episodes.csv"))?)?;
    dir.write_json(REPORT_FILE, &report)?;
    let mut text = report.summary_table();
    if let Some(r) = &report.remaining {
        text.push('\n');
        text.push_str(&r.table());
    }
    std::fs::write(dir.file("summary.txt"), &text)?;
    ctx.say(text.trim_end());
    ctx.finish(dir, seeds.to_vec())
}

fn load_report(run: &Path) -> Result<EvalReport> {
    let path = run.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("{} has no {REPORT_FILE}; compare needs evaluate runs", run.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn pct_count(pct: Option<f64>, count: Option<String>) -> String {
    match (pct, count) {
        (Some(p), Some(c)) => format!("{p:.2}% ({c})"),
        _ => "-".into(),
    }
}

fn compare(ctx: &Ctx, runs: &[PathBuf]) -> Result<()> {
    if runs.len() < 2 {
        bail!("compare needs at least two runs");
    }
    let reports = runs.iter().map(|r| load_report(r)).collect::<Result<Vec<_>>>()?;
    let base = &reports[0];
    let dir = ctx.run_dir("compare")?;
    let mut w = csv::Writer::from_path(dir.file("comparison.csv"))?;
    w.write_record([
        "run",
        "policy",
        "mask_source",
        "reward_mean",
        "reward_std",
        "ppd_mean",
        "ppd_std",
        "pmv_abs_mean",
        "energy_kwh",
        "remaining_max_pct",
        "remaining_max_count",
        "remaining_min_pct",
        "remaining_min_count",
        "remaining_avg_pct",
        "remaining_avg_count",
        "energy_delta_pct",
        "pmv_abs_delta_pct",
        "ppd_delta_pct",
        "reward_delta_pct",
    ])?;
    let mut text = String::new();
    text.push_str(&format!(
        "{:<28} {:>20} {:>16} {:>10} {:>12} {:>18} {:>18} {:>20} {:>9} {:>9} {:>9} {:>9}\n",
        "Run", "Reward", "PPD Mean (%)", "|PMV|", "Energy (kWh)", "Max valid", "Min valid", "Avg valid", "ΔEnergy",
        "Δ|PMV|", "ΔPPD", "ΔReward"
    ));
    for (path, r) in runs.iter().zip(&reports) {
        let c = Comparison::between(base, r);
        let name = format!("{} ({})", r.policy, path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default());
        let rem = r.remaining.as_ref();
        let opt = |v: Option<String>| v.unwrap_or_default();
        w.write_record([
            path.display().to_string(),
            r.policy.clone(),
            r.mask_source.clone().unwrap_or_default(),
            r.reward.mean.to_string(),
            r.reward.std.to_string(),
            r.ppd.mean.to_string(),
            r.ppd.std.to_string(),
            r.pmv_abs.mean.to_string(),
            r.energy_kwh.mean.to_string(),
            opt(rem.map(|x| x.max_pct().to_string())),
            opt(rem.map(|x| x.max_count.to_string())),
            opt(rem.map(|x| x.min_pct().to_string())),
            opt(rem.map(|x| x.min_count.to_string())),
            opt(rem.map(|x| x.avg_pct().to_string())),
            opt(rem.map(|x| x.avg_count.to_string())),
            c.energy_pct.to_string(),
            c.pmv_abs_pct.to_string(),
            c.ppd_pct.to_string(),
            c.reward_pct.to_string(),
        ])?;
        text.push_str(&format!(
            "{:<28} {:>11.2} ± {:>6.2} {:>8.2} ± {:>5.2} {:>10.3} {:>12.2} {:>18} {:>18} {:>20} {:>+8.2}% {:>+8.2}% {:>+8.2}% {:>+8.2}%\n",
            name,
            r.reward.mean,
            r.reward.std,
            r.ppd.mean,
            r.ppd.std,
            r.pmv_abs.mean,
            r.energy_kwh.mean,
            pct_count(rem.map(|x| x.max_pct()), rem.map(|x| x.max_count.to_string())),
            pct_count(rem.map(|x| x.min_pct()), rem.map(|x| x.min_count.to_string())),
            pct_count(rem.map(|x| x.avg_pct()), rem.map(|x| format!("{:.1}", x.avg_count))),
            c.energy_pct,
            c.pmv_abs_pct,
            c.ppd_pct,
            c.reward_pct
        ));
    }
    w.flush()?;
    std::fs::write(dir.file("comparison.txt"), &text)?;
    ctx.say(text.trim_end());
    ctx.finish(dir, Vec::new())
}

fn cache_bench(ctx: &Ctx, cold: bool, demos: Option<&Path>) -> Result<()> {
    let oracle = ctx.oracle(demos)?;
    let dir = ctx.run_dir("cache-bench")?;
    let mut env = Environment::new(ctx.cfg.scenario.clone())?;
    let report = cache_benchmark(&mut env, oracle, ctx.cfg.cache.clone(), ctx.cfg.seed, !cold)?;
    dir.write_json("cache_bench.json", &report)?;
    let mut w = csv::Writer::from_path(dir.file("cache_bench.csv"))?;
    w.write_record([
        "run",
        "steps",
        "reward",
        "total_latency_us",
        "mean_latency_us",
        "max_latency_us",
        "min_latency_us",
        "hit_rate_pct",
    ])?;
    for (name, p, hit) in [("uncached", &report.uncached, None), ("cached", &report.cached, Some(report.hit_rate_pct))] {
        w.write_record([
            name.to_string(),
            p.steps.to_string(),
            p.reward.to_string(),
            p.total_latency_us.to_string(),
            p.mean_latency_us.to_string(),
            p.max_latency_us.to_string(),
            p.min_latency_us.to_string(),
            hit.map(|h| h.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let mut stdout = std::io::stdout().lock();
    if !ctx.quiet {
        stdout.write_all(report.table().as_bytes())?;
    }
    drop(stdout);
    ctx.finish(dir, vec![ctx.cfg.seed])
}
