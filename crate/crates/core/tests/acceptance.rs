//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line
//! (straight to stdout, so it shows without `--nocapture`) and then asserts.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use hvaclab_core::comfort::{pmv, ppd, ComfortParams};
use hvaclab_core::dqn::{
    cache_benchmark, evaluate, summarize_curves, train, Comparison, FullRandom, Masking, MaskedRandom, QNetwork,
    TrainConfig,
};
use hvaclab_core::env::{generate_demonstrations, BehaviorPolicy, Environment, HistoricalLog, JointAction, NUM_ACTIONS};
use hvaclab_core::equipment::{FcuParams, PumpParams};
use hvaclab_core::hydraulics::{build_network, HydraulicSolver, NetworkConfig};
use hvaclab_core::mask::{
    joint_mask, knn_feasible_sets, remaining_percentage, CacheConfig, FeasibleSets, FullMaskProvider, KnnOracle,
    MaskProviderConfig,
};
use hvaclab_core::thermal::ZoneParams;
use hvaclab_core::{Scenario, ZONES};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DEMO_DAYS: usize = 16;
const DEMO_SEED: u64 = 1000;

fn report(id: u32, name: &str, pass: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let within = elapsed <= limit;
    let verdict = if pass && within { "PASS" } else { "FAIL" };
    let line = format!(
        "[{verdict}] criterion {id:>2} {name}: {detail} ({:.2} s, limit {} s)\n",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {id} failed: {detail}");
    assert!(within, "criterion {id} exceeded its time limit: {:.1} s", elapsed.as_secs_f64());
}

fn demo_oracle(sc: &Scenario) -> KnnOracle {
    let rule = BehaviorPolicy::new(sc.behavior.clone());
    let log = generate_demonstrations(sc, &rule, DEMO_DAYS, DEMO_SEED).unwrap();
    KnnOracle::from_log(&log, sc, MaskProviderConfig::default()).unwrap()
}

/// Fanger's comfort balance written out directly, with the clothing surface
/// temperature found by bisection on its implicit equation.
fn fanger_oracle(ta: f64, p: &ComfortParams) -> f64 {
    let tr = ta;
    let m = p.metabolic_met * 58.15;
    let w = 0.0;
    let icl = 0.155 * p.clothing_clo;
    let fcl = if icl <= 0.078 { 1.0 + 1.29 * icl } else { 1.05 + 0.645 * icl };
    let psat_kpa = (16.6536 - 4030.183 / (ta + 235.0)).exp();
    let pa = p.relative_humidity_pct / 100.0 * psat_kpa * 1000.0;
    let hc_of = |tcl: f64| (2.38 * (tcl - ta).abs().powf(0.25)).max(12.1 * p.air_velocity_m_s.sqrt());
    let radiation = |tcl: f64| 3.96e-8 * fcl * ((tcl + 273.0).powi(4) - (tr + 273.0).powi(4));
    let balance = |tcl: f64| {
        35.7 - 0.028 * (m - w) - icl * (radiation(tcl) + fcl * hc_of(tcl) * (tcl - ta)) - tcl
    };
    let (mut lo, mut hi) = (ta - 20.0, 45.0);
    assert!(balance(lo) > 0.0 && balance(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tcl = 0.5 * (lo + hi);
    let hc = hc_of(tcl);
    let load = (m - w)
        - 3.05e-3 * (5733.0 - 6.99 * (m - w) - pa)
        - (0.42 * ((m - w) - 58.15)).max(0.0)
        - 1.7e-5 * m * (5867.0 - pa)
        - 0.0014 * m * (34.0 - ta)
        - radiation(tcl)
        - fcl * hc * (tcl - ta);
    (0.303 * (-0.036 * m).exp() + 0.028) * load
}

#[test]
fn criterion_01_comfort_formula() {
    let t = Instant::now();
    let params = ComfortParams::default();
    let p0 = ppd(0.0);
    let (p_lo, p_hi) = (ppd(-0.5), ppd(0.5));
    let max_dev = (18..=32)
        .map(|ta| (pmv(f64::from(ta), &params).unwrap() - fanger_oracle(f64::from(ta), &params)).abs())
        .fold(0.0, f64::max);
    let pass = p0 == 5.0 && (9.5..=11.0).contains(&p_lo) && (9.5..=11.0).contains(&p_hi) && max_dev <= 0.01;
    report(
        1,
        "comfort formula",
        pass,
        t.elapsed(),
        Duration::from_secs(1),
        &format!("ppd(0) = {p0}, ppd(±0.5) = {p_lo:.3}/{p_hi:.3} %, max |ΔPMV| vs oracle = {max_dev:.2e} (≤ 0.01)"),
    );
}

#[test]
fn criterion_02_physics_laws() {
    let t = Instant::now();
    let fcu = FcuParams::default();
    let half = fcu
        .mode_airflow_fractions
        .iter()
        .position(|&f| f == 0.5)
        .expect("a mode at half rated airflow") as u8;
    let fan = fcu.fan_power(half).unwrap();
    let fan_err = (fan - 0.5f64.powf(1.5) * fcu.rated_fan_power_w).abs() / fcu.rated_fan_power_w;
    let pump = PumpParams::default();
    let pw = pump.power(pump.rated_freq_hz / 2.0).unwrap();
    let pump_err = (pw - pump.rated_power_w / 8.0).abs() / pump.rated_power_w;
    let head_ok = (0..100).all(|i| {
        let q = 2.0 * pump.rated_flow_m3_s * f64::from(i) / 99.0;
        pump.head(q, pump.rated_freq_hz).unwrap() == pump.head_rated(q)
    });
    let pass = fan_err <= 1e-12 && pump_err <= 1e-12 && head_ok;
    report(
        2,
        "physics laws",
        pass,
        t.elapsed(),
        Duration::from_secs(1),
        &format!("fan rel err {fan_err:.1e}, pump rel err {pump_err:.1e} (≤ 1e-12), rated head pointwise equal: {head_ok}"),
    );
}

#[test]
fn criterion_03_hydraulic_solver() {
    let t = Instant::now();
    let sc = Scenario::default();
    let mut env = Environment::new(sc.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    env.reset(11);
    let (mut worst_res, mut worst_mass, mut solves) = (0.0f64, 0.0f64, 0);
    while !env.is_done() {
        let a = JointAction::from_index(rng.random_range(0..NUM_ACTIONS)).unwrap();
        let info = env.step(a).unwrap().info;
        worst_res = worst_res.max(info.hydraulic_residual_kpa);
        worst_mass = worst_mass.max(info.mass_imbalance_rel);
        solves += 1;
    }

    // one zone with its valve shut: pump, headers and bypass form a single loop
    let pump = sc.pump.clone();
    let cfg = NetworkConfig::default();
    let topo = build_network(&[ZoneParams::new(1, 100.0)], &[FcuParams::default()], &pump, &cfg).unwrap();
    let freq = 40.0;
    let sol = HydraulicSolver::new()
        .solve(&topo, &pump, freq, &[false], 1e-9, cfg.reference_pressure_kpa)
        .unwrap();
    let r_loop = cfg.supply_header_resistance + cfg.return_header_resistance + cfg.bypass_resistance;
    let ratio = freq / pump.rated_freq_hz;
    let excess = |q: f64| ratio * ratio * (pump.alpha1 * q * q + pump.alpha2 * q + pump.alpha3) - r_loop * q * q;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q_oracle = 0.5 * (lo + hi);
    let loop_err = (sol.pump_flow_m3_s - q_oracle).abs();

    let pass = solves == 120 && worst_res <= 1e-3 && worst_mass <= 1e-9 && loop_err <= 1e-6;
    report(
        3,
        "hydraulic solver",
        pass,
        t.elapsed(),
        Duration::from_secs(5),
        &format!(
            "{solves} steps, max residual {worst_res:.2e} kPa (≤ 1e-3), max mass imbalance {worst_mass:.2e} (≤ 1e-9), \
             single loop |Δq| {loop_err:.2e} m³/s (≤ 1e-6)"
        ),
    );
}

/// Exhaustive scan: sort every row by (distance, index) and count levels.
fn brute_force_sets(features: &[Vec<f64>], actions: &[JointAction], q: &[f64], k: usize, tau: f64) -> [u8; ZONES] {
    let mut rows: Vec<(f64, usize)> = features
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
        .collect();
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut bits = [0u8; ZONES];
    for (j, b) in bits.iter_mut().enumerate() {
        for level in 0..4u8 {
            let n = rows[..k].iter().filter(|&&(_, i)| actions[i].level(j) == level).count();
            if n as f64 / k as f64 >= tau {
                *b |= 1 << level;
            }
        }
    }
    bits
}

#[test]
fn criterion_04_knn_oracle_equivalence() {
    let t = Instant::now();
    let sc = Scenario::default();
    let rule = BehaviorPolicy::new(sc.behavior.clone());
    let mut log = generate_demonstrations(&sc, &rule, 9, 7).unwrap();
    log.rows.truncate(1000);
    let log = HistoricalLog { rows: log.rows };
    let cfg = MaskProviderConfig::default();
    let oracle = KnnOracle::from_log(&log, &sc, cfg.clone()).unwrap();
    let data = oracle.dataset();
    let features: Vec<Vec<f64>> = data.features.iter().map(|f| f.to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut agree, mut empty) = (0, 0);
    for i in 0..200 {
        // half near logged rows, half anywhere in the scaled box
        let q: Vec<f64> = if i % 2 == 0 {
            let base = &features[rng.random_range(0..features.len())];
            base.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect()
        } else {
            (0..features[0].len()).map(|_| rng.random_range(-0.1..1.1)).collect()
        };
        let expected = brute_force_sets(&features, &data.actions, &q, cfg.k, cfg.tau);
        empty += expected.iter().filter(|&&b| b == 0).count();
        if let Ok(got) = knn_feasible_sets(data, &q, &cfg) {
            if got.bits() == expected {
                agree += 1;
            }
        }
    }
    report(
        4,
        "kNN oracle equivalence",
        agree == 200 && empty == 0 && log.len() == 1000,
        t.elapsed(),
        Duration::from_secs(10),
        &format!("{agree}/200 queries equal the exhaustive scan over {} rows, {empty} empty sets", log.len()),
    );
}

#[test]
fn criterion_05_mask_algebra() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut product_ok = 0;
    for _ in 0..1000 {
        let sets = FeasibleSets::from_bits(std::array::from_fn(|_| rng.random_range(1u8..16))).unwrap();
        let product: usize = (0..ZONES).map(|j| sets.levels(j).len()).product();
        if joint_mask(&sets).popcount() == product {
            product_ok += 1;
        }
    }
    let bijection = (0..NUM_ACTIONS).all(|i| {
        let a = JointAction::from_index(i).unwrap();
        JointAction::from_levels(&a.levels()).unwrap().index() == i
    });
    let pct = |sizes: [usize; ZONES]| {
        let sets = FeasibleSets::from_bits(sizes.map(|n| ((1u16 << n) - 1) as u8)).unwrap();
        let mask = joint_mask(&sets);
        (mask.count(), format!("{:.2}", remaining_percentage(&mask)))
    };
    let table = [
        (pct([4, 2, 2, 3, 3, 3, 2]), (864, "5.27")),
        (pct([4, 4, 4, 3, 3, 3, 4]), (6912, "42.19")),
        (pct([4; ZONES]), (16384, "100.00")),
    ];
    let table_ok = table.iter().all(|((n, p), (en, ep))| n == en && p == ep);
    report(
        5,
        "mask algebra",
        product_ok == 1000 && bijection && table_ok,
        t.elapsed(),
        Duration::from_secs(5),
        &format!(
            "popcount = product on {product_ok}/1000, 4^7 bijection {bijection}, percentages {}",
            table.iter().map(|((n, p), _)| format!("{n} → {p}%")).collect::<Vec<_>>().join(", ")
        ),
    );
}

#[test]
fn criterion_06_gradient_correctness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = QNetwork::new(&[3, 6, 5, 4], &mut rng).unwrap();
    let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
    let actions = [0, 2, 2, 3, 1];
    let targets: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, grads) = net.loss_and_gradients(x.view(), &actions, &targets).unwrap();
    let analytic = grads.to_dense(&net);
    let params = net.parameters();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += h;
        probe.set_parameters(&p).unwrap();
        let up = probe.loss_and_gradients(x.view(), &actions, &targets).unwrap().0;
        p[i] -= 2.0 * h;
        probe.set_parameters(&p).unwrap();
        let down = probe.loss_and_gradients(x.view(), &actions, &targets).unwrap().0;
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    report(
        6,
        "gradient correctness",
        worst < 1e-4,
        t.elapsed(),
        Duration::from_secs(5),
        &format!("{} parameters, max relative error {worst:.2e} (< 1e-4)", params.len()),
    );
}

#[test]
fn criterion_07_cold_start() {
    let t = Instant::now();
    let sc = Scenario::default();
    let oracle = demo_oracle(&sc);
    let mut env = Environment::new(sc).unwrap();
    let full = evaluate(&mut FullRandom::new(7), &mut env, None, 20, &[0]).unwrap();
    let masked = evaluate(&mut MaskedRandom::new(7), &mut env, Some(&oracle), 20, &[0]).unwrap();
    let c = Comparison::between(&full, &masked);
    let pass = c.reward_pct >= 10.0 && c.ppd_pct >= 10.0 && c.worst() >= -2.0;
    report(
        7,
        "cold-start masked vs full random",
        pass,
        t.elapsed(),
        Duration::from_secs(120),
        &format!(
            "improvements energy {:+.2}%, |PMV| {:+.2}%, PPD {:+.2}% (≥ 10), reward {:+.2}% (≥ 10), worst {:+.2}% (≥ -2)",
            c.energy_pct,
            c.pmv_abs_pct,
            c.ppd_pct,
            c.reward_pct,
            c.worst()
        ),
    );
}

/// Budget of the masked-vs-vanilla comparison.
fn training_config() -> TrainConfig {
    TrainConfig {
        episodes: 300,
        seeds: vec![0, 1, 2],
        hidden_layers: vec![128, 128],
        ..TrainConfig::default()
    }
}

#[test]
fn criterion_08_training_reproduction() {
    let t = Instant::now();
    let sc = Scenario::default();
    let oracle = demo_oracle(&sc);
    let cfg = training_config();
    let env = Environment::new(sc).unwrap();
    let runs: Vec<(bool, u64)> = [true, false]
        .into_iter()
        .flat_map(|m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    // one worker per core; more threads than cores only adds cache thrash
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(runs.len());
    let next = AtomicUsize::new(0);
    let mut curves: Vec<(usize, bool, Vec<f64>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let (cfg, oracle, runs, next) = (&cfg, &oracle, &runs, &next);
                let mut env = env.clone();
                scope.spawn(move || {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&(masked, seed)) = runs.get(i) else { break done };
                        let masking = if masked { Masking::Provider(oracle) } else { Masking::Disabled };
                        let out = train(&mut env, masking, cfg, seed, |_, _| Ok(())).unwrap();
                        done.push((i, masked, out.rewards()));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    curves.sort_by_key(|c| c.0);
    let pick = |m: bool| curves.iter().filter(|c| c.1 == m).map(|c| c.2.clone()).collect::<Vec<_>>();
    let masked = summarize_curves(&pick(true), 0.05).unwrap();
    let vanilla = summarize_curves(&pick(false), 0.05).unwrap();
    let gain = (masked.final_mean - vanilla.final_mean) / vanilla.final_mean.abs() * 100.0;
    let pass = gain >= 5.0 && masked.auc > vanilla.auc;
    report(
        8,
        "masked vs vanilla DQN training",
        pass,
        t.elapsed(),
        Duration::from_secs(30 * 60),
        &format!(
            "final-5% mean {:.1} vs {:.1} ({gain:+.2}%, ≥ 5), AUC {:.0} vs {:.0}, terminal std {:.1} vs {:.1}, \
             {} seeds × {} episodes",
            masked.final_mean,
            vanilla.final_mean,
            masked.auc,
            vanilla.auc,
            masked.terminal_std,
            vanilla.terminal_std,
            cfg.seeds.len(),
            cfg.episodes
        ),
    );
}

#[test]
fn criterion_09_vanilla_equivalence() {
    let t = Instant::now();
    let sc = Scenario::default();
    let cfg = TrainConfig {
        episodes: 12,
        ..training_config()
    };
    let mut env = Environment::new(sc).unwrap();
    let full = train(&mut env, Masking::Provider(&FullMaskProvider), &cfg, 9, |_, _| Ok(())).unwrap();
    let plain = train(&mut env, Masking::Disabled, &cfg, 9, |_, _| Ok(())).unwrap();
    let bits = |r: Vec<f64>| r.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    let same_curve = bits(full.rewards()) == bits(plain.rewards());
    let same_net = full.network.parameters().iter().map(|p| p.to_bits()).eq(plain.network.parameters().iter().map(|p| p.to_bits()));
    report(
        9,
        "vanilla equivalence",
        same_curve && same_net && full.gradient_steps > 0,
        t.elapsed(),
        Duration::from_secs(5 * 60),
        &format!(
            "{} episodes, {} gradient steps, curves bit-identical {same_curve}, networks bit-identical {same_net}",
            cfg.episodes, full.gradient_steps
        ),
    );
}

#[test]
fn criterion_10_cache_benchmark() {
    let t = Instant::now();
    let sc = Scenario::default();
    let oracle = demo_oracle(&sc);
    let mut env = Environment::new(sc).unwrap();
    let r = cache_benchmark(&mut env, oracle, CacheConfig::default(), 10, true).unwrap();
    let pass = r.speedup() >= 5.0 && r.hit_rate_pct >= 80.0 && r.cached.steps == r.uncached.steps;
    report(
        10,
        "mask cache benchmark",
        pass,
        t.elapsed(),
        Duration::from_secs(120),
        &format!(
            "latency {:.2} → {:.2} µs ({:.1}x, ≥ 5x), hit rate {:.1}% (≥ 80), steps {}/{}, reward uncached {:.2} cached {:.2}",
            r.uncached.mean_latency_us,
            r.cached.mean_latency_us,
            r.speedup(),
            r.hit_rate_pct,
            r.uncached.steps,
            r.cached.steps,
            r.uncached.reward,
            r.cached.reward
        ),
    );
}

#[test]
fn criterion_11_action_space_reduction() {
    let t = Instant::now();
    let sc = Scenario::default();
    let oracle = demo_oracle(&sc);
    let mut env = Environment::new(sc).unwrap();
    let report_ = evaluate(&mut MaskedRandom::new(11), &mut env, Some(&oracle), 5, &[0]).unwrap();
    let r = report_.remaining.expect("a mask source was given");
    let table = r.table();
    let formatted = table.contains("Statistic") && table.contains("Maximum") && table.contains("Average");
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(table.as_bytes());
    drop(out);
    report(
        11,
        "action-space reduction",
        r.avg_pct() < 60.0 && formatted && r.steps == 600,
        t.elapsed(),
        Duration::from_secs(120),
        &format!(
            "max {:.2}%, min {:.2}%, average {:.2}% (< 60) over {} steps",
            r.max_pct(),
            r.min_pct(),
            r.avg_pct(),
            r.steps
        ),
    );
}
