//! Exit criteria. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use magicpipe::allocator::oracle::{brute_force_fill, brute_force_rate};
use magicpipe::allocator::{max_rate_alloc, min_time_fill, AllocationProblem, Objective};
use magicpipe::bench::{bench_threshold, bench_two_level, odd_pairs, summarize, SearchSpace};
use magicpipe::composer::{
    compose_pareto, parallel_baseline, sequential_baseline, sweep_two_level, ComposeOptions,
};
use magicpipe::failure::{delay_from_series, expected_delay, monte_carlo_delay};
use magicpipe::model::{build_levels, FactoryCost, Preset, Protocol};
use magicpipe::scheduler::{launch_slack, launch_threshold, resume_threshold, Rate};
use magicpipe::simulator::{simulate_two_level, TwoLevelConfig};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!(
            "took {:.1}s, limit {:.0}s",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        )
    })
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn c1_factory_costs() -> Outcome {
    let start = Instant::now();
    let params = Preset::Table1.params();
    let specs =
        build_levels(&[3, 9, 15], Protocol::FifteenToOne, &params).map_err(|e| e.to_string())?;
    let eps = [2.1e-3, 2.5e-6, 2.1e-9];
    let qubits = [255u64, 2415, 6735];
    let micros = [13.2, 39.6, 66.0];
    for (i, s) in specs.iter().enumerate() {
        ensure(rel(s.eps_out, eps[i]) <= 0.05, || {
            format!("level {} eps_out {:e} vs {:e}", i + 1, s.eps_out, eps[i])
        })?;
        ensure(s.physical_qubits == qubits[i], || {
            format!(
                "level {} qubits {} vs {}",
                i + 1,
                s.physical_qubits,
                qubits[i]
            )
        })?;
        let us = s.duration_seconds(&params) * 1e6;
        ensure((us - micros[i]).abs() < 1e-9, || {
            format!("level {} time {us} us vs {}", i + 1, micros[i])
        })?;
    }
    within_budget(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "eps {:.3e}/{:.3e}/{:.3e}, qubits 255/2415/6735, 13.2/39.6/66.0 us",
        specs[0].eps_out, specs[1].eps_out, specs[2].eps_out
    ))
}

fn c2_baselines() -> Outcome {
    let start = Instant::now();
    let params = Preset::Table1.params();
    let specs =
        build_levels(&[3, 9, 15], Protocol::FifteenToOne, &params).map_err(|e| e.to_string())?;
    let seq = sequential_baseline(&specs).map_err(|e| e.to_string())?;
    let us = params.rounds_to_seconds(seq.t as f64) * 1e6;
    ensure(seq.q == 65_280, || format!("sequential Q {}", seq.q))?;
    ensure((us - 118.8).abs() < 1e-9, || {
        format!("sequential T {us} us")
    })?;
    let par = parallel_baseline(&specs[..2]).map_err(|e| e.to_string())?;
    ensure(par.copies_per_level[0] == 6, || {
        format!("parallel n_1 = {}", par.copies_per_level[0])
    })?;
    within_budget(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "sequential Q 65280, T {us:.1} us; parallel n_1 = 6"
    ))
}

fn c3_scheduler() -> Outcome {
    let start = Instant::now();
    let r = Rate::new(1, 5);
    let half = Rate::new(1, 10);
    ensure(launch_threshold(15, 4, &r, &r, 15) == 4, || {
        "equal rates".into()
    })?;
    ensure(
        launch_threshold(15, 4, &r, &Rate::new(1, 2), 15) == 4,
        || "faster supply".into(),
    )?;
    ensure(launch_threshold(15, 4, &r, &half, 15) == 10, || {
        "half-rate supply".into()
    })?;
    ensure(launch_threshold(15, 4, &r, &half, 6) == 6, || {
        "buffer clamp".into()
    })?;
    ensure(launch_threshold(15, 4, &r, &Rate::zero(), 15) == 15, || {
        "no supply".into()
    })?;
    ensure(resume_threshold(11, &r, &Rate::zero(), 15) == 11, || {
        "resume without supply".into()
    })?;
    ensure(resume_threshold(11, &r, &r, 15) == 1, || {
        "resume at matched rate".into()
    })?;

    let mut rates = BTreeSet::new();
    for q in 1..=30u64 {
        for p in 0..=30u64 {
            rates.insert(Rate::new(p, q));
        }
    }
    let rates: Vec<Rate> = rates.into_iter().collect();
    let mut checked = 0u64;
    for r_cons in rates.iter().filter(|r| !r.is_zero()) {
        for r_prod in &rates {
            for n in 1..=30u64 {
                for burst in 1..=n {
                    let s = launch_slack(n, burst, r_cons, r_prod);
                    if s < burst || s > n {
                        return Err(format!(
                            "slack {s} outside [{burst}, {n}] at r_cons {r_cons}, r_prod {r_prod}"
                        ));
                    }
                    checked += 1;
                }
            }
        }
    }
    within_budget(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("{} rates, {checked} exhaustive cases", rates.len()))
}

fn fc(qubits: u64, duration: u64, outputs: u64) -> FactoryCost {
    FactoryCost {
        qubits,
        duration,
        outputs,
    }
}

fn compare_fill(p: &AllocationProblem) -> Result<(), String> {
    match (min_time_fill(p), brute_force_fill(p)) {
        (Ok(a), Ok(b)) => ensure(a.objective == b.objective, || {
            format!(
                "fill {:?} vs oracle {:?} on {p:?}",
                a.objective, b.objective
            )
        }),
        (Err(a), Err(b)) => ensure(a == b, || format!("fill errors {a} vs {b}")),
        (a, b) => Err(format!("fill {a:?} vs oracle {b:?} on {p:?}")),
    }
}

fn compare_rate(p: &AllocationProblem) -> Result<(), String> {
    let a = max_rate_alloc(p).map_err(|e| e.to_string())?;
    let b = brute_force_rate(p).map_err(|e| e.to_string())?;
    ensure(a.objective == b.objective, || {
        format!(
            "rate {:?} vs oracle {:?} on {p:?}",
            a.objective, b.objective
        )
    })
}

fn c4_allocator() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let types = rng.gen_range(1..=3);
        let fs: Vec<FactoryCost> = (0..types)
            .map(|_| {
                fc(
                    rng.gen_range(100..=2000),
                    rng.gen_range(5..=80),
                    rng.gen_range(1..=2),
                )
            })
            .collect();
        let q = rng.gen_range(0..=5000);
        let n = rng.gen_range(1..=60);
        compare_fill(&AllocationProblem::fill(fs.clone(), q, n))?;
        compare_rate(&AllocationProblem::rate(fs, q))?;
    }
    let degenerate = [
        AllocationProblem::fill(vec![fc(255, 33, 1)], 1020, 8),
        AllocationProblem::fill(vec![fc(255, 33, 1)], 1020, 4),
        AllocationProblem::fill(vec![fc(255, 33, 1)], 254, 4),
    ];
    for p in &degenerate {
        compare_fill(p)?;
    }
    let fill = min_time_fill(&degenerate[0]).map_err(|e| e.to_string())?;
    ensure(fill.objective == Objective::Duration(66), || {
        format!("{fill:?}")
    })?;
    let fill = min_time_fill(&degenerate[1]).map_err(|e| e.to_string())?;
    ensure(fill.objective == Objective::Duration(33), || {
        format!("{fill:?}")
    })?;
    let rate = max_rate_alloc(&AllocationProblem::rate(vec![fc(255, 33, 1)], 1000))
        .map_err(|e| e.to_string())?;
    ensure(rate.objective == Objective::Rate(Rate::new(3, 33)), || {
        format!("{rate:?}")
    })?;
    for p in [
        AllocationProblem::rate(vec![fc(255, 33, 1)], 1000),
        AllocationProblem::rate(vec![fc(255, 33, 1)], 0),
        AllocationProblem::rate(vec![fc(300, 30, 1), fc(200, 10, 1)], 4900),
    ] {
        compare_rate(&p)?;
    }
    // stall refills of the (5, 17) pipeline, capped at the oracle's budget
    let params = Preset::Supercond.params();
    let low = build_levels(&[5], Protocol::FifteenToOne, &params).map_err(|e| e.to_string())?;
    for n in 1..=11 {
        compare_fill(&AllocationProblem::fill(vec![low[0].cost()], 5000, n))?;
    }
    within_budget(start.elapsed(), Duration::from_secs(30))?;
    Ok("50 random instances, 6 degenerate, 11 stall refills match".into())
}

fn c5_simulator() -> Outcome {
    let start = Instant::now();
    let params = Preset::Supercond.params();
    let mut traces = 0;
    let mut dominated = 0;
    for (d1, d2) in odd_pairs(3, 9) {
        let specs =
            build_levels(&[d1, d2], Protocol::FifteenToOne, &params).map_err(|e| e.to_string())?;
        let low = vec![specs[0].producer()];
        let high = specs[1].clone();
        let corner = TwoLevelConfig::forced_sequential(low.clone(), high.clone(), params);
        let corner_trace = simulate_two_level(&corner).map_err(|e| e.to_string())?;
        let corner_volume = corner_trace.qubits_used as f64 * corner_trace.total_rounds as f64;
        let mut best_by_budget: BTreeMap<u64, f64> = BTreeMap::new();
        for n_buf in 4..=15 {
            let base = TwoLevelConfig::new(low.clone(), high.clone(), 0, n_buf, params);
            let lo = base.min_budget();
            let hi = base.buffer_qubits() + high.physical_qubits + 15 * low[0].cost.qubits;
            let mut budgets = vec![lo, (lo + hi) / 2, hi, corner.q_budget];
            budgets.sort_unstable();
            budgets.dedup();
            for b in budgets {
                let cfg = TwoLevelConfig {
                    q_budget: b,
                    ..base.clone()
                };
                let trace = match simulate_two_level(&cfg) {
                    Ok(t) => t,
                    Err(e) if e.is_infeasible() => continue,
                    Err(e) => return Err(format!("({d1},{d2}) n_buf {n_buf} budget {b}: {e}")),
                };
                trace
                    .check_invariants(n_buf)
                    .map_err(|e| format!("({d1},{d2}) n_buf {n_buf} budget {b}: {e}"))?;
                ensure(trace.qubits_used <= b, || {
                    format!("({d1},{d2}) uses {} > budget {b}", trace.qubits_used)
                })?;
                let again = simulate_two_level(&cfg).map_err(|e| e.to_string())?;
                let (mut x, mut y) = (Vec::new(), Vec::new());
                trace.write_csv(&mut x).map_err(|e| e.to_string())?;
                again.write_csv(&mut y).map_err(|e| e.to_string())?;
                ensure(trace == again && x == y, || {
                    format!("({d1},{d2}) n_buf {n_buf} budget {b} not deterministic")
                })?;
                let v = trace.qubits_used as f64 * trace.total_rounds as f64;
                let e = best_by_budget.entry(b).or_insert(f64::INFINITY);
                *e = e.min(v);
                traces += 1;
            }
        }
        // best volume at budget <= B never exceeds the corner, for every B
        // at or above the corner budget
        let mut best = f64::INFINITY;
        for (&b, &v) in &best_by_budget {
            best = best.min(v);
            if b >= corner.q_budget {
                ensure(best <= corner_volume, || {
                    format!("({d1},{d2}) best {best} > corner {corner_volume} at budget {b}")
                })?;
            }
        }
        if best < corner_volume {
            dominated += 1;
        }
    }
    ensure(traces >= 200, || format!("only {traces} feasible configs"))?;
    within_budget(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "{traces} configs, corner strictly beaten on {dominated}/10 pairs"
    ))
}

fn c6_markov() -> Outcome {
    let start = Instant::now();
    let params = Preset::Supercond.params();
    let specs =
        build_levels(&[3, 5], Protocol::FifteenToOne, &params).map_err(|e| e.to_string())?;
    let base = TwoLevelConfig::new(vec![specs[0].producer()], specs[1].clone(), 0, 4, params);
    let cfg = TwoLevelConfig {
        q_budget: base.min_budget(),
        ..base
    };
    let trace = simulate_two_level(&cfg).map_err(|e| e.to_string())?;
    let est = expected_delay(&trace).map_err(|e| e.to_string())?;
    let mc = monte_carlo_delay(&trace, 1_000_000, 6).map_err(|e| e.to_string())?;
    ensure(est.expected_delay > 0.0, || {
        "degenerate config: no delay".into()
    })?;
    ensure(rel(mc, est.expected_delay) <= 0.05, || {
        format!("markov {} vs monte carlo {mc}", est.expected_delay)
    })?;
    ensure(est.max_norm_error <= 1e-12, || {
        format!("norm error {:e}", est.max_norm_error)
    })?;
    let mut perfect = trace.clone();
    perfect.p_succ = 1.0;
    let zero = expected_delay(&perfect)
        .map_err(|e| e.to_string())?
        .expected_delay;
    ensure(zero == 0.0, || format!("p_succ = 1 gives {zero}"))?;
    let direct = delay_from_series(
        &trace.produced_series,
        &trace.consumed_series,
        4,
        1.0,
        |_| 100.0,
    );
    ensure(direct.expected_delay == 0.0, || {
        "series with p_succ = 1".into()
    })?;
    within_budget(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "markov {:.5} vs monte carlo {mc:.5} rounds ({:.2}%), norm error {:.1e}",
        est.expected_delay,
        100.0 * rel(mc, est.expected_delay),
        est.max_norm_error
    ))
}

fn c7_two_level_sweep() -> Outcome {
    let start = Instant::now();
    let params = Preset::Supercond.params();
    let rows =
        bench_two_level(3, 21, &params, &ComposeOptions::default()).map_err(|e| e.to_string())?;
    let s = summarize(&rows);
    let detail = format!(
        "{} pairs, mean vs sequential {:.1}%, vs parallel {:.1}%, negative {} (worst {:.1}%)",
        s.pairs,
        100.0 * s.mean_reduction_vs_sequential,
        100.0 * s.mean_reduction_vs_parallel,
        s.negative_either,
        100.0 * s.worst_reduction
    );
    let a = (0.15..=0.45).contains(&s.mean_reduction_vs_sequential);
    let b = (0.05..=0.25).contains(&s.mean_reduction_vs_parallel);
    let c = s.negative_either as f64 <= 0.10 * s.pairs as f64 && s.worst_reduction >= -0.10;
    let mut failed = Vec::new();
    for (ok, name) in [(a, "a"), (b, "b"), (c, "c")] {
        if !ok {
            failed.push(name);
        }
    }
    within_budget(start.elapsed(), Duration::from_secs(600))?;
    if failed.is_empty() {
        Ok(detail)
    } else {
        let negatives: Vec<String> = rows
            .iter()
            .filter(|r| r.reduction_vs_sequential < 0.0 || r.reduction_vs_parallel < 0.0)
            .map(|r| format!("({},{})", r.d1, r.d2))
            .collect();
        Err(format!(
            "part {} out of range; {detail}; negative pairs {}",
            failed.join(","),
            negatives.join(" ")
        ))
    }
}

fn c8_case_study() -> Outcome {
    let start = Instant::now();
    let params = Preset::Supercond.params();
    let opts = ComposeOptions::default();
    let front = compose_pareto(&[5, 17], Protocol::FifteenToOne, &params, &opts)
        .map_err(|e| e.to_string())?;
    let mut by_budget: Vec<(u64, f64)> = front
        .points
        .iter()
        .map(|p| (p.config.budget, p.t))
        .collect();
    by_budget.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
    ensure(by_budget.windows(2).all(|w| w[1].1 <= w[0].1), || {
        format!("front t rises with budget: {by_budget:?}")
    })?;

    let specs =
        build_levels(&[5, 17], Protocol::FifteenToOne, &params).map_err(|e| e.to_string())?;
    let low = [specs[0].producer()];
    let points = sweep_two_level(&low, &specs[1], &params, &opts).map_err(|e| e.to_string())?;
    let floor = specs[0].duration_rounds + specs[1].duration_rounds;
    // plateau: some buffer size reaches the floor at two or more budgets
    let mut at_floor: BTreeMap<u64, usize> = BTreeMap::new();
    for p in points.iter().filter(|p| p.rounds == floor) {
        *at_floor.entry(p.n_buf).or_default() += 1;
    }
    ensure(at_floor.values().any(|&c| c >= 2), || {
        format!("no plateau at {floor} rounds")
    })?;
    let min_rounds = points.iter().map(|p| p.rounds).min().unwrap_or(0);
    ensure(min_rounds == floor, || {
        format!("min rounds {min_rounds}, floor {floor}")
    })?;

    let mut best: BTreeMap<u64, f64> = BTreeMap::new();
    for p in &points {
        let e = best.entry(p.n_buf).or_insert(f64::INFINITY);
        *e = e.min(p.volume());
    }
    let (&opt_buf, &opt_vol) = best
        .iter()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
        .ok_or("empty sweep")?;
    ensure(opt_buf > 4 && opt_buf < 15, || {
        format!("best buffer {opt_buf}")
    })?;
    ensure(opt_vol <= best[&4] && opt_vol <= best[&15], || {
        "best volume above an endpoint".into()
    })?;
    within_budget(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "{} front points, plateau at {floor} rounds, best buffer {opt_buf} ({:.4e} vs {:.4e} at 4, {:.4e} at 15)",
        front.len(),
        opt_vol,
        best[&4],
        best[&15]
    ))
}

fn c9_threshold() -> Outcome {
    let start = Instant::now();
    let params = Preset::Supercond.params();
    let targets = [1e-10, 1e-15, 1e-20, 1e-25, 1e-30];
    let rows = bench_threshold(
        &targets,
        &params,
        &SearchSpace::default(),
        &ComposeOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let mut compared = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for r in &rows {
        let (Some(d), Some(s), Some(p)) = (&r.dynamic, &r.sequential, &r.parallel) else {
            continue;
        };
        compared += 1;
        worst = worst.max(d.volume / s.volume).max(d.volume / p.volume);
        ensure(
            d.volume <= 1.04 * s.volume && d.volume <= 1.04 * p.volume,
            || {
                format!(
                    "target {:e}: dynamic {:.4e} vs sequential {:.4e}, parallel {:.4e}",
                    r.target, d.volume, s.volume, p.volume
                )
            },
        )?;
    }
    ensure(compared > 0, || {
        "no target feasible for all three methods".into()
    })?;
    within_budget(start.elapsed(), Duration::from_secs(900))?;
    Ok(format!(
        "{compared}/{} targets compared, worst dynamic/baseline ratio {worst:.3}",
        targets.len()
    ))
}

fn run_cli(out: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_magicpipe"))
        .arg("--out")
        .arg(out)
        .args(args)
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || {
        format!("{args:?} exited with {status}")
    })
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        out.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            bytes,
        );
    }
    Ok(out)
}

fn c10_cli() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = dir.path().join("pipeline.json");
    std::fs::write(
        &spec,
        r#"{"preset": "table1", "code_distances": [3, 9, 15]}"#,
    )
    .map_err(|e| e.to_string())?;
    let spec = spec.to_string_lossy().into_owned();
    let runs: [(&str, Vec<&str>); 3] = [
        (
            "simulate",
            vec!["simulate", &spec, "--mc-samples", "2000", "--seed", "7"],
        ),
        ("pareto", vec!["pareto", &spec]),
        (
            "bench",
            vec!["bench-two-level", "--d-min", "3", "--d-max", "7"],
        ),
    ];
    let mut files = 0;
    for (name, args) in &runs {
        let out = dir.path().join(name);
        run_cli(&out, args)?;
        let first = snapshot(&out)?;
        run_cli(&out, args)?;
        let second = snapshot(&out)?;
        ensure(first.contains_key("manifest.json"), || {
            format!("{name}: no manifest")
        })?;
        ensure(first.keys().any(|k| k.ends_with(".csv")), || {
            format!("{name}: no csv")
        })?;
        for (file, bytes) in &first {
            ensure(second.get(file) == Some(bytes), || {
                format!("{name}/{file} differs")
            })?;
        }
        ensure(first.len() == second.len(), || {
            format!("{name}: file set changed")
        })?;
        files += first.len();
    }
    within_budget(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{files} files byte-identical across repeated runs"))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("factory costs (3, 9, 15)", c1_factory_costs),
        ("baseline closure", c2_baselines),
        ("scheduler thresholds", c3_scheduler),
        ("allocator oracle equivalence", c4_allocator),
        ("simulator invariants", c5_simulator),
        ("markov delay vs monte carlo", c6_markov),
        ("two-level sweep trends", c7_two_level_sweep),
        ("(5,17) case study", c8_case_study),
        ("threshold search", c9_threshold),
        ("cli reproducibility", c10_cli),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|s| s.parse().ok());
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                println!("criterion {n:>2} FAIL  {name} [{secs:.1}s]: {detail}");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
