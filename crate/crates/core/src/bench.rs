//! Benchmark drivers: the two-level distance sweep, the minimum-volume
//! search over distance sequences, and per-application distillation cost.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composer::{
    best_volume, compose_on, parallel_baseline, sequential_baseline, sequential_corner,
    single_level_front, sweep_two_level, total_qubits, AppRequirements, ComposeOptions,
    ParetoFront,
};
use crate::error::{Error, Result};
use crate::model::{build_levels, FactorySpec, PhysicalParams, Protocol};

pub fn odd_distances(lo: u32, hi: u32) -> Vec<u32> {
    (lo..=hi).filter(|d| d % 2 == 1).collect()
}

/// Odd pairs `(d1, d2)` with `d1 <= d2`.
pub fn odd_pairs(d_min: u32, d_max: u32) -> Vec<(u32, u32)> {
    let ds = odd_distances(d_min, d_max);
    let mut out = Vec::new();
    for (i, &a) in ds.iter().enumerate() {
        for &b in &ds[i..] {
            out.push((a, b));
        }
    }
    out
}

/// `1 - dynamic / baseline`.
pub fn reduction(dynamic: f64, baseline: f64) -> f64 {
    1.0 - dynamic / baseline
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelRow {
    pub d1: u32,
    pub d2: u32,
    pub dynamic_q: u64,
    pub dynamic_t: f64,
    pub dynamic_buffer: u64,
    pub dynamic_volume: f64,
    pub corner_volume: f64,
    pub sequential_volume: f64,
    pub parallel_volume: f64,
    pub reduction_vs_sequential: f64,
    pub reduction_vs_parallel: f64,
}

pub fn two_level_pair(
    d1: u32,
    d2: u32,
    params: &PhysicalParams,
    opts: &ComposeOptions,
) -> Result<TwoLevelRow> {
    let specs = build_levels(&[d1, d2], Protocol::FifteenToOne, params)?;
    let low = [specs[0].producer()];
    let points = sweep_two_level(&low, &specs[1], params, opts)?;
    let best = points
        .iter()
        .min_by(|a, b| a.volume().total_cmp(&b.volume()).then(a.q.cmp(&b.q)))
        .ok_or_else(|| Error::NoFeasibleConfig(format!("pair ({d1}, {d2})")))?;
    let corner = sequential_corner(&low, &specs[1], params, opts.include_failure_delay)?;
    let seq = sequential_baseline(&specs)?.volume();
    let par = parallel_baseline(&specs)?.volume();
    Ok(TwoLevelRow {
        d1,
        d2,
        dynamic_q: best.q,
        dynamic_t: best.t,
        dynamic_buffer: best.n_buf,
        dynamic_volume: best.volume(),
        corner_volume: corner.volume(),
        sequential_volume: seq,
        parallel_volume: par,
        reduction_vs_sequential: reduction(best.volume(), seq),
        reduction_vs_parallel: reduction(best.volume(), par),
    })
}

pub fn bench_two_level(
    d_min: u32,
    d_max: u32,
    params: &PhysicalParams,
    opts: &ComposeOptions,
) -> Result<Vec<TwoLevelRow>> {
    if d_min > d_max {
        return Err(Error::InvalidParameter(format!(
            "d_min {d_min} exceeds d_max {d_max}"
        )));
    }
    if d_min < 1 {
        return Err(Error::InvalidParameter("distances start at 1".into()));
    }
    odd_pairs(d_min, d_max)
        .par_iter()
        .map(|&(a, b)| two_level_pair(a, b, params, opts))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub pairs: usize,
    pub mean_reduction_vs_sequential: f64,
    pub mean_reduction_vs_parallel: f64,
    pub negative_vs_sequential: usize,
    pub negative_vs_parallel: usize,
    /// Pairs negative against at least one baseline.
    pub negative_either: usize,
    pub worst_reduction: f64,
}

pub fn summarize(rows: &[TwoLevelRow]) -> SweepSummary {
    let n = rows.len().max(1) as f64;
    let neg_s = rows
        .iter()
        .filter(|r| r.reduction_vs_sequential < 0.0)
        .count();
    let neg_p = rows
        .iter()
        .filter(|r| r.reduction_vs_parallel < 0.0)
        .count();
    SweepSummary {
        pairs: rows.len(),
        mean_reduction_vs_sequential: rows.iter().map(|r| r.reduction_vs_sequential).sum::<f64>()
            / n,
        mean_reduction_vs_parallel: rows.iter().map(|r| r.reduction_vs_parallel).sum::<f64>() / n,
        negative_vs_sequential: neg_s,
        negative_vs_parallel: neg_p,
        negative_either: rows
            .iter()
            .filter(|r| r.reduction_vs_sequential < 0.0 || r.reduction_vs_parallel < 0.0)
            .count(),
        worst_reduction: rows
            .iter()
            .flat_map(|r| [r.reduction_vs_sequential, r.reduction_vs_parallel])
            .fold(f64::INFINITY, f64::min),
    }
}

/// Distances with their built levels.
type Sequence = (Vec<u32>, Vec<FactorySpec>);

/// `(qubits, rounds)` of a closed-form baseline.
type BaselineFn = dyn Fn(&[FactorySpec]) -> Result<(u64, f64)>;

/// Cheapest pipeline found for one method at one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub distances: Vec<u32>,
    pub q: u64,
    pub t: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub target: f64,
    pub dynamic: Option<Choice>,
    pub sequential: Option<Choice>,
    pub parallel: Option<Choice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub distances: Vec<u32>,
    pub max_levels: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            distances: odd_distances(3, 47),
            max_levels: 3,
        }
    }
}

/// Every distance sequence whose levels each improve fidelity, grouped with
/// its output error.
fn sequences(space: &SearchSpace, params: &PhysicalParams) -> Vec<Sequence> {
    let mut out = Vec::new();
    let mut stack: Vec<Sequence> = vec![(Vec::new(), Vec::new())];
    while let Some((ds, specs)) = stack.pop() {
        if ds.len() == space.max_levels {
            continue;
        }
        let eps_in = specs.last().map_or(params.eps_raw, |s| s.eps_out);
        for &d in &space.distances {
            let Ok(spec) = Protocol::FifteenToOne.build(d, eps_in, params) else {
                continue;
            };
            if !spec.improves_fidelity() {
                continue;
            }
            let mut nd = ds.clone();
            nd.push(d);
            let mut ns = specs.clone();
            ns.push(spec);
            out.push((nd.clone(), ns.clone()));
            stack.push((nd, ns));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Lower bound on any dynamic pipeline's volume for these levels: the top
/// factory with a minimal buffer, running no sooner than every level back to
/// back.
fn dynamic_lower_bound(specs: &[FactorySpec]) -> f64 {
    let top = specs.last().expect("non-empty");
    let buffer = match specs.len() {
        1 => 0,
        n => top.burst_demand * specs[n - 2].patch_qubits(),
    };
    let t: u64 = specs.iter().map(|s| s.duration_rounds).sum();
    (top.physical_qubits + buffer) as f64 * t as f64
}

/// Minimum volume per target over all distance sequences, for the dynamic
/// pipeline and both baselines.
pub fn bench_threshold(
    targets: &[f64],
    params: &PhysicalParams,
    space: &SearchSpace,
    opts: &ComposeOptions,
) -> Result<Vec<ThresholdRow>> {
    for &t in targets {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target {t} outside (0, 1)"
            )));
        }
    }
    let seqs = sequences(space, params);
    let mut fronts: HashMap<Vec<u32>, Option<ParetoFront>> = HashMap::new();
    let mut rows = Vec::new();
    for &target in targets {
        let feasible: Vec<&Sequence> = seqs
            .iter()
            .filter(|(_, s)| s.last().expect("non-empty").eps_out <= target)
            .collect();
        let pick = |f: &BaselineFn| -> Result<Option<Choice>> {
            let mut best: Option<Choice> = None;
            for (ds, specs) in &feasible {
                let (q, t) = f(specs)?;
                let v = q as f64 * t;
                if best.as_ref().is_none_or(|b| v < b.volume) {
                    best = Some(Choice {
                        distances: ds.clone(),
                        q,
                        t,
                        volume: v,
                    });
                }
            }
            Ok(best)
        };
        let sequential = pick(&|s| {
            let c = sequential_baseline(s)?;
            Ok((c.q, c.t as f64))
        })?;
        let parallel = pick(&|s| {
            let c = parallel_baseline(s)?;
            Ok((c.q, c.t as f64))
        })?;

        let mut order: Vec<(f64, &Sequence)> = feasible
            .iter()
            .map(|e| (dynamic_lower_bound(&e.1), *e))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1 .0.cmp(&b.1 .0)));
        let mut dynamic: Option<Choice> = None;
        for (bound, (ds, specs)) in order {
            if dynamic.as_ref().is_some_and(|b| bound >= b.volume) {
                break;
            }
            let Some(front) = front_for(ds, specs, params, opts, &mut fronts)? else {
                continue;
            };
            let p = best_volume(&front).expect("non-empty front");
            if dynamic.as_ref().is_none_or(|b| p.volume() < b.volume) {
                dynamic = Some(Choice {
                    distances: ds.clone(),
                    q: p.q,
                    t: p.t,
                    volume: p.volume(),
                });
            }
        }
        rows.push(ThresholdRow {
            target,
            dynamic,
            sequential,
            parallel,
        });
    }
    Ok(rows)
}

/// Front of a sequence, reusing the cached front of its prefix.
fn front_for(
    ds: &[u32],
    specs: &[FactorySpec],
    params: &PhysicalParams,
    opts: &ComposeOptions,
    cache: &mut HashMap<Vec<u32>, Option<ParetoFront>>,
) -> Result<Option<ParetoFront>> {
    if let Some(f) = cache.get(ds) {
        return Ok(f.clone());
    }
    let front = if ds.len() == 1 {
        Some(single_level_front(&specs[0]))
    } else {
        let n = ds.len();
        match front_for(&ds[..n - 1], &specs[..n - 1], params, opts, cache)? {
            None => None,
            Some(below) => match compose_on(&below, &specs[n - 2], &specs[n - 1], params, opts) {
                Ok(f) => Some(f),
                Err(e) if e.is_infeasible() => None,
                Err(e) => return Err(e),
            },
        }
    };
    cache.insert(ds.to_vec(), front.clone());
    Ok(front)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRow {
    pub name: String,
    pub distances: Vec<u32>,
    pub output_error: f64,
    pub sequential_qubits: u64,
    pub parallel_qubits: u64,
    pub dynamic_qubits: u64,
    pub reduction_vs_sequential: f64,
    pub reduction_vs_parallel: f64,
}

/// Distillation qubits an application needs under each method.
pub fn app_costs(
    name: &str,
    distances: &[u32],
    app: &AppRequirements,
    params: &PhysicalParams,
    opts: &ComposeOptions,
) -> Result<AppRow> {
    app.validate()?;
    let specs = build_levels(distances, Protocol::FifteenToOne, params)?;
    let top = specs
        .last()
        .expect("build_levels returns at least one level");
    let secs = |rounds: f64| params.rounds_to_seconds(rounds);
    let seq = sequential_baseline(&specs)?;
    let par = parallel_baseline(&specs)?;
    let sequential_qubits = total_qubits(seq.q, secs(seq.t as f64), app)?;
    let parallel_qubits = total_qubits(par.q, secs(par.t as f64), app)?;
    let front = crate::composer::compose_specs(&specs, params, opts)?;
    let dynamic_qubits = front
        .points
        .iter()
        .filter_map(|p| total_qubits(p.q, secs(p.t), app).ok())
        .min()
        .ok_or(Error::PipelineTooSlow {
            t: secs(front.points.last().map_or(0.0, |p| p.t)),
            runtime: app.runtime_s,
        })?;
    Ok(AppRow {
        name: name.to_string(),
        distances: distances.to_vec(),
        output_error: top.eps_out,
        sequential_qubits,
        parallel_qubits,
        dynamic_qubits,
        reduction_vs_sequential: reduction(dynamic_qubits as f64, sequential_qubits as f64),
        reduction_vs_parallel: reduction(dynamic_qubits as f64, parallel_qubits as f64),
    })
}
