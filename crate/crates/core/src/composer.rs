//! Multi-level composition: budget/buffer sweeps over two-level stages,
//! Pareto fronts, recursion through composite producers, closed-form
//! baselines and the qubit-time metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::failure::expected_delay;
use crate::model::{
    build_levels, qubits_per_patch, CompositeFactory, FactorySpec, PhysicalParams, Producer,
    Protocol, SupplyDescriptor,
};
use crate::simulator::{simulate_two_level, TwoLevelConfig};

/// Where a front point came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub distances: Vec<u32>,
    /// Budget of the top two-level stage (the factory's own footprint for a
    /// single level).
    pub budget: u64,
    /// Buffer capacity of the top stage; zero for a single level.
    pub buffer_size: u64,
    pub rounds: u64,
    pub expected_delay: f64,
    pub stall_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub q: u64,
    /// Rounds, including the expected failure delay.
    pub t: f64,
    pub config: PipelineConfig,
}

impl ParetoPoint {
    pub fn volume(&self) -> f64 {
        volume(self.q, self.t)
    }
}

/// Non-dominated points, `q` ascending and `t` strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<ParetoPoint>,
}

impl ParetoFront {
    pub fn from_points(mut points: Vec<ParetoPoint>) -> Self {
        points.sort_by(|a, b| {
            a.q.cmp(&b.q)
                .then(a.t.total_cmp(&b.t))
                .then(a.config.buffer_size.cmp(&b.config.buffer_size))
                .then(a.config.budget.cmp(&b.config.budget))
        });
        let mut out: Vec<ParetoPoint> = Vec::new();
        for p in points {
            if out.last().is_none_or(|l| p.t < l.t) {
                out.push(p);
            }
        }
        Self { points: out }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when sorted by `q` with `t` strictly decreasing.
    pub fn is_valid(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[0].q < w[1].q && w[0].t > w[1].t)
    }

    /// Merge two fronts; associative and commutative.
    pub fn merge(&self, other: &ParetoFront) -> ParetoFront {
        ParetoFront::from_points(self.points.iter().chain(&other.points).cloned().collect())
    }
}

pub fn volume(q: u64, t: f64) -> f64 {
    q as f64 * t
}

/// Point of least `q·t`; ties go to the smaller `q`.
pub fn best_volume(front: &ParetoFront) -> Option<&ParetoPoint> {
    front
        .points
        .iter()
        .min_by(|a, b| a.volume().total_cmp(&b.volume()).then(a.q.cmp(&b.q)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRequirements {
    pub required_fidelity: f64,
    pub magic_count: u64,
    /// Program runtime in seconds.
    pub runtime_s: f64,
    pub preset: String,
}

impl AppRequirements {
    pub fn validate(&self) -> Result<()> {
        if !(self.required_fidelity > 0.0 && self.required_fidelity < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "required_fidelity {} must lie in (0, 1)",
                self.required_fidelity
            )));
        }
        if self.magic_count == 0 {
            return Err(Error::InvalidParameter(
                "magic_count must be positive".into(),
            ));
        }
        if !(self.runtime_s > 0.0 && self.runtime_s.is_finite()) {
            return Err(Error::InvalidParameter("runtime_s must be positive".into()));
        }
        Ok(())
    }
}

/// Qubits for enough pipeline copies to deliver the program's states within
/// its runtime. `t_s` is one pipeline output's duration in seconds.
pub fn total_qubits(q: u64, t_s: f64, app: &AppRequirements) -> Result<u64> {
    let per_copy = (app.runtime_s / t_s).floor();
    if per_copy.is_nan() || per_copy < 1.0 {
        return Err(Error::PipelineTooSlow {
            t: t_s,
            runtime: app.runtime_s,
        });
    }
    let copies = (app.magic_count as f64 / per_copy).ceil() as u64;
    Ok(q * copies)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCost {
    pub q: u64,
    /// Rounds.
    pub t: u64,
    pub copies_per_level: Vec<u64>,
}

impl BaselineCost {
    pub fn volume(&self) -> f64 {
        volume(self.q, self.t as f64)
    }
}

/// Each level runs to completion before the next starts, with 16× copies per
/// level below the top.
pub fn sequential_baseline(levels: &[FactorySpec]) -> Result<BaselineCost> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no levels".into()));
    }
    let l = levels.len() as u32;
    let copies: Vec<u64> = (1..=l).map(|i| 16u64.pow(l - i)).collect();
    let q = levels
        .iter()
        .zip(&copies)
        .map(|(s, n)| n * s.physical_qubits)
        .max()
        .expect("non-empty");
    let t = levels.iter().map(|s| s.duration_rounds).sum();
    Ok(BaselineCost {
        q,
        t,
        copies_per_level: copies,
    })
}

/// All levels run concurrently with copy counts matched to the next level's
/// consumption rate, plus a fixed buffer per level.
pub fn parallel_baseline(levels: &[FactorySpec]) -> Result<BaselineCost> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no levels".into()));
    }
    let l = levels.len();
    let mut copies = vec![0u64; l];
    copies[l - 1] = 1;
    for i in (1..l).rev() {
        let (lo, hi) = (&levels[i - 1], &levels[i]);
        if lo.p_succ <= 0.0 {
            return Err(Error::InfeasibleProtocol { p_succ: lo.p_succ });
        }
        let need = copies[i] as f64 * hi.total_demand as f64 * lo.duration_rounds as f64
            / (hi.duration_rounds as f64 * lo.outputs as f64 * lo.p_succ);
        copies[i - 1] = (need - 1e-9).ceil().max(1.0) as u64;
    }
    let q = levels
        .iter()
        .enumerate()
        .zip(&copies)
        .map(|((i, s), n)| {
            let patches = if i == 0 { 4 } else { 8 };
            n * (s.physical_qubits + patches * qubits_per_patch(s.code_distance))
        })
        .sum();
    Ok(BaselineCost {
        q,
        t: levels[l - 1].duration_rounds,
        copies_per_level: copies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeOptions {
    /// Budgets tried per buffer size.
    pub budget_points: usize,
    /// Inclusive buffer range; defaults to burst..=total demand.
    pub buffer_range: Option<(u64, u64)>,
    /// Add the expected failure delay to each simulated time.
    pub include_failure_delay: bool,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        Self {
            budget_points: 24,
            buffer_range: None,
            include_failure_delay: true,
        }
    }
}

/// One evaluated two-level configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub budget: u64,
    pub n_buf: u64,
    pub q: u64,
    pub rounds: u64,
    pub delay: f64,
    pub t: f64,
    pub stall_count: u64,
}

impl SweepPoint {
    pub fn volume(&self) -> f64 {
        volume(self.q, self.t)
    }
}

/// `n` integers spaced geometrically over `[lo, hi]`, deduplicated.
pub fn budget_grid(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    if n <= 1 || hi <= lo {
        return vec![lo];
    }
    let ratio = hi as f64 / lo as f64;
    let mut out: Vec<u64> = (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                (lo as f64 * ratio.powf(k as f64 / (n - 1) as f64)).round() as u64
            }
        })
        .map(|b| b.clamp(lo, hi))
        .collect();
    out.dedup();
    out
}

/// Simulate one configuration and price its failures.
pub fn evaluate(cfg: &TwoLevelConfig, include_failure_delay: bool) -> Result<SweepPoint> {
    let trace = simulate_two_level(cfg)?;
    let delay = if include_failure_delay {
        expected_delay(&trace)?.expected_delay
    } else {
        0.0
    };
    Ok(SweepPoint {
        budget: cfg.q_budget,
        n_buf: cfg.n_buf,
        q: trace.qubits_used,
        rounds: trace.total_rounds,
        delay,
        t: trace.total_rounds as f64 + delay,
        stall_count: trace.stall_count,
    })
}

/// Sweep budgets and buffer sizes for one two-level stage. The
/// forced-sequential corner is always evaluated when feasible. Infeasible
/// configurations are skipped; any other error aborts.
pub fn sweep_two_level(
    low: &[Producer],
    high: &FactorySpec,
    params: &PhysicalParams,
    opts: &ComposeOptions,
) -> Result<Vec<SweepPoint>> {
    let (b_lo, b_hi) = opts
        .buffer_range
        .unwrap_or((high.burst_demand, high.total_demand));
    let max_low_q = low.iter().map(|p| p.cost.qubits).max().unwrap_or(0);
    let min_low_q = low.iter().map(|p| p.cost.qubits).min().unwrap_or(0);
    let min_low_t = low.iter().map(|p| p.cost.duration).min().unwrap_or(0);
    let floor_rounds = min_low_t + high.duration_rounds;
    let buffers: Vec<u64> = (b_lo..=b_hi).collect();

    let per_buffer: Vec<Result<Vec<SweepPoint>>> = buffers
        .par_iter()
        .map(|&n_buf| {
            let base = TwoLevelConfig::new(low.to_vec(), high.clone(), 0, n_buf, *params);
            let lo = base.min_budget();
            let hi = base.buffer_qubits() + high.physical_qubits + high.total_demand * max_low_q;
            let mut budgets = budget_grid(lo, hi.max(lo), opts.budget_points);
            if n_buf == high.total_demand {
                let corner = TwoLevelConfig::forced_sequential(low.to_vec(), high.clone(), *params);
                if corner.q_budget >= lo && !budgets.contains(&corner.q_budget) {
                    budgets.push(corner.q_budget);
                    budgets.sort_unstable();
                }
            }
            let mut out: Vec<SweepPoint> = Vec::new();
            let mut at_floor = 0;
            let mut last_budget = 0;
            for b in budgets {
                let cfg = TwoLevelConfig {
                    q_budget: b,
                    ..base.clone()
                };
                match evaluate(&cfg, opts.include_failure_delay) {
                    Ok(p) => {
                        if p.rounds == floor_rounds && b - last_budget >= min_low_q {
                            at_floor += 1;
                        } else {
                            at_floor = 0;
                        }
                        last_budget = b;
                        out.push(p);
                        if at_floor >= 2 {
                            break;
                        }
                    }
                    Err(e) if e.is_infeasible() => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_buffer {
        all.extend(r?);
    }
    Ok(all)
}

/// The forced-sequential corner of a two-level stage.
pub fn sequential_corner(
    low: &[Producer],
    high: &FactorySpec,
    params: &PhysicalParams,
    include_failure_delay: bool,
) -> Result<SweepPoint> {
    let cfg = TwoLevelConfig::forced_sequential(low.to_vec(), high.clone(), *params);
    evaluate(&cfg, include_failure_delay)
}

fn front_from_sweep(points: &[SweepPoint], distances: &[u32]) -> ParetoFront {
    ParetoFront::from_points(
        points
            .iter()
            .map(|p| ParetoPoint {
                q: p.q,
                t: p.t,
                config: PipelineConfig {
                    distances: distances.to_vec(),
                    budget: p.budget,
                    buffer_size: p.n_buf,
                    rounds: p.rounds,
                    expected_delay: p.delay,
                    stall_count: p.stall_count,
                },
            })
            .collect(),
    )
}

/// The one-point front of a lone factory.
pub fn single_level_front(spec: &FactorySpec) -> ParetoFront {
    ParetoFront {
        points: vec![ParetoPoint {
            q: spec.physical_qubits,
            t: spec.duration_rounds as f64,
            config: PipelineConfig {
                distances: vec![spec.code_distance],
                budget: spec.physical_qubits,
                buffer_size: 0,
                rounds: spec.duration_rounds,
                expected_delay: 0.0,
                stall_count: 0,
            },
        }],
    }
}

/// Producers a front offers to the next level up: each point acts as one
/// factory whose run yields one state of the top level's quality.
pub fn front_producers(front: &ParetoFront, top: &FactorySpec) -> Result<Vec<Producer>> {
    if front.points.len() == 1 && front.points[0].config.distances.len() == 1 {
        return Ok(vec![top.producer()]);
    }
    front
        .points
        .iter()
        .map(|p| {
            let composite = CompositeFactory::new(
                top.clone(),
                SupplyDescriptor {
                    distances: p.config.distances.clone(),
                    budget: p.config.budget,
                    buffer_size: p.config.buffer_size,
                },
                p.q,
                p.t.ceil() as u64,
            )?;
            Ok(composite.producer())
        })
        .collect()
}

/// Stack one more level on top of an existing front.
pub fn compose_on(
    front: &ParetoFront,
    below: &FactorySpec,
    next: &FactorySpec,
    params: &PhysicalParams,
    opts: &ComposeOptions,
) -> Result<ParetoFront> {
    let producers = front_producers(front, below)?;
    let points = sweep_two_level(&producers, next, params, opts)?;
    let mut distances = front
        .points
        .first()
        .map(|p| p.config.distances.clone())
        .unwrap_or_default();
    distances.push(next.code_distance);
    let out = front_from_sweep(&points, &distances);
    if out.is_empty() {
        return Err(Error::NoFeasibleConfig(format!(
            "no budget admits distances {distances:?}"
        )));
    }
    Ok(out)
}

/// Pareto front of a full pipeline, built bottom-up one level at a time.
pub fn compose_pareto(
    distances: &[u32],
    protocol: Protocol,
    params: &PhysicalParams,
    opts: &ComposeOptions,
) -> Result<ParetoFront> {
    let specs = build_levels(distances, protocol, params)?;
    compose_specs(&specs, params, opts)
}

pub fn compose_specs(
    specs: &[FactorySpec],
    params: &PhysicalParams,
    opts: &ComposeOptions,
) -> Result<ParetoFront> {
    let first = specs
        .first()
        .ok_or_else(|| Error::InvalidParameter("no levels".into()))?;
    for s in specs.iter().filter(|s| !s.improves_fidelity()) {
        log::warn!(
            "distance {} does not improve fidelity ({:e} -> {:e})",
            s.code_distance,
            s.eps_in,
            s.eps_out
        );
    }
    let mut front = single_level_front(first);
    for w in specs.windows(2) {
        front = compose_on(&front, &w[0], &w[1], params, opts)?;
    }
    Ok(front)
}
