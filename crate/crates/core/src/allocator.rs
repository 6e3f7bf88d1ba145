//! Exact solvers for the two qubit-allocation programs of a two-level pipeline:
//!
//! * minimum time to put `n_threshold` states in the buffer, and
//! * maximum steady production rate,
//!
//! both under a physical-qubit budget.
//!
//! The fill program is not linear (it multiplies copies by runs), so it is
//! solved by walking candidate durations `m·T_i` in increasing order. For a
//! fixed duration the run counts are forced (`k_i = floor(T / T_i)`) and what
//! remains is a covering knapsack over the threshold, solved by a DP over the
//! state count. The rate program is an unbounded knapsack solved by
//! branch-and-bound with exact rational tie resolution.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FactoryCost;
use crate::scheduler::Rate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub factories: Vec<FactoryCost>,
    pub q_max: u64,
    /// Target state count; `None` for the rate program.
    pub n_threshold: Option<u64>,
}

impl AllocationProblem {
    pub fn fill(factories: Vec<FactoryCost>, q_max: u64, n_threshold: u64) -> Self {
        Self {
            factories,
            q_max,
            n_threshold: Some(n_threshold),
        }
    }

    pub fn rate(factories: Vec<FactoryCost>, q_max: u64) -> Self {
        Self {
            factories,
            q_max,
            n_threshold: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.factories.is_empty() {
            return Err(Error::InvalidParameter("no factory types given".into()));
        }
        for f in &self.factories {
            if f.qubits == 0 || f.duration == 0 || f.outputs == 0 {
                return Err(Error::InvalidParameter(format!(
                    "degenerate factory cost {f:?}"
                )));
            }
        }
        if self.n_threshold == Some(0) {
            return Err(Error::InvalidParameter("n_threshold must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocCount {
    pub factory: usize,
    pub copies: u64,
    /// Runs per copy (fill program only; zero for the rate program).
    pub runs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Objective {
    /// Rounds until the threshold is reached.
    Duration(u64),
    /// States per round.
    Rate(Rate),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    /// Only factories with at least one copy, ordered by index.
    pub counts: Vec<AllocCount>,
    pub objective: Objective,
}

impl Allocation {
    pub fn empty_rate() -> Self {
        Self {
            counts: Vec::new(),
            objective: Objective::Rate(Rate::zero()),
        }
    }

    pub fn qubits(&self, factories: &[FactoryCost]) -> u64 {
        self.counts
            .iter()
            .map(|c| c.copies * factories[c.factory].qubits)
            .sum()
    }

    pub fn copies(&self) -> u64 {
        self.counts.iter().map(|c| c.copies).sum()
    }

    pub fn copies_of(&self, factory: usize) -> u64 {
        self.counts
            .iter()
            .find(|c| c.factory == factory)
            .map_or(0, |c| c.copies)
    }

    pub fn duration(&self) -> Option<u64> {
        match self.objective {
            Objective::Duration(t) => Some(t),
            Objective::Rate(_) => None,
        }
    }

    /// Steady production rate of these copies, whatever program produced them.
    pub fn rate(&self, factories: &[FactoryCost]) -> Rate {
        Rate::sum(self.counts.iter().map(|c| {
            let f = &factories[c.factory];
            (c.copies, f.outputs, f.duration)
        }))
    }

    /// Re-check every constraint of the program this allocation answers.
    pub fn check(&self, problem: &AllocationProblem) -> Result<()> {
        let fs = &problem.factories;
        if self.qubits(fs) > problem.q_max {
            return Err(Error::Invariant(format!(
                "allocation uses {} qubits, budget is {}",
                self.qubits(fs),
                problem.q_max
            )));
        }
        match (&self.objective, problem.n_threshold) {
            (Objective::Duration(t), Some(n)) => {
                let produced: u64 = self
                    .counts
                    .iter()
                    .map(|c| c.copies * c.runs * fs[c.factory].outputs)
                    .sum();
                if produced < n {
                    return Err(Error::Invariant(format!(
                        "allocation yields {produced} states, threshold is {n}"
                    )));
                }
                if let Some(c) = self
                    .counts
                    .iter()
                    .find(|c| c.runs * fs[c.factory].duration > *t)
                {
                    return Err(Error::Invariant(format!(
                        "factory {} runs past the objective time",
                        c.factory
                    )));
                }
            }
            (Objective::Rate(r), None) => {
                if *r != self.rate(fs) {
                    return Err(Error::Invariant(
                        "reported rate does not match copies".into(),
                    ));
                }
            }
            _ => return Err(Error::Invariant("objective does not match program".into())),
        }
        Ok(())
    }
}

/// Minimum-time buffer fill.
pub fn min_time_fill(problem: &AllocationProblem) -> Result<Allocation> {
    problem.validate()?;
    let n = problem
        .n_threshold
        .ok_or_else(|| Error::InvalidParameter("fill program needs n_threshold".into()))?;
    let fs = &problem.factories;
    let fitting: Vec<usize> = (0..fs.len())
        .filter(|&i| fs[i].qubits <= problem.q_max)
        .collect();
    if fitting.is_empty() {
        return Err(Error::NoFactoryFits {
            q_max: problem.q_max,
        });
    }

    // One copy of the smallest factory running alone always gets there.
    let smallest = *fitting
        .iter()
        .min_by_key(|&&i| (fs[i].qubits, i))
        .expect("non-empty");
    let t_ub = n.div_ceil(fs[smallest].outputs) * fs[smallest].duration;

    // Candidate durations m·T_i in increasing order, deduplicated.
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = fitting
        .iter()
        .map(|&i| Reverse((fs[i].duration, i)))
        .collect();
    let mut last = 0;
    while let Some(Reverse((t, i))) = heap.pop() {
        if t > t_ub {
            break;
        }
        heap.push(Reverse((t + fs[i].duration, i)));
        if t == last {
            continue;
        }
        last = t;
        if let Some(counts) = cheapest_cover(fs, &fitting, t, n, problem.q_max) {
            return Ok(Allocation {
                counts,
                objective: Objective::Duration(t),
            });
        }
    }
    Err(Error::Unreachable { n_threshold: n })
}

/// For a fixed duration `t`, the cheapest set of copies whose completed runs
/// cover `n` states, or `None` if that exceeds `q_max`.
///
/// Ties on qubits prefer fewer copies, then lower factory indices.
fn cheapest_cover(
    fs: &[FactoryCost],
    fitting: &[usize],
    t: u64,
    n: u64,
    q_max: u64,
) -> Option<Vec<AllocCount>> {
    let items: Vec<(usize, u64, u64)> = fitting
        .iter()
        .filter_map(|&i| {
            let runs = t / fs[i].duration;
            let yield_ = runs * fs[i].outputs;
            (yield_ > 0).then_some((i, runs, yield_))
        })
        .collect();
    if items.is_empty() {
        return None;
    }
    let n = n as usize;
    // best[v] = (qubits, copies, item chosen last)
    let mut best: Vec<Option<(u64, u64, usize)>> = vec![None; n + 1];
    best[0] = Some((0, 0, usize::MAX));
    for v in 1..=n {
        for (slot, &(i, _, y)) in items.iter().enumerate() {
            let prev = v.saturating_sub(y as usize);
            let Some((q, c, _)) = best[prev] else {
                continue;
            };
            let cand = (q + fs[i].qubits, c + 1, slot);
            let better = match best[v] {
                None => true,
                Some((bq, bc, _)) => (cand.0, cand.1) < (bq, bc),
            };
            if better {
                best[v] = Some(cand);
            }
        }
    }
    let (q, _, _) = best[n]?;
    if q > q_max {
        return None;
    }
    let mut copies = vec![0u64; items.len()];
    let mut v = n;
    while v > 0 {
        let (_, _, slot) = best[v].expect("reachable");
        copies[slot] += 1;
        v = v.saturating_sub(items[slot].2 as usize);
    }
    Some(
        items
            .iter()
            .zip(copies)
            .filter(|(_, c)| *c > 0)
            .map(|(&(i, runs, _), copies)| AllocCount {
                factory: i,
                copies,
                runs,
            })
            .collect(),
    )
}

fn exact_rate(fs: &[FactoryCost], counts: &[u64]) -> BigRational {
    let mut acc = BigRational::zero();
    for (f, &c) in fs.iter().zip(counts) {
        if c > 0 {
            acc += BigRational::new(BigInt::from(c * f.outputs), BigInt::from(f.duration));
        }
    }
    acc
}

/// Orders two rate-program candidates: higher rate, then fewer qubits, then
/// fewer copies, then more copies on lower-indexed factories.
fn compare_rate_candidates(fs: &[FactoryCost], a: (&[u64], f64), b: (&[u64], f64)) -> Ordering {
    let (ca, ra) = a;
    let (cb, rb) = b;
    let scale = ra.abs().max(rb.abs()).max(1e-300);
    let by_rate = if (ra - rb).abs() > 1e-9 * scale {
        ra.partial_cmp(&rb).expect("finite rates")
    } else {
        exact_rate(fs, ca).cmp(&exact_rate(fs, cb))
    };
    let qubits = |c: &[u64]| -> u64 { c.iter().zip(fs).map(|(n, f)| n * f.qubits).sum() };
    let copies = |c: &[u64]| -> u64 { c.iter().sum() };
    by_rate
        .then_with(|| qubits(cb).cmp(&qubits(ca)))
        .then_with(|| copies(cb).cmp(&copies(ca)))
        .then_with(|| ca.cmp(cb))
}

struct RateSearch<'a> {
    fs: &'a [FactoryCost],
    order: Vec<usize>,
    rate: Vec<f64>,
    density: Vec<f64>,
    counts: Vec<u64>,
    best: Vec<u64>,
    best_rate: f64,
}

impl RateSearch<'_> {
    fn prune_below(&self) -> f64 {
        self.best_rate - 1e-9 * self.best_rate.abs() - 1e-300
    }

    fn dfs(&mut self, depth: usize, remaining: u64, current: f64) {
        if depth == self.order.len() {
            let cand = (&self.counts[..], current);
            if compare_rate_candidates(self.fs, cand, (&self.best[..], self.best_rate))
                == Ordering::Greater
            {
                self.best.clone_from(&self.counts);
                self.best_rate = current;
            }
            return;
        }
        let i = self.order[depth];
        let q = self.fs[i].qubits;
        if current + remaining as f64 * self.density[i] < self.prune_below() {
            return;
        }
        let next_density = self.order.get(depth + 1).map_or(0.0, |&j| self.density[j]);
        let max_copies = remaining / q;
        for c in (0..=max_copies).rev() {
            let here = current + c as f64 * self.rate[i];
            let left = remaining - c * q;
            if here + left as f64 * next_density < self.prune_below() {
                break;
            }
            self.counts[i] = c;
            self.dfs(depth + 1, left, here);
        }
        self.counts[i] = 0;
    }
}

/// Maximum steady production rate under the budget. Never fails for a valid
/// problem: an empty allocation with rate zero is the floor.
pub fn max_rate_alloc(problem: &AllocationProblem) -> Result<Allocation> {
    problem.validate()?;
    let fs = &problem.factories;
    let rate: Vec<f64> = fs
        .iter()
        .map(|f| f.outputs as f64 / f.duration as f64)
        .collect();
    let density: Vec<f64> = fs
        .iter()
        .zip(&rate)
        .map(|(f, r)| r / f.qubits as f64)
        .collect();
    let mut order: Vec<usize> = (0..fs.len())
        .filter(|&i| fs[i].qubits <= problem.q_max)
        .collect();
    order.sort_by(|&a, &b| {
        density[b]
            .partial_cmp(&density[a])
            .expect("finite")
            .then(a.cmp(&b))
    });
    let mut search = RateSearch {
        fs,
        order,
        rate,
        density,
        counts: vec![0; fs.len()],
        best: vec![0; fs.len()],
        best_rate: 0.0,
    };
    search.dfs(0, problem.q_max, 0.0);
    let counts: Vec<AllocCount> = search
        .best
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| AllocCount {
            factory: i,
            copies: c,
            runs: 0,
        })
        .collect();
    let mut alloc = Allocation {
        counts,
        objective: Objective::Rate(Rate::zero()),
    };
    alloc.objective = Objective::Rate(alloc.rate(fs));
    Ok(alloc)
}

/// Exhaustive enumeration oracles for small instances.
pub mod oracle {
    use super::*;

    pub const MAX_TYPES: usize = 3;
    pub const MAX_BUDGET: u64 = 5000;
    pub const MAX_THRESHOLD: u64 = 60;

    fn check_caps(problem: &AllocationProblem) -> Result<()> {
        problem.validate()?;
        if problem.factories.len() > MAX_TYPES {
            return Err(Error::InstanceTooLarge(format!(
                "{} factory types (max {MAX_TYPES})",
                problem.factories.len()
            )));
        }
        if problem.q_max > MAX_BUDGET {
            return Err(Error::InstanceTooLarge(format!(
                "budget {} (max {MAX_BUDGET})",
                problem.q_max
            )));
        }
        if problem.n_threshold.is_some_and(|n| n > MAX_THRESHOLD) {
            return Err(Error::InstanceTooLarge(format!(
                "threshold {:?} (max {MAX_THRESHOLD})",
                problem.n_threshold
            )));
        }
        Ok(())
    }

    /// Every copy-count vector that fits the budget.
    fn copy_vectors(fs: &[FactoryCost], q_max: u64) -> Vec<Vec<u64>> {
        let mut out = vec![Vec::new()];
        for f in fs {
            let mut next = Vec::new();
            for partial in &out {
                let used: u64 = partial.iter().zip(fs).map(|(c, g)| c * g.qubits).sum();
                for c in 0..=(q_max - used) / f.qubits {
                    let mut v = partial.clone();
                    v.push(c);
                    next.push(v);
                }
            }
            out = next;
        }
        out
    }

    /// States finished by time `t` with these copies running back to back.
    fn produced_by(fs: &[FactoryCost], copies: &[u64], t: u64) -> u64 {
        copies
            .iter()
            .zip(fs)
            .map(|(c, f)| c * (t / f.duration) * f.outputs)
            .sum()
    }

    pub fn brute_force_fill(problem: &AllocationProblem) -> Result<Allocation> {
        check_caps(problem)?;
        let n = problem
            .n_threshold
            .ok_or_else(|| Error::InvalidParameter("fill program needs n_threshold".into()))?;
        let fs = &problem.factories;
        if fs.iter().all(|f| f.qubits > problem.q_max) {
            return Err(Error::NoFactoryFits {
                q_max: problem.q_max,
            });
        }
        let horizon = n * fs.iter().map(|f| f.duration).max().unwrap_or(1);
        let mut best: Option<(u64, Vec<u64>)> = None;
        for copies in copy_vectors(fs, problem.q_max) {
            if produced_by(fs, &copies, horizon) < n {
                continue;
            }
            // smallest t with produced_by(t) >= n, by bisection
            let (mut lo, mut hi) = (0u64, horizon);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if produced_by(fs, &copies, mid) >= n {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            if best.as_ref().is_none_or(|(t, _)| lo < *t) {
                best = Some((lo, copies));
            }
        }
        let (t, copies) = best.ok_or(Error::Unreachable { n_threshold: n })?;
        Ok(Allocation {
            counts: copies
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| AllocCount {
                    factory: i,
                    copies: c,
                    runs: t / fs[i].duration,
                })
                .collect(),
            objective: Objective::Duration(t),
        })
    }

    pub fn brute_force_rate(problem: &AllocationProblem) -> Result<Allocation> {
        check_caps(problem)?;
        let fs = &problem.factories;
        let mut best: Option<(BigRational, Vec<u64>)> = None;
        for copies in copy_vectors(fs, problem.q_max) {
            let r = exact_rate(fs, &copies);
            if best.as_ref().is_none_or(|(b, _)| r > *b) {
                best = Some((r, copies));
            }
        }
        let (_, copies) = best.expect("the empty vector is always enumerated");
        let mut alloc = Allocation {
            counts: copies
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| AllocCount {
                    factory: i,
                    copies: c,
                    runs: 0,
                })
                .collect(),
            objective: Objective::Rate(Rate::zero()),
        };
        alloc.objective = Objective::Rate(alloc.rate(fs));
        Ok(alloc)
    }
}
