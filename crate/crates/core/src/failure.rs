//! Expected delay from probabilistic low-level failures.
//!
//! The no-failure trace fixes when states are credited and consumed. A
//! Markov chain over buffer levels (plus an absorbing stall state) replays
//! those events with each credited state surviving independently; the
//! probability of first stalling at each consumption is weighted by the time
//! needed to recover from a stall at that point.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocator::{min_time_fill, AllocationProblem};
use crate::error::{Error, Result};
use crate::scheduler::resume_threshold;
use crate::simulator::{RecoveryContext, SimTrace};

/// Distribution over buffer levels `0..=n_buf`, with the stall state last.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovState {
    pub probs: Vec<f64>,
}

impl MarkovState {
    /// Empty buffer with certainty.
    pub fn empty(n_buf: usize) -> Self {
        let mut probs = vec![0.0; n_buf + 2];
        probs[0] = 1.0;
        Self { probs }
    }

    pub fn n_buf(&self) -> usize {
        self.probs.len() - 2
    }

    pub fn fail(&self) -> f64 {
        self.probs[self.probs.len() - 1]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.len() < 2 {
            return Err(Error::InvalidParameter("state vector too short".into()));
        }
        if self.probs.iter().any(|p| !(0.0..=1.0 + 1e-12).contains(p)) {
            return Err(Error::InvalidParameter("probability outside [0, 1]".into()));
        }
        if (self.total() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {}",
                self.total()
            )));
        }
        Ok(())
    }
}

/// Withdraw `n_cons` states; levels that cannot cover it fall into the stall state.
pub fn consume_step(state: &MarkovState, n_cons: u64) -> MarkovState {
    if n_cons == 0 {
        return state.clone();
    }
    let n_buf = state.n_buf();
    let k = n_cons as usize;
    let mut probs = vec![0.0; n_buf + 2];
    let mut fail = state.fail();
    for (i, &p) in state.probs[..=n_buf].iter().enumerate() {
        if i >= k {
            probs[i - k] += p;
        } else {
            fail += p;
        }
    }
    probs[n_buf + 1] = fail;
    MarkovState { probs }
}

/// Binomial(n, p) probability mass function.
pub fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    let n = n as usize;
    let q = 1.0 - p;
    let mut out = Vec::with_capacity(n + 1);
    let mut coeff = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            coeff = coeff * (n + 1 - k) as f64 / k as f64;
        }
        out.push(coeff * p.powi(k as i32) * q.powi((n - k) as i32));
    }
    out
}

/// Credit `n_prod` states, each surviving with probability `p_succ`; levels
/// above capacity clamp to the capacity.
pub fn produce_step(state: &MarkovState, n_prod: u64, p_succ: f64) -> MarkovState {
    if n_prod == 0 {
        return state.clone();
    }
    let n_buf = state.n_buf();
    let pmf = binomial_pmf(n_prod, p_succ);
    let mut probs = vec![0.0; n_buf + 2];
    for (i, &p) in state.probs[..=n_buf].iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (j, &w) in pmf.iter().enumerate() {
            probs[(i + j).min(n_buf)] += p * w;
        }
    }
    probs[n_buf + 1] = state.fail();
    MarkovState { probs }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayEstimate {
    /// Probability that the first stall happens at each round.
    pub p_stall_series: Vec<f64>,
    /// Recovery time if the first stall happens at that round (0 where no
    /// consumption is due).
    pub recovery_series: Vec<f64>,
    /// Expected added rounds.
    pub expected_delay: f64,
    /// Largest deviation of the state vector's total from 1 over all steps.
    pub max_norm_error: f64,
}

/// Evolve the chain over per-round credit/consumption counts. `recovery(t)`
/// is only queried at rounds with a consumption.
pub fn delay_from_series<F: FnMut(usize) -> f64>(
    produced: &[u64],
    consumed: &[u64],
    n_buf: u64,
    p_succ: f64,
    mut recovery: F,
) -> DelayEstimate {
    let rounds = produced.len().min(consumed.len());
    let mut state = MarkovState::empty(n_buf as usize);
    let mut prev_fail = 0.0;
    let mut p_stall_series = Vec::with_capacity(rounds);
    let mut recovery_series = Vec::with_capacity(rounds);
    let mut expected = 0.0;
    let mut max_norm_error: f64 = 0.0;
    for t in 0..rounds {
        state = produce_step(&state, produced[t], p_succ);
        max_norm_error = max_norm_error.max((state.total() - 1.0).abs());
        state = consume_step(&state, consumed[t]);
        max_norm_error = max_norm_error.max((state.total() - 1.0).abs());
        let fail = state.fail();
        let p = (fail - prev_fail).max(0.0);
        prev_fail = fail;
        let dt = if consumed[t] > 0 { recovery(t) } else { 0.0 };
        expected += p * dt;
        p_stall_series.push(p);
        recovery_series.push(dt);
    }
    DelayEstimate {
        p_stall_series,
        recovery_series,
        expected_delay: expected,
        max_norm_error,
    }
}

/// Recovery time for a stall with `remaining` states still owed: move the
/// data patches aside, run the fastest refill the reuse pool admits up to
/// the resume threshold, move back.
#[derive(Debug)]
pub struct RecoveryModel<'a> {
    ctx: &'a RecoveryContext,
    memo: HashMap<u64, f64>,
}

impl<'a> RecoveryModel<'a> {
    pub fn new(ctx: &'a RecoveryContext) -> Self {
        Self {
            ctx,
            memo: HashMap::new(),
        }
    }

    pub fn delay(&mut self, remaining: u64) -> Result<f64> {
        let ctx = self.ctx;
        let threshold = resume_threshold(remaining.max(1), &ctx.r_cons, &ctx.r_prod, ctx.n_buf);
        if let Some(&d) = self.memo.get(&threshold) {
            return Ok(d);
        }
        // With no producer fitting the pool, the whole stalled footprint is
        // freed for one producer copy.
        let min_q = ctx.low_costs.iter().map(|c| c.qubits).min().unwrap_or(0);
        let pool = ctx.pool_qubits.max(min_q);
        let alloc = min_time_fill(&AllocationProblem::fill(
            ctx.low_costs.clone(),
            pool,
            threshold,
        ))?;
        let d = (ctx.move_out_rounds
            + alloc.duration().expect("fill program reports a duration")
            + ctx.move_back_rounds) as f64;
        self.memo.insert(threshold, d);
        Ok(d)
    }
}

fn remaining_by_round(trace: &SimTrace) -> HashMap<u64, u64> {
    trace
        .consumptions
        .iter()
        .map(|c| (c.round, c.remaining))
        .collect()
}

/// Expected failure delay of a no-failure trace.
pub fn expected_delay(trace: &SimTrace) -> Result<DelayEstimate> {
    let remaining = remaining_by_round(trace);
    let mut model = RecoveryModel::new(&trace.recovery);
    let mut err = None;
    let est = delay_from_series(
        &trace.produced_series,
        &trace.consumed_series,
        trace.recovery.n_buf,
        trace.p_succ,
        |t| {
            let rem = remaining.get(&(t as u64)).copied().unwrap_or(1);
            model.delay(rem).unwrap_or_else(|e| {
                err.get_or_insert(e);
                0.0
            })
        },
    );
    match err {
        Some(e) => Err(e),
        None => Ok(est),
    }
}

/// Sampled counterpart of [`delay_from_series`]: draw each credited state's
/// success, stop at the first consumption the buffer cannot cover, and
/// average the recovery time.
pub fn monte_carlo_from_series<F: FnMut(usize) -> f64>(
    produced: &[u64],
    consumed: &[u64],
    n_buf: u64,
    p_succ: f64,
    mut recovery: F,
    samples: u64,
    seed: u64,
) -> f64 {
    let events: Vec<(usize, u64, u64)> = (0..produced.len().min(consumed.len()))
        .filter(|&t| produced[t] > 0 || consumed[t] > 0)
        .map(|t| (t, produced[t], consumed[t]))
        .collect();
    let dts: Vec<f64> = events
        .iter()
        .map(|&(t, _, c)| if c > 0 { recovery(t) } else { 0.0 })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..samples {
        let mut buffer = 0u64;
        for (k, &(_, prod, cons)) in events.iter().enumerate() {
            let ok = (0..prod).filter(|_| rng.gen::<f64>() < p_succ).count() as u64;
            buffer = (buffer + ok).min(n_buf);
            if buffer < cons {
                total += dts[k];
                break;
            }
            buffer -= cons;
        }
    }
    if samples == 0 {
        0.0
    } else {
        total / samples as f64
    }
}

/// Seeded Monte Carlo estimate of the expected failure delay of a trace.
pub fn monte_carlo_delay(trace: &SimTrace, samples: u64, seed: u64) -> Result<f64> {
    let remaining = remaining_by_round(trace);
    let mut model = RecoveryModel::new(&trace.recovery);
    let mut err = None;
    let mean = monte_carlo_from_series(
        &trace.produced_series,
        &trace.consumed_series,
        trace.recovery.n_buf,
        trace.p_succ,
        |t| {
            let rem = remaining.get(&(t as u64)).copied().unwrap_or(1);
            model.delay(rem).unwrap_or_else(|e| {
                err.get_or_insert(e);
                0.0
            })
        },
        samples,
        seed,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(mean),
    }
}
