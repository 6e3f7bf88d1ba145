//! Round-accurate simulation of a two-level dynamic pipeline.
//!
//! Low-level factories fill a bounded buffer; the high-level factory launches
//! once the buffer holds the launch threshold, consumes per its schedule, and
//! on a stall either waits for the running producers or lends its ancilla
//! region to extra producers, whichever resumes sooner.
//!
//! Time advances event to event (factory completions, due consumptions,
//! move boundaries), so cost scales with the number of events rather than
//! rounds. Identical factory copies finishing on the same round are tracked
//! as one cohort.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::allocator::{max_rate_alloc, min_time_fill, Allocation, AllocationProblem};
use crate::error::{Error, Result};
use crate::model::{qubits_per_patch, FactoryCost, FactorySpec, PhysicalParams, Producer};
use crate::scheduler::{
    consumption_rate, launch_threshold, resume_threshold, step_phase, Event, Phase, PhaseState,
    Rate, Thresholds,
};

/// What the high-level factory can lend out while stalled, and what moving
/// its data patches aside costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncillaReuseContext {
    pub freed_patches: u32,
    pub move_out_rounds: u64,
    pub move_back_rounds: u64,
}

impl AncillaReuseContext {
    pub fn for_factory(high: &FactorySpec) -> Self {
        Self {
            freed_patches: high.freed_patches(),
            move_out_rounds: 2,
            move_back_rounds: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.move_out_rounds == 0 || self.move_back_rounds == 0 {
            return Err(Error::InvalidParameter("move rounds must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelConfig {
    pub low_factories: Vec<Producer>,
    pub high_factory: FactorySpec,
    pub q_budget: u64,
    pub n_buf: u64,
    pub buffer_patch_qubits: u64,
    pub params: PhysicalParams,
    pub reuse: AncillaReuseContext,
}

impl TwoLevelConfig {
    /// Buffered states occupy patches at the producers' distance.
    pub fn new(
        low_factories: Vec<Producer>,
        high_factory: FactorySpec,
        q_budget: u64,
        n_buf: u64,
        params: PhysicalParams,
    ) -> Self {
        let d = low_factories.iter().map(|p| p.distance).max().unwrap_or(1);
        Self {
            reuse: AncillaReuseContext::for_factory(&high_factory),
            buffer_patch_qubits: qubits_per_patch(d),
            low_factories,
            high_factory,
            q_budget,
            n_buf,
            params,
        }
    }

    /// Buffer sized for the whole demand and no qubits for producers beyond
    /// the high factory's own footprint: fill completely, then run
    /// uninterrupted.
    pub fn forced_sequential(
        low_factories: Vec<Producer>,
        high_factory: FactorySpec,
        params: PhysicalParams,
    ) -> Self {
        let mut cfg = Self::new(low_factories, high_factory, 0, 0, params);
        cfg.n_buf = cfg.high_factory.total_demand;
        cfg.q_budget = sequential_corner_budget(&cfg.high_factory, cfg.buffer_patch_qubits);
        cfg
    }

    pub fn buffer_qubits(&self) -> u64 {
        self.n_buf * self.buffer_patch_qubits
    }

    pub fn low_costs(&self) -> Vec<FactoryCost> {
        self.low_factories.iter().map(|p| p.cost).collect()
    }

    /// Smallest budget that admits both the high factory with its buffer and
    /// at least one producer during the fill.
    pub fn min_budget(&self) -> u64 {
        let min_low = self
            .low_factories
            .iter()
            .map(|p| p.cost.qubits)
            .min()
            .unwrap_or(0);
        self.buffer_qubits() + self.high_factory.physical_qubits.max(min_low)
    }

    pub fn validate(&self) -> Result<()> {
        self.high_factory.validate()?;
        self.reuse.validate()?;
        if self.low_factories.is_empty() {
            return Err(Error::InvalidParameter("no low-level factories".into()));
        }
        if self.buffer_patch_qubits == 0 {
            return Err(Error::InvalidParameter(
                "buffer patch must hold qubits".into(),
            ));
        }
        if self.n_buf < self.high_factory.burst_demand {
            return Err(Error::BufferTooSmall {
                n_buf: self.n_buf,
                burst: self.high_factory.burst_demand,
            });
        }
        let required = self.min_budget();
        if self.q_budget < required {
            return Err(Error::BudgetTooSmall {
                budget: self.q_budget,
                required,
            });
        }
        Ok(())
    }
}

/// Budget of the forced-sequential configuration.
pub fn sequential_corner_budget(high: &FactorySpec, buffer_patch_qubits: u64) -> u64 {
    high.physical_qubits + high.total_demand * buffer_patch_qubits
}

pub fn buffer_qubit_overhead(n_buf: u64, producer_distance: u32) -> u64 {
    n_buf * qubits_per_patch(producer_distance)
}

/// Qubits available to extra producers while `high` is stalled.
pub fn ancilla_reuse_pool(high: &FactorySpec, residual_qubits: u64) -> u64 {
    residual_qubits + high.freed_patches() as u64 * high.patch_qubits()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseInterval {
    pub phase: Phase,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumptionEvent {
    pub round: u64,
    pub count: u64,
    /// States still owed to the high factory, this event included.
    pub remaining: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StallRecord {
    pub round: u64,
    pub resumed_at: u64,
    pub remaining: u64,
    pub resume_threshold: u64,
    /// `Some` when the ancilla region hosted extra producers.
    pub reuse_alloc: Option<Allocation>,
}

/// Everything the failure model needs to price a stall.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryContext {
    pub low_costs: Vec<FactoryCost>,
    /// Idle residual qubits plus the high factory's freed patches.
    pub pool_qubits: u64,
    pub r_cons: Rate,
    pub r_prod: Rate,
    pub n_buf: u64,
    pub move_out_rounds: u64,
    pub move_back_rounds: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    /// Round at which the high factory finishes its last rotation.
    pub total_rounds: u64,
    /// Peak physical qubits in use.
    pub qubits_used: u64,
    /// Per round `0..=total_rounds`, after that round's deposits and consumption.
    pub buffer_series: Vec<u64>,
    pub produced_series: Vec<u64>,
    pub consumed_series: Vec<u64>,
    /// Half-open intervals covering `[0, total_rounds)`.
    pub phase_intervals: Vec<PhaseInterval>,
    pub stall_count: u64,
    pub stalls: Vec<StallRecord>,
    pub consumptions: Vec<ConsumptionEvent>,
    pub launch_round: u64,
    pub thresholds: Thresholds,
    pub fill_alloc: Allocation,
    pub run_alloc: Allocation,
    pub recovery: RecoveryContext,
    /// Worst output success probability among the producers.
    pub p_succ: f64,
}

impl SimTrace {
    pub fn final_buffer(&self) -> u64 {
        self.buffer_series.last().copied().unwrap_or(0)
    }

    pub fn phase_at(&self, round: u64) -> Phase {
        self.phase_intervals
            .iter()
            .find(|iv| iv.start <= round && round < iv.end)
            .map_or(Phase::Done, |iv| iv.phase)
    }

    /// Re-derive the buffer from production and consumption and check every
    /// structural property of the trace.
    pub fn check_invariants(&self, n_buf: u64) -> Result<()> {
        let fail = |m: String| Err(Error::Invariant(m));
        let len = self.total_rounds as usize + 1;
        if self.buffer_series.len() != len
            || self.produced_series.len() != len
            || self.consumed_series.len() != len
        {
            return fail("series length does not match total rounds".into());
        }
        let (mut prod, mut cons) = (0u64, 0u64);
        for t in 0..len {
            prod += self.produced_series[t];
            cons += self.consumed_series[t];
            if cons > prod {
                return fail(format!("round {t}: consumed {cons} of {prod} produced"));
            }
            if self.buffer_series[t] != prod - cons {
                return fail(format!("round {t}: buffer does not balance"));
            }
            if self.buffer_series[t] > n_buf {
                return fail(format!("round {t}: buffer exceeds capacity {n_buf}"));
            }
        }
        let mut at = 0;
        for iv in &self.phase_intervals {
            if iv.start != at || iv.end <= iv.start {
                return fail("phase intervals do not partition the run".into());
            }
            at = iv.end;
        }
        if at != self.total_rounds {
            return fail("phase intervals stop short of completion".into());
        }
        Ok(())
    }

    /// One row per round: round, buffer_count, phase, produced_cum, consumed_cum.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "round,buffer_count,phase,produced_cum,consumed_cum")?;
        let (mut prod, mut cons) = (0u64, 0u64);
        for t in 0..self.buffer_series.len() {
            prod += self.produced_series[t];
            cons += self.consumed_series[t];
            writeln!(
                w,
                "{t},{},{},{prod},{cons}",
                self.buffer_series[t],
                self.phase_at(t as u64).as_str()
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Region {
    Residual,
    Reuse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Cohort {
    holding: bool,
    finish_at: u64,
    ty: usize,
    region: Region,
    count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StallMode {
    Wait,
    Reuse,
    MovingBack { resume_at: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Fill,
    Run,
    Stall {
        since: u64,
        threshold: u64,
        mode: StallMode,
    },
    Done,
}

#[derive(Debug, Clone)]
struct Sim<'a> {
    cfg: &'a TwoLevelConfig,
    costs: Vec<FactoryCost>,
    run_alloc: &'a Allocation,
    r_cons: &'a Rate,
    r_prod: &'a Rate,
    n_th: u64,
    t: u64,
    buffer: u64,
    cohorts: Vec<Cohort>,
    release_pending: bool,
    mode: Mode,
    phase: PhaseState,
    anchor: u64,
    next: usize,
    peak: u64,
    buffer_series: Vec<u64>,
    produced: Vec<u64>,
    consumed: Vec<u64>,
    phase_changes: Vec<(u64, Phase)>,
    consumptions: Vec<ConsumptionEvent>,
    stalls: Vec<StallRecord>,
}

impl<'a> Sim<'a> {
    fn offsets(&self) -> &[(u64, u64)] {
        &self.cfg.high_factory.consumption_offsets
    }

    fn remaining_demand(&self) -> u64 {
        self.offsets()[self.next..].iter().map(|&(_, c)| c).sum()
    }

    fn freed_qubits(&self) -> u64 {
        self.cfg.reuse.freed_patches as u64 * self.cfg.high_factory.patch_qubits()
    }

    fn usage(&self) -> u64 {
        let region_q = |r: Region| -> u64 {
            self.cohorts
                .iter()
                .filter(|c| c.region == r)
                .map(|c| c.count * self.costs[c.ty].qubits)
                .sum()
        };
        let high = match self.mode {
            Mode::Fill => 0,
            _ => self.cfg.high_factory.physical_qubits,
        };
        let reuse_excess = region_q(Region::Reuse).saturating_sub(self.freed_qubits());
        self.cfg.buffer_qubits() + high + region_q(Region::Residual) + reuse_excess
    }

    fn note_usage(&mut self) {
        self.peak = self.peak.max(self.usage());
    }

    fn set_phase(&mut self, event: Event) -> Result<()> {
        self.phase = step_phase(&self.phase, event)?;
        self.phase.clock = self.t;
        self.phase_changes.push((self.t, self.phase.phase));
        Ok(())
    }

    fn next_round(&self) -> Option<u64> {
        let mut best = self
            .cohorts
            .iter()
            .filter(|c| !c.holding)
            .map(|c| c.finish_at)
            .min();
        let mut offer = |r: u64| best = Some(best.map_or(r, |b: u64| b.min(r)));
        if self.release_pending && self.cohorts.iter().any(|c| c.holding) {
            offer(self.t + 1);
        }
        match self.mode {
            Mode::Run => offer(self.anchor + self.offsets()[self.next].0),
            Mode::Stall {
                mode: StallMode::MovingBack { resume_at },
                ..
            } => offer(resume_at),
            _ => {}
        }
        best
    }

    /// Credit completed and held outputs, oldest first, as far as space allows.
    fn deposit(&mut self) -> u64 {
        let t = self.t;
        let mut space = self.cfg.n_buf - self.buffer;
        let mut deposited = 0;
        let mut out = Vec::with_capacity(self.cohorts.len() + 2);
        // holding cohorts sort first
        let mut cohorts = std::mem::take(&mut self.cohorts);
        cohorts.sort();
        for c in cohorts {
            if !c.holding && c.finish_at != t {
                out.push(c);
                continue;
            }
            let cost = self.costs[c.ty];
            let fit = c.count.min(space / cost.outputs);
            if fit > 0 {
                space -= fit * cost.outputs;
                deposited += fit * cost.outputs;
                out.push(Cohort {
                    holding: false,
                    finish_at: t + cost.duration,
                    count: fit,
                    ..c
                });
            }
            if fit < c.count {
                out.push(Cohort {
                    holding: true,
                    finish_at: t,
                    count: c.count - fit,
                    ..c
                });
            }
        }
        self.cohorts = merge(out);
        self.buffer += deposited;
        self.release_pending = false;
        deposited
    }

    fn consume(&mut self, count: u64) -> u64 {
        let remaining = self.remaining_demand();
        self.buffer -= count;
        self.release_pending = true;
        self.consumptions.push(ConsumptionEvent {
            round: self.t,
            count,
            remaining,
        });
        self.next += 1;
        count
    }

    fn record(&mut self, produced: u64, consumed: u64) {
        let t = self.t as usize;
        let last = self.buffer_series.last().copied().unwrap_or(0);
        while self.buffer_series.len() < t {
            self.buffer_series.push(last);
            self.produced.push(0);
            self.consumed.push(0);
        }
        self.buffer_series.push(self.buffer);
        self.produced.push(produced);
        self.consumed.push(consumed);
    }

    /// Keep up to the steady-state copy counts, preferring copies with output
    /// ready and then those closest to finishing; start fresh copies for the
    /// rest.
    fn reconfigure_for_run(&mut self) {
        let mut cohorts = std::mem::take(&mut self.cohorts);
        cohorts.sort();
        let mut kept = Vec::new();
        for ac in &self.run_alloc.counts {
            let mut want = ac.copies;
            for c in cohorts.iter().filter(|c| c.ty == ac.factory) {
                if want == 0 {
                    break;
                }
                let take = c.count.min(want);
                want -= take;
                kept.push(Cohort { count: take, ..*c });
            }
            if want > 0 {
                kept.push(Cohort {
                    holding: false,
                    finish_at: self.t + self.costs[ac.factory].duration,
                    ty: ac.factory,
                    region: Region::Residual,
                    count: want,
                });
            }
        }
        self.cohorts = merge(kept);
    }

    fn resume(&mut self, since: u64) -> Result<u64> {
        self.anchor += self.t - since;
        self.mode = Mode::Run;
        self.set_phase(Event::Resumed)?;
        if let Some(s) = self.stalls.last_mut() {
            s.resumed_at = self.t;
        }
        let need = self.offsets()[self.next].1;
        Ok(self.consume(need))
    }

    fn complete(&mut self) -> Result<()> {
        let end = self.anchor + self.cfg.high_factory.duration_rounds;
        self.mode = Mode::Done;
        self.cohorts.clear();
        if end > self.t {
            self.t = end;
            self.record(0, 0);
        }
        self.set_phase(Event::Completed)?;
        Ok(())
    }

    /// Process the next event round. Returns `Ok(false)` when nothing can
    /// ever happen again.
    fn step(&mut self) -> Result<bool> {
        let Some(t) = self.next_round() else {
            return Ok(false);
        };
        debug_assert!(t > self.t || self.buffer_series.is_empty());
        self.t = t;
        let produced = self.deposit();
        let mut consumed = 0;
        match self.mode {
            Mode::Fill => {
                if self.buffer >= self.n_th {
                    self.mode = Mode::Run;
                    self.anchor = t;
                    self.set_phase(Event::ThresholdReached)?;
                    let burst = self.offsets()[0].1;
                    consumed = self.consume(burst);
                    self.reconfigure_for_run();
                    self.note_usage();
                }
            }
            Mode::Run => {
                let (off, need) = self.offsets()[self.next];
                if t == self.anchor + off {
                    if self.buffer >= need {
                        consumed = self.consume(need);
                    } else {
                        self.record(produced, 0);
                        return self.stall();
                    }
                }
            }
            Mode::Stall {
                since,
                threshold,
                mode,
            } => match mode {
                StallMode::Wait => {
                    if self.buffer >= threshold {
                        consumed = self.resume(since)?;
                    }
                }
                StallMode::Reuse => {
                    if self.buffer >= threshold {
                        self.cohorts.retain(|c| c.region == Region::Residual);
                        let resume_at = t.max(since + self.cfg.reuse.move_out_rounds)
                            + self.cfg.reuse.move_back_rounds;
                        self.mode = Mode::Stall {
                            since,
                            threshold,
                            mode: StallMode::MovingBack { resume_at },
                        };
                    }
                }
                StallMode::MovingBack { resume_at } => {
                    if t == resume_at {
                        consumed = self.resume(since)?;
                    }
                }
            },
            Mode::Done => return Ok(false),
        }
        self.record(produced, consumed);
        if self.mode == Mode::Run && self.next == self.offsets().len() {
            self.complete()?;
        }
        Ok(true)
    }

    /// Run a stalled branch until the high factory resumes.
    fn run_branch(mut self) -> Result<Option<Sim<'a>>> {
        while matches!(self.mode, Mode::Stall { .. }) {
            if !self.step()? {
                return Ok(None);
            }
        }
        Ok(Some(self))
    }

    /// The buffer came up short at the current round. Try both waiting and
    /// ancilla reuse; adopt whichever resumes first, waiting on ties.
    fn stall(&mut self) -> Result<bool> {
        let since = self.t;
        let need = self.offsets()[self.next].1;
        let remaining = self.remaining_demand();
        let threshold = need.max(resume_threshold(
            remaining,
            self.r_cons,
            self.r_prod,
            self.cfg.n_buf,
        ));
        self.set_phase(Event::Stall)?;
        self.stalls.push(StallRecord {
            round: since,
            resumed_at: since,
            remaining,
            resume_threshold: threshold,
            reuse_alloc: None,
        });

        let mut wait = self.clone();
        wait.mode = Mode::Stall {
            since,
            threshold,
            mode: StallMode::Wait,
        };
        let wait = wait.run_branch()?;

        let mut reuse = self.clone();
        let pool = self.idle_residual() + self.freed_qubits();
        let target = threshold.saturating_sub(self.buffer).max(1);
        let reuse = match min_time_fill(&AllocationProblem::fill(self.costs.clone(), pool, target))
        {
            Ok(alloc) => {
                let start = since + self.cfg.reuse.move_out_rounds;
                for ac in &alloc.counts {
                    reuse.cohorts.push(Cohort {
                        holding: false,
                        finish_at: start + self.costs[ac.factory].duration,
                        ty: ac.factory,
                        region: Region::Reuse,
                        count: ac.copies,
                    });
                }
                reuse.cohorts = merge(std::mem::take(&mut reuse.cohorts));
                reuse.mode = Mode::Stall {
                    since,
                    threshold,
                    mode: StallMode::Reuse,
                };
                reuse.note_usage();
                if let Some(s) = reuse.stalls.last_mut() {
                    s.reuse_alloc = Some(alloc);
                }
                reuse.run_branch()?
            }
            Err(e) if e.is_infeasible() => None,
            Err(e) => return Err(e),
        };

        let chosen = match (wait, reuse) {
            (Some(w), Some(r)) => {
                if r.t < w.t {
                    r
                } else {
                    w
                }
            }
            (Some(w), None) => w,
            (None, Some(r)) => r,
            (None, None) => return Err(Error::StallDeadlock { round: since }),
        };
        *self = chosen;
        Ok(true)
    }

    fn idle_residual(&self) -> u64 {
        let budget =
            self.cfg.q_budget - self.cfg.buffer_qubits() - self.cfg.high_factory.physical_qubits;
        let used: u64 = self
            .cohorts
            .iter()
            .filter(|c| c.region == Region::Residual)
            .map(|c| c.count * self.costs[c.ty].qubits)
            .sum();
        budget.saturating_sub(used)
    }
}

fn merge(mut cohorts: Vec<Cohort>) -> Vec<Cohort> {
    cohorts.retain(|c| c.count > 0);
    cohorts.sort();
    let mut out: Vec<Cohort> = Vec::with_capacity(cohorts.len());
    for c in cohorts {
        match out.last_mut() {
            Some(l)
                if l.holding == c.holding
                    && l.finish_at == c.finish_at
                    && l.ty == c.ty
                    && l.region == c.region =>
            {
                l.count += c.count
            }
            _ => out.push(c),
        }
    }
    out
}

/// Fill-phase producers: the fill allocation, plus steady-state copies
/// started early in spare fill-phase qubits. Early copies are staggered so
/// their first completions spread evenly over the first run after the
/// expected launch instead of all arriving one full run late.
fn initial_cohorts(
    costs: &[FactoryCost],
    fill_alloc: &Allocation,
    run_alloc: &Allocation,
    fill_budget: u64,
) -> Vec<Cohort> {
    let t_fill = fill_alloc.duration().unwrap_or(0);
    let mut spare = fill_budget - fill_alloc.qubits(costs);
    let mut cohorts: Vec<Cohort> = fill_alloc
        .counts
        .iter()
        .map(|ac| Cohort {
            holding: false,
            finish_at: costs[ac.factory].duration,
            ty: ac.factory,
            region: Region::Residual,
            count: ac.copies,
        })
        .collect();
    for ac in &run_alloc.counts {
        let cost = costs[ac.factory];
        let k = ac.copies;
        let early = k
            .saturating_sub(fill_alloc.copies_of(ac.factory))
            .min(spare / cost.qubits);
        spare -= early * cost.qubits;
        for j in 1..=early {
            let target = t_fill + (j * cost.duration).div_ceil(k);
            cohorts.push(Cohort {
                holding: false,
                finish_at: target % cost.duration + cost.duration,
                ty: ac.factory,
                region: Region::Residual,
                count: 1,
            });
        }
    }
    merge(cohorts)
}

fn intervals(changes: &[(u64, Phase)], end: u64) -> Vec<PhaseInterval> {
    let mut out: Vec<PhaseInterval> = Vec::new();
    for (i, &(start, phase)) in changes.iter().enumerate() {
        if phase == Phase::Done {
            break;
        }
        let stop = changes.get(i + 1).map_or(end, |&(s, _)| s);
        if stop > start {
            match out.last_mut() {
                Some(l) if l.phase == phase => l.end = stop,
                _ => out.push(PhaseInterval {
                    phase,
                    start,
                    end: stop,
                }),
            }
        }
    }
    out
}

/// Simulate one two-level configuration to completion.
pub fn simulate_two_level(cfg: &TwoLevelConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let high = &cfg.high_factory;
    let costs = cfg.low_costs();
    let buffer_q = cfg.buffer_qubits();
    let fill_budget = cfg.q_budget - buffer_q;
    let run_budget = fill_budget - high.physical_qubits;

    let run_alloc = max_rate_alloc(&AllocationProblem::rate(costs.clone(), run_budget))?;
    let r_prod = run_alloc.rate(&costs);
    let r_cons = consumption_rate(high);
    let n_th = launch_threshold(
        high.total_demand,
        high.burst_demand,
        &r_cons,
        &r_prod,
        cfg.n_buf,
    );
    let thresholds = Thresholds::compute(
        high.total_demand,
        high.burst_demand,
        high.total_demand - high.burst_demand,
        &r_cons,
        &r_prod,
        cfg.n_buf,
    );
    let fill_alloc = min_time_fill(&AllocationProblem::fill(costs.clone(), fill_budget, n_th))
        .map_err(|e| match e {
            Error::NoFactoryFits { .. } => Error::BudgetTooSmall {
                budget: cfg.q_budget,
                required: cfg.min_budget(),
            },
            e => e,
        })?;

    let mut sim = Sim {
        cfg,
        costs: costs.clone(),
        run_alloc: &run_alloc,
        r_cons: &r_cons,
        r_prod: &r_prod,
        n_th,
        t: 0,
        buffer: 0,
        cohorts: initial_cohorts(&costs, &fill_alloc, &run_alloc, fill_budget),
        release_pending: false,
        mode: Mode::Fill,
        phase: PhaseState::new(high.total_demand - high.burst_demand),
        anchor: 0,
        next: 0,
        peak: 0,
        buffer_series: Vec::new(),
        produced: Vec::new(),
        consumed: Vec::new(),
        phase_changes: vec![(0, Phase::FillBuffer)],
        consumptions: Vec::new(),
        stalls: Vec::new(),
    };
    sim.note_usage();
    sim.record(0, 0);
    while sim.mode != Mode::Done {
        if !sim.step()? {
            return Err(Error::Invariant(format!(
                "simulation ran out of events at round {}",
                sim.t
            )));
        }
    }

    let total_rounds = sim.t;
    let idle_residual = run_budget
        - run_alloc
            .counts
            .iter()
            .map(|c| c.copies * costs[c.factory].qubits)
            .sum::<u64>();
    let launch_round = sim
        .phase_changes
        .iter()
        .find(|(_, p)| *p == Phase::ParallelRun)
        .map_or(0, |&(t, _)| t);
    let trace = SimTrace {
        total_rounds,
        qubits_used: sim.peak,
        buffer_series: sim.buffer_series,
        produced_series: sim.produced,
        consumed_series: sim.consumed,
        phase_intervals: intervals(&sim.phase_changes, total_rounds),
        stall_count: sim.stalls.len() as u64,
        stalls: sim.stalls,
        consumptions: sim.consumptions,
        launch_round,
        thresholds,
        fill_alloc,
        recovery: RecoveryContext {
            low_costs: costs,
            pool_qubits: ancilla_reuse_pool(high, idle_residual),
            r_cons,
            r_prod,
            n_buf: cfg.n_buf,
            move_out_rounds: cfg.reuse.move_out_rounds,
            move_back_rounds: cfg.reuse.move_back_rounds,
        },
        run_alloc,
        p_succ: cfg
            .low_factories
            .iter()
            .map(|p| p.p_succ)
            .fold(1.0, f64::min),
    };
    if cfg!(debug_assertions) {
        trace.check_invariants(cfg.n_buf)?;
    }
    Ok(trace)
}
