//! Physical parameters, surface-code cost formulas and the factory model.
//!
//! A factory is treated as a black box described by its input pattern
//! (how many states it needs and when), its output count and fidelity,
//! its qubit/time cost and its success probability. Only the 15-to-1
//! Reed-Muller factory is built in, but everything downstream works on
//! [`FactorySpec`] / [`FactoryCost`] and does not assume it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hardware timing and error rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Two-qubit gate duration in nanoseconds.
    pub t_2q_ns: f64,
    /// Measurement duration in nanoseconds.
    pub t_meas_ns: f64,
    /// Physical gate error rate.
    pub p_phys: f64,
    /// Error rate of raw (undistilled) magic states.
    pub eps_raw: f64,
}

impl PhysicalParams {
    pub fn new(t_2q_ns: f64, t_meas_ns: f64, p_phys: f64, eps_raw: f64) -> Result<Self> {
        let params = Self {
            t_2q_ns,
            t_meas_ns,
            p_phys,
            eps_raw,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_2q_ns > 0.0 && self.t_2q_ns.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_2q must be positive, got {}",
                self.t_2q_ns
            )));
        }
        if !(self.t_meas_ns > 0.0 && self.t_meas_ns.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_meas must be positive, got {}",
                self.t_meas_ns
            )));
        }
        if !(self.p_phys > 0.0 && self.p_phys < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p_phys must lie in (0, 1), got {}",
                self.p_phys
            )));
        }
        if !(self.eps_raw > 0.0 && self.eps_raw < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps_raw must lie in (0, 1), got {}",
                self.eps_raw
            )));
        }
        Ok(())
    }

    /// Duration of one stabilizer round in nanoseconds.
    pub fn stab_round_ns(&self) -> f64 {
        stab_round_time(self)
    }

    /// Convert a round count to seconds.
    pub fn rounds_to_seconds(&self, rounds: f64) -> f64 {
        rounds * self.stab_round_ns() * 1e-9
    }

    /// Convert seconds to (fractional) rounds.
    pub fn seconds_to_rounds(&self, seconds: f64) -> f64 {
        seconds / (self.stab_round_ns() * 1e-9)
    }
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// p = eps = 1e-3, the setting behind the three-level example pipeline (3, 9, 15).
    Table1,
    /// Superconducting hardware, p = eps = 1e-4.
    Supercond,
    /// Same defaults as `Supercond`, but pipelines may start at distance 1.
    Majorana,
}

impl Preset {
    pub fn params(self) -> PhysicalParams {
        match self {
            Preset::Table1 => PhysicalParams {
                t_2q_ns: 50.0,
                t_meas_ns: 100.0,
                p_phys: 1e-3,
                eps_raw: 1e-3,
            },
            Preset::Supercond | Preset::Majorana => PhysicalParams {
                t_2q_ns: 50.0,
                t_meas_ns: 100.0,
                p_phys: 1e-4,
                eps_raw: 1e-4,
            },
        }
    }

    pub fn allows_unit_distance(self) -> bool {
        matches!(self, Preset::Majorana)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Supercond => "supercond",
            Preset::Majorana => "majorana",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table1" => Ok(Preset::Table1),
            "supercond" => Ok(Preset::Supercond),
            "majorana" => Ok(Preset::Majorana),
            other => Err(Error::InvalidParameter(format!("unknown preset `{other}`"))),
        }
    }
}

/// T_stab = 6·T_2q + T_meas, in the units of the inputs.
pub fn stab_round_time(params: &PhysicalParams) -> f64 {
    6.0 * params.t_2q_ns + params.t_meas_ns
}

/// Logical error rate per cycle of a distance-`d` surface code patch.
pub fn logical_error_rate(p_phys: f64, d: u32) -> Result<f64> {
    if !(p_phys > 0.0 && p_phys < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p_phys must lie in (0, 1), got {p_phys}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("code distance must be >= 1".into()));
    }
    let p_l = 0.03 * (p_phys / 0.01).powf((d as f64 + 1.0) / 2.0);
    if p_l >= 1.0 {
        return Err(Error::NoSuppression {
            distance: d,
            logical_error_rate: p_l,
        });
    }
    Ok(p_l)
}

/// Output error rate of a 15-to-1 factory.
pub fn output_error(eps_in: f64, p_l: f64) -> f64 {
    35.0 * eps_in.powi(3) + 7.1 * p_l
}

/// Whether a level with these error rates actually improves fidelity.
/// A `false` here is a warning, not a hard error.
pub fn improves_fidelity(eps_in: f64, eps_out: f64) -> bool {
    eps_out < eps_in
}

/// Success probability of a 15-to-1 factory.
pub fn success_prob(eps_in: f64, p_l: f64) -> Result<f64> {
    let p = 1.0 - 15.0 * eps_in - 356.0 * p_l;
    if p <= 0.0 {
        return Err(Error::InfeasibleProtocol { p_succ: p });
    }
    Ok(p)
}

/// Physical qubits occupied by one logical patch at distance `d`.
pub fn qubits_per_patch(d: u32) -> u64 {
    let d = d as u64;
    2 * d * d - 1
}

/// The (qubits, time, outputs) triple that resource allocation works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactoryCost {
    pub qubits: u64,
    /// Duration of one run in stabilizer rounds.
    pub duration: u64,
    pub outputs: u64,
}

/// A low-level supplier as seen by a two-level pipeline: either a plain
/// factory or a composite of lower levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Producer {
    pub cost: FactoryCost,
    pub p_succ: f64,
    pub eps_out: f64,
    /// Code distance of the patch an output state lives in.
    pub distance: u32,
}

/// One distillation factory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorySpec {
    pub code_distance: u32,
    pub logical_patches: u32,
    pub data_patches: u32,
    pub physical_qubits: u64,
    pub duration_rounds: u64,
    pub burst_demand: u64,
    pub total_demand: u64,
    pub outputs: u64,
    pub eps_in: f64,
    pub eps_out: f64,
    pub p_succ: f64,
    /// `(round offset, count)` pairs, offsets non-decreasing.
    pub consumption_offsets: Vec<(u64, u64)>,
}

impl FactorySpec {
    /// Check the structural invariants of a hand-built factory.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.physical_qubits == 0 {
            return bad("factory must occupy at least one qubit".into());
        }
        if self.duration_rounds == 0 {
            return bad("factory duration must be positive".into());
        }
        if self.outputs == 0 {
            return bad("factory must produce at least one output".into());
        }
        if self.burst_demand == 0 || self.burst_demand > self.total_demand {
            return bad(format!(
                "burst demand {} must lie in 1..={}",
                self.burst_demand, self.total_demand
            ));
        }
        if !(self.p_succ > 0.0 && self.p_succ <= 1.0) {
            return bad(format!(
                "success probability {} outside (0, 1]",
                self.p_succ
            ));
        }
        if self.data_patches > self.logical_patches {
            return bad("more data patches than logical patches".into());
        }
        let total: u64 = self.consumption_offsets.iter().map(|&(_, c)| c).sum();
        if total != self.total_demand {
            return bad(format!(
                "consumption schedule sums to {total}, total demand is {}",
                self.total_demand
            ));
        }
        match self.consumption_offsets.first() {
            Some(&(0, c)) if c == self.burst_demand => {}
            _ => return bad("schedule must start with the burst at offset 0".into()),
        }
        if self
            .consumption_offsets
            .windows(2)
            .any(|w| w[1].0 <= w[0].0)
        {
            return bad("consumption offsets must be strictly increasing".into());
        }
        if self
            .consumption_offsets
            .last()
            .is_some_and(|&(o, _)| o > self.duration_rounds)
        {
            return bad("consumption scheduled after the factory finishes".into());
        }
        Ok(())
    }

    pub fn cost(&self) -> FactoryCost {
        FactoryCost {
            qubits: self.physical_qubits,
            duration: self.duration_rounds,
            outputs: self.outputs,
        }
    }

    pub fn producer(&self) -> Producer {
        Producer {
            cost: self.cost(),
            p_succ: self.p_succ,
            eps_out: self.eps_out,
            distance: self.code_distance,
        }
    }

    /// Patches that are not data qubits and can host other factories while
    /// the factory is stalled.
    pub fn freed_patches(&self) -> u32 {
        self.logical_patches - self.data_patches
    }

    pub fn patch_qubits(&self) -> u64 {
        qubits_per_patch(self.code_distance)
    }

    pub fn duration_seconds(&self, params: &PhysicalParams) -> f64 {
        params.rounds_to_seconds(self.duration_rounds as f64)
    }

    pub fn improves_fidelity(&self) -> bool {
        improves_fidelity(self.eps_in, self.eps_out)
    }
}

/// 15-to-1 schedule: the burst of 4 at round 0, then the k-th rotation's state
/// is due at round k·d for k = 1..=11.
fn schedule_15to1(d: u32) -> Vec<(u64, u64)> {
    let d = d as u64;
    std::iter::once((0, 4))
        .chain((1..=11).map(|k| (k * d, 1)))
        .collect()
}

/// Build a 15-to-1 factory at distance `d` fed by states of error `eps_in`.
///
/// Distance 1 is accepted as a degenerate factory (one physical qubit per
/// patch); callers that should not see it filter it out at input validation.
pub fn build_15to1(d: u32, eps_in: f64, params: &PhysicalParams) -> Result<FactorySpec> {
    if d == 0 || d.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "code distance must be odd and positive, got {d}"
        )));
    }
    if !(0.0..1.0).contains(&eps_in) {
        return Err(Error::InvalidParameter(format!(
            "input error rate must lie in [0, 1), got {eps_in}"
        )));
    }
    let p_l = logical_error_rate(params.p_phys, d)?;
    let spec = FactorySpec {
        code_distance: d,
        logical_patches: 15,
        data_patches: 5,
        physical_qubits: 15 * qubits_per_patch(d),
        duration_rounds: 11 * d as u64,
        burst_demand: 4,
        total_demand: 15,
        outputs: 1,
        eps_in,
        eps_out: output_error(eps_in, p_l),
        p_succ: success_prob(eps_in, p_l)?,
        consumption_offsets: schedule_15to1(d),
    };
    debug_assert!(spec.validate().is_ok());
    Ok(spec)
}

/// The consumption pattern of a factory.
pub fn consumption_schedule(spec: &FactorySpec) -> Vec<(u64, u64)> {
    spec.consumption_offsets.clone()
}

/// Supported distillation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Protocol {
    #[default]
    #[serde(rename = "15to1")]
    FifteenToOne,
}

impl Protocol {
    pub fn build(self, d: u32, eps_in: f64, params: &PhysicalParams) -> Result<FactorySpec> {
        match self {
            Protocol::FifteenToOne => build_15to1(d, eps_in, params),
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "15to1" | "15-to-1" => Ok(Protocol::FifteenToOne),
            other => Err(Error::InvalidParameter(format!(
                "unknown protocol `{other}`"
            ))),
        }
    }
}

/// Build every level of a pipeline, chaining each level's output error into
/// the next level's input.
pub fn build_levels(
    distances: &[u32],
    protocol: Protocol,
    params: &PhysicalParams,
) -> Result<Vec<FactorySpec>> {
    let mut eps = params.eps_raw;
    let mut specs = Vec::with_capacity(distances.len());
    for &d in distances {
        let spec = protocol.build(d, eps, params)?;
        eps = spec.eps_out;
        specs.push(spec);
    }
    Ok(specs)
}

/// Where a composite factory's supply comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyDescriptor {
    pub distances: Vec<u32>,
    pub budget: u64,
    pub buffer_size: u64,
}

/// A scheduled sub-pipeline viewed as a single factory by the next level up
/// (two 15-to-1 levels look like one 225-to-1 factory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeFactory {
    pub underlying: FactorySpec,
    pub supply_pipeline: SupplyDescriptor,
    pub effective_qubits: u64,
    pub effective_rounds: u64,
    pub effective_outputs: u64,
}

impl CompositeFactory {
    pub fn new(
        underlying: FactorySpec,
        supply_pipeline: SupplyDescriptor,
        effective_qubits: u64,
        effective_rounds: u64,
    ) -> Result<Self> {
        if effective_qubits < underlying.physical_qubits {
            return Err(Error::Invariant(format!(
                "composite uses {effective_qubits} qubits, fewer than its top factory ({})",
                underlying.physical_qubits
            )));
        }
        if effective_rounds < underlying.duration_rounds {
            return Err(Error::Invariant(format!(
                "composite takes {effective_rounds} rounds, less than its top factory ({})",
                underlying.duration_rounds
            )));
        }
        Ok(Self {
            effective_outputs: underlying.outputs,
            underlying,
            supply_pipeline,
            effective_qubits,
            effective_rounds,
        })
    }

    pub fn cost(&self) -> FactoryCost {
        FactoryCost {
            qubits: self.effective_qubits,
            duration: self.effective_rounds,
            outputs: self.effective_outputs,
        }
    }

    pub fn producer(&self) -> Producer {
        Producer {
            cost: self.cost(),
            p_succ: self.underlying.p_succ,
            eps_out: self.underlying.eps_out,
            distance: self.underlying.code_distance,
        }
    }
}
