use thiserror::Error;

use crate::scheduler::{Event, Phase};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("code does not suppress errors: logical error rate {logical_error_rate} at distance {distance}")]
    NoSuppression {
        distance: u32,
        logical_error_rate: f64,
    },

    #[error("protocol parameters infeasible: success probability {p_succ} <= 0")]
    InfeasibleProtocol { p_succ: f64 },

    #[error("infeasible allocation: no factory fits within {q_max} qubits")]
    NoFactoryFits { q_max: u64 },

    #[error("threshold of {n_threshold} states is unreachable within the budget")]
    Unreachable { n_threshold: u64 },

    #[error("instance too large for exhaustive enumeration: {0}")]
    InstanceTooLarge(String),

    #[error("illegal phase transition: {event:?} while in {phase:?}")]
    IllegalTransition { phase: Phase, event: Event },

    #[error("budget too small: {budget} qubits available, {required} required")]
    BudgetTooSmall { budget: u64, required: u64 },

    #[error("buffer too small: {n_buf} states, burst demand is {burst}")]
    BufferTooSmall { n_buf: u64, burst: u64 },

    #[error("stall at round {round} can never be resolved")]
    StallDeadlock { round: u64 },

    #[error("pipeline too slow: one output takes {t} but the program runtime is {runtime}")]
    PipelineTooSlow { t: f64, runtime: f64 },

    #[error("no feasible configuration: {0}")]
    NoFeasibleConfig(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// True for errors that mean "this configuration cannot run" rather than
    /// malformed input. Sweeps skip these configurations.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::NoFactoryFits { .. }
                | Error::Unreachable { .. }
                | Error::BudgetTooSmall { .. }
                | Error::BufferTooSmall { .. }
                | Error::StallDeadlock { .. }
                | Error::PipelineTooSlow { .. }
                | Error::NoFeasibleConfig(_)
                | Error::InfeasibleProtocol { .. }
        )
    }
}
