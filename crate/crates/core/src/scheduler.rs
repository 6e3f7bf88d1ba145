//! Launch/resume buffer thresholds and the three-phase state machine.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FactorySpec;

/// A production or consumption rate in states per stabilizer round.
///
/// Kept as an exact rational so the floors in the threshold formulas never
/// land on the wrong side of an integer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(BigRational);

impl Rate {
    /// `states` per `rounds`. Panics on a zero denominator.
    pub fn new(states: u64, rounds: u64) -> Self {
        assert!(rounds > 0, "rate denominator must be positive");
        Rate(BigRational::new(BigInt::from(states), BigInt::from(rounds)))
    }

    pub fn zero() -> Self {
        Rate(BigRational::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn as_ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::INFINITY)
    }

    /// Sum of `copies · outputs / duration` over an allocation.
    pub fn sum<I: IntoIterator<Item = (u64, u64, u64)>>(terms: I) -> Self {
        let mut acc = BigRational::zero();
        for (copies, outputs, duration) in terms {
            if copies == 0 || outputs == 0 {
                continue;
            }
            acc += BigRational::new(BigInt::from(copies * outputs), BigInt::from(duration));
        }
        Rate(acc)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// floor(demand · r_prod / r_cons), saturating into u64.
fn covered_by_production(demand: u64, r_cons: &Rate, r_prod: &Rate) -> u64 {
    assert!(!r_cons.is_zero(), "consumption rate must be positive");
    if let Some(v) = covered_small(demand, r_cons, r_prod) {
        return v;
    }
    let x = BigRational::from_integer(BigInt::from(demand)) * &r_prod.0 / &r_cons.0;
    x.floor().to_integer().to_u64().unwrap_or(u64::MAX)
}

/// Integer fast path; `None` on overflow. Rates are non-negative and reduced,
/// so the floor is plain integer division.
fn covered_small(demand: u64, r_cons: &Rate, r_prod: &Rate) -> Option<u64> {
    let (a, b) = (r_prod.0.numer().to_i128()?, r_prod.0.denom().to_i128()?);
    let (c, d) = (r_cons.0.numer().to_i128()?, r_cons.0.denom().to_i128()?);
    let num = i128::from(demand).checked_mul(a)?.checked_mul(d)?;
    let den = b.checked_mul(c)?;
    u64::try_from(num / den).ok()
}

/// States to pre-buffer before launching the high-level factory, clamped by
/// the buffer capacity.
pub fn launch_threshold(
    n_total: u64,
    n_burst: u64,
    r_cons: &Rate,
    r_prod: &Rate,
    n_buf: u64,
) -> u64 {
    debug_assert!(n_total >= n_burst && n_burst >= 1);
    let covered = covered_by_production(n_total - n_burst, r_cons, r_prod);
    let slack = n_burst.max(n_total.saturating_sub(covered));
    slack.min(n_buf)
}

/// Unclamped launch slack.
pub fn launch_slack(n_total: u64, n_burst: u64, r_cons: &Rate, r_prod: &Rate) -> u64 {
    let covered = covered_by_production(n_total - n_burst, r_cons, r_prod);
    n_burst.max(n_total.saturating_sub(covered))
}

/// States needed in the buffer before a stalled factory with `n_rot`
/// rotations left may resume.
pub fn resume_threshold(n_rot: u64, r_cons: &Rate, r_prod: &Rate, n_buf: u64) -> u64 {
    resume_slack(n_rot, r_cons, r_prod).min(n_buf)
}

/// Unclamped resume slack.
pub fn resume_slack(n_rot: u64, r_cons: &Rate, r_prod: &Rate) -> u64 {
    let covered = covered_by_production(n_rot, r_cons, r_prod);
    1.max(n_rot.saturating_sub(covered))
}

/// Steady-state consumption rate: the non-burst demand spread over the span
/// it is consumed in. For 15-to-1 at distance d this is one state every d
/// rounds.
pub fn consumption_rate(spec: &FactorySpec) -> Rate {
    let steady = spec.total_demand - spec.burst_demand;
    let span = spec
        .consumption_offsets
        .last()
        .map(|&(o, _)| o)
        .unwrap_or(spec.duration_rounds);
    if steady == 0 || span == 0 {
        // No steady phase; any positive value keeps the thresholds at the burst.
        return Rate::new(1, 1);
    }
    Rate::new(steady, span)
}

/// The four threshold values for one two-level configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub n_slack: u64,
    pub n_th: u64,
    pub n_slack_resume: u64,
    pub n_th_resume: u64,
}

impl Thresholds {
    pub fn compute(
        n_total: u64,
        n_burst: u64,
        n_rot: u64,
        r_cons: &Rate,
        r_prod: &Rate,
        n_buf: u64,
    ) -> Self {
        let n_slack = launch_slack(n_total, n_burst, r_cons, r_prod);
        let n_slack_resume = resume_slack(n_rot, r_cons, r_prod);
        Self {
            n_slack,
            n_th: n_slack.min(n_buf),
            n_slack_resume,
            n_th_resume: n_slack_resume.min(n_buf),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    FillBuffer,
    ParallelRun,
    StallReuse,
    Done,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::FillBuffer => "fill",
            Phase::ParallelRun => "parallel",
            Phase::StallReuse => "stall",
            Phase::Done => "done",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    ThresholdReached,
    Stall,
    Resumed,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseState {
    pub phase: Phase,
    pub buffer_count: u64,
    pub rotations_remaining: u64,
    pub clock: u64,
}

impl PhaseState {
    pub fn new(rotations: u64) -> Self {
        Self {
            phase: Phase::FillBuffer,
            buffer_count: 0,
            rotations_remaining: rotations,
            clock: 0,
        }
    }
}

/// Advance the phase machine. Only the transitions
/// fill → parallel → (stall ↔ parallel) → done are legal.
pub fn step_phase(state: &PhaseState, event: Event) -> Result<PhaseState> {
    let next = match (state.phase, event) {
        (Phase::FillBuffer, Event::ThresholdReached) => Phase::ParallelRun,
        (Phase::ParallelRun, Event::Stall) => Phase::StallReuse,
        (Phase::StallReuse, Event::Resumed) => Phase::ParallelRun,
        (Phase::ParallelRun, Event::Completed) => Phase::Done,
        (phase, event) => return Err(Error::IllegalTransition { phase, event }),
    };
    Ok(PhaseState {
        phase: next,
        ..state.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_15to1, Preset};

    #[test]
    fn launch_examples() {
        let r = Rate::new(1, 3);
        assert_eq!(launch_threshold(15, 4, &r, &r, 15), 4);
        assert_eq!(launch_threshold(15, 4, &r, &Rate::zero(), 10), 10);
        assert_eq!(launch_threshold(15, 4, &r, &Rate::new(1, 6), 15), 10);
        // clamp to buffer
        assert_eq!(launch_threshold(15, 4, &r, &Rate::new(1, 6), 7), 7);
    }

    #[test]
    fn resume_examples() {
        let r = Rate::new(1, 5);
        assert_eq!(resume_threshold(11, &r, &r, 15), 1);
        assert_eq!(resume_threshold(11, &r, &Rate::new(1, 2), 15), 1);
        assert_eq!(resume_threshold(6, &r, &Rate::zero(), 15), 6);
        assert_eq!(resume_threshold(1, &r, &Rate::zero(), 15), 1);
        assert_eq!(resume_threshold(1, &r, &Rate::new(7, 1), 15), 1);
    }

    #[test]
    fn consumption_rates() {
        let params = Preset::Supercond.params();
        for (d, want) in [
            (1, Rate::new(1, 1)),
            (3, Rate::new(1, 3)),
            (17, Rate::new(1, 17)),
        ] {
            let spec = build_15to1(d, 1e-4, &params).unwrap();
            assert_eq!(consumption_rate(&spec), want);
        }
    }

    #[test]
    fn exact_floor_at_integer_boundary() {
        // 11 · (1/3) / (1/3) is exactly 11; a float path gives 10.999...
        let third = Rate::new(1, 3);
        assert_eq!(launch_threshold(15, 4, &third, &third, 15), 4);
        let r_prod = Rate::new(10, 33);
        // 11 · (10/33) · 3 = 10 exactly
        assert_eq!(launch_slack(15, 4, &third, &r_prod), 5);
    }

    #[test]
    fn phase_machine() {
        let s = PhaseState::new(11);
        let s = step_phase(&s, Event::ThresholdReached).unwrap();
        assert_eq!(s.phase, Phase::ParallelRun);
        let s = step_phase(&s, Event::Stall).unwrap();
        assert_eq!(s.phase, Phase::StallReuse);
        assert!(step_phase(&s, Event::Completed).is_err());
        let s = step_phase(&s, Event::Resumed).unwrap();
        let s = step_phase(&s, Event::Completed).unwrap();
        assert_eq!(s.phase, Phase::Done);
        assert!(step_phase(&s, Event::Stall).is_err());

        let fresh = PhaseState::new(11);
        assert!(matches!(
            step_phase(&fresh, Event::Stall),
            Err(Error::IllegalTransition {
                phase: Phase::FillBuffer,
                event: Event::Stall
            })
        ));
    }

    proptest::proptest! {
        #[test]
        fn launch_reduces_to_burst_when_supply_keeps_up(
            n_burst in 1u64..10, extra in 0u64..20, n_buf_extra in 0u64..20,
            cn in 1u64..30, cd in 1u64..30, boost in 0u64..30,
        ) {
            let n_total = n_burst + extra;
            let n_buf = n_burst + n_buf_extra;
            let r_cons = Rate::new(cn, cd);
            let r_prod = Rate::new(cn * cd + boost, cd * cd); // >= r_cons
            proptest::prop_assume!(r_prod >= r_cons);
            proptest::prop_assert_eq!(
                launch_threshold(n_total, n_burst, &r_cons, &r_prod, n_buf),
                n_burst.min(n_buf)
            );
        }

        #[test]
        fn launch_monotone(
            n_burst in 1u64..8, extra in 0u64..20, n_buf in 1u64..30,
            pn in 0u64..30, pd in 1u64..30, cn in 1u64..30, cd in 1u64..30,
        ) {
            let n_buf = n_buf.max(n_burst);
            let n_total = n_burst + extra;
            let r_cons = Rate::new(cn, cd);
            let lo = Rate::new(pn, pd);
            let hi = Rate::new(pn + 1, pd);
            let a = launch_threshold(n_total, n_burst, &r_cons, &lo, n_buf);
            let b = launch_threshold(n_total, n_burst, &r_cons, &hi, n_buf);
            proptest::prop_assert!(b <= a);
            let c = launch_threshold(n_total + 1, n_burst, &r_cons, &lo, n_buf);
            proptest::prop_assert!(c >= a);
            proptest::prop_assert!(a <= n_buf && a >= n_burst.min(n_buf));
        }

        #[test]
        fn resume_clamped_and_idempotent(
            n_rot in 1u64..20, n_buf in 1u64..30,
            pn in 0u64..30, pd in 1u64..30, cn in 1u64..30, cd in 1u64..30,
        ) {
            let r_cons = Rate::new(cn, cd);
            let r_prod = Rate::new(pn, pd);
            let a = resume_threshold(n_rot, &r_cons, &r_prod, n_buf);
            proptest::prop_assert_eq!(a, resume_threshold(n_rot, &r_cons, &r_prod, n_buf));
            proptest::prop_assert!(a >= 1 && a <= n_buf);
            let s = resume_slack(n_rot, &r_cons, &r_prod);
            proptest::prop_assert!(s >= 1 && s <= n_rot);
        }
    }
}
