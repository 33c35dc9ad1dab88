//! Running costs of the alertness objectives.

use std::fmt::Debug;

use crate::simulator::Interval;

/// A running cost of the form `L = -w(t, beta) * (H+ - H)`.
///
/// The optimizer minimizes `J = ∫ L dt`, so `-J` is the alertness integral
/// the objective rewards. Implementations only choose the weight `w`, which
/// must be constant while the sleep mode is constant and no work boundary is
/// crossed.
pub trait Objective: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn weight(&self, t: f64, asleep: bool, work: &[Interval]) -> f64;
}

/// Alertness counted only while at work.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShiftWork;

impl Objective for ShiftWork {
    fn name(&self) -> &'static str {
        "shift_work"
    }

    fn weight(&self, t: f64, _asleep: bool, work: &[Interval]) -> f64 {
        if work.iter().any(|iv| iv.contains(t)) {
            1.0
        } else {
            0.0
        }
    }
}

/// Alertness counted whenever awake.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cumulative;

impl Objective for Cumulative {
    fn name(&self) -> &'static str {
        "cumulative"
    }

    fn weight(&self, _t: f64, asleep: bool, _work: &[Interval]) -> f64 {
        if asleep {
            0.0
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights() {
        let work = [Interval::new(1.0, 2.0)];
        assert_eq!(ShiftWork.weight(1.5, false, &work), 1.0);
        assert_eq!(ShiftWork.weight(2.0, false, &work), 0.0);
        assert_eq!(ShiftWork.weight(0.5, false, &[]), 0.0);
        assert_eq!(Cumulative.weight(0.5, false, &work), 1.0);
        assert_eq!(Cumulative.weight(0.5, true, &work), 0.0);
    }
}
