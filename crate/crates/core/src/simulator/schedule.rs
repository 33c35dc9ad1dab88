use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-open time interval `[start, end)` in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Self {
            start: v[0],
            end: v[1],
        }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.start, i.end]
    }
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    /// True when `t` lies strictly inside.
    pub fn interior(&self, t: f64) -> bool {
        t > self.start && t < self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn shifted(&self, dt: f64) -> Self {
        Self::new(self.start + dt, self.end + dt)
    }
}

/// Checks that intervals are well formed, ordered and disjoint.
pub fn validate_intervals(intervals: &[Interval], label: &str) -> Result<()> {
    for (k, iv) in intervals.iter().enumerate() {
        if !(iv.start.is_finite() && iv.end.is_finite() && iv.start < iv.end) {
            return Err(Error::Config(format!(
                "{label} interval {k} [{}, {}] is empty or not finite",
                iv.start, iv.end
            )));
        }
        if k > 0 && intervals[k - 1].end > iv.start {
            return Err(Error::Config(format!(
                "{label} intervals {} and {k} overlap or are out of order",
                k - 1
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchKind {
    SleepOnset,
    Wake,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub t: f64,
    pub kind: SwitchKind,
}

impl Switch {
    pub fn onset(t: f64) -> Self {
        Self {
            t,
            kind: SwitchKind::SleepOnset,
        }
    }

    pub fn wake(t: f64) -> Self {
        Self {
            t,
            kind: SwitchKind::Wake,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Switching follows the model's own thresholds.
    Spontaneous,
    /// Spontaneous switching outside forced-wake intervals.
    ForcedIntervals,
    /// Switching happens only at the listed times.
    Tunable,
}

/// How sleep and wakefulness are decided during a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SleepScheduleSpec {
    pub kind: ScheduleKind,
    #[serde(default)]
    pub forced_wake_intervals: Vec<Interval>,
    /// Used by tunable schedules; must alternate starting from the initial mode.
    #[serde(default)]
    pub switches: Vec<Switch>,
}

impl Default for SleepScheduleSpec {
    fn default() -> Self {
        Self::spontaneous()
    }
}

impl SleepScheduleSpec {
    pub fn spontaneous() -> Self {
        Self {
            kind: ScheduleKind::Spontaneous,
            forced_wake_intervals: Vec::new(),
            switches: Vec::new(),
        }
    }

    pub fn forced(intervals: Vec<Interval>) -> Self {
        Self {
            kind: ScheduleKind::ForcedIntervals,
            forced_wake_intervals: intervals,
            switches: Vec::new(),
        }
    }

    pub fn tunable(switches: Vec<Switch>, forced: Vec<Interval>) -> Self {
        Self {
            kind: ScheduleKind::Tunable,
            forced_wake_intervals: forced,
            switches,
        }
    }

    pub fn is_spontaneous(&self) -> bool {
        self.kind != ScheduleKind::Tunable
    }

    pub fn forced_at(&self, t: f64) -> bool {
        self.forced_wake_intervals.iter().any(|iv| iv.contains(t))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: SleepScheduleSpec = serde_json::from_str(text)?;
        Ok(s)
    }

    /// Structural checks; `initial_asleep` is the mode at the start time.
    pub fn validate(&self, initial_asleep: bool) -> Result<()> {
        validate_intervals(&self.forced_wake_intervals, "forced-wake")?;
        if self.kind == ScheduleKind::Spontaneous && !self.forced_wake_intervals.is_empty() {
            return Err(Error::Config(
                "spontaneous schedules take no forced-wake intervals; use forced_intervals".into(),
            ));
        }
        if self.kind != ScheduleKind::Tunable {
            if !self.switches.is_empty() {
                return Err(Error::Config("switch times need a tunable schedule".into()));
            }
            return Ok(());
        }
        let mut problems = Vec::new();
        let mut asleep = initial_asleep;
        for (k, sw) in self.switches.iter().enumerate() {
            if !sw.t.is_finite() {
                problems.push(format!("switch {k} time is not finite"));
                continue;
            }
            if k > 0 && sw.t < self.switches[k - 1].t {
                problems.push(format!("switch {k} at {:.4} h is out of order", sw.t));
            }
            let to_sleep = sw.kind == SwitchKind::SleepOnset;
            if to_sleep == asleep {
                problems.push(format!(
                    "switch {k} at {:.4} h repeats the current mode ({:?})",
                    sw.t, sw.kind
                ));
            }
            asleep = to_sleep;
        }
        // No sleep may overlap a forced-wake interval.
        let mut asleep = initial_asleep;
        let mut since = f64::NEG_INFINITY;
        let check = |from: f64, to: f64, problems: &mut Vec<String>| {
            for iv in &self.forced_wake_intervals {
                if from < iv.end && to > iv.start {
                    problems.push(format!(
                        "sleep [{from:.4}, {to:.4}] overlaps forced wake [{:.4}, {:.4}]",
                        iv.start, iv.end
                    ));
                }
            }
        };
        for sw in &self.switches {
            match sw.kind {
                SwitchKind::SleepOnset => since = sw.t,
                SwitchKind::Wake if asleep => check(since, sw.t, &mut problems),
                SwitchKind::Wake => {}
            }
            asleep = sw.kind == SwitchKind::SleepOnset;
        }
        if asleep {
            check(since, f64::INFINITY, &mut problems);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Constraints(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_json_is_a_pair() {
        let iv: Interval = serde_json::from_str("[1.5, 3]").unwrap();
        assert_eq!(iv, Interval::new(1.5, 3.0));
        assert_eq!(serde_json::to_string(&iv).unwrap(), "[1.5,3.0]");
    }

    #[test]
    fn overlapping_intervals_rejected() {
        let s = SleepScheduleSpec::forced(vec![Interval::new(0.0, 2.0), Interval::new(1.0, 3.0)]);
        assert!(s.validate(false).is_err());
        let s = SleepScheduleSpec::forced(vec![Interval::new(0.0, 1.0), Interval::new(1.0, 3.0)]);
        s.validate(false).unwrap();
    }

    #[test]
    fn tunable_must_alternate() {
        let s = SleepScheduleSpec::tunable(vec![Switch::onset(1.0), Switch::onset(2.0)], vec![]);
        assert!(matches!(s.validate(false), Err(Error::Constraints(_))));
        let s = SleepScheduleSpec::tunable(vec![Switch::onset(1.0), Switch::wake(2.0)], vec![]);
        s.validate(false).unwrap();
        assert!(s.validate(true).is_err());
    }

    #[test]
    fn sleep_inside_forced_wake_rejected() {
        let forced = vec![Interval::new(5.0, 8.0)];
        let s = SleepScheduleSpec::tunable(vec![Switch::onset(1.0), Switch::wake(6.0)], forced.clone());
        assert!(s.validate(false).is_err());
        let s = SleepScheduleSpec::tunable(vec![Switch::onset(1.0), Switch::wake(5.0)], forced.clone());
        s.validate(false).unwrap();
        let s = SleepScheduleSpec::tunable(vec![Switch::onset(8.0)], forced);
        s.validate(false).unwrap();
    }
}
