//! Piecewise-constant light schedules.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Indoor light level used for the reference day (lux).
pub const ROOM_LIGHT_LUX: f64 = 150.0;
/// Hours of light per reference day, starting at t = 0 (6 AM).
pub const ROOM_LIGHT_HOURS: f64 = 16.0;

/// Lux samples on a uniform grid starting at `start_h`; constant within a bin.
///
/// With `period_h` set, the samples cover one period and repeat. Otherwise
/// the signal is zero outside the sampled span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSignal {
    #[serde(default)]
    pub start_h: f64,
    pub grid_step_h: f64,
    pub values_lux: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_h: Option<f64>,
}

impl LightSignal {
    pub fn new(start_h: f64, grid_step_h: f64, values_lux: Vec<f64>) -> Result<Self> {
        let s = Self {
            start_h,
            grid_step_h,
            values_lux,
            period_h: None,
        };
        s.validate(f64::INFINITY)?;
        Ok(s)
    }

    pub fn periodic(grid_step_h: f64, values_lux: Vec<f64>) -> Result<Self> {
        let period = grid_step_h * values_lux.len() as f64;
        let s = Self {
            start_h: 0.0,
            grid_step_h,
            values_lux,
            period_h: Some(period),
        };
        s.validate(f64::INFINITY)?;
        Ok(s)
    }

    /// Constant light for all time.
    pub fn constant(lux: f64) -> Result<Self> {
        Self::periodic(24.0, vec![lux])
    }

    /// 150 lux from 6 AM to 10 PM, dark otherwise, repeating daily.
    pub fn reference_day(grid_step_h: f64) -> Result<Self> {
        Self::photoperiod(grid_step_h, ROOM_LIGHT_HOURS, ROOM_LIGHT_LUX)
    }

    /// `lux` during the first `light_hours` of every 24 h day, dark otherwise.
    pub fn photoperiod(grid_step_h: f64, light_hours: f64, lux: f64) -> Result<Self> {
        let n = (24.0 / grid_step_h).round() as usize;
        if n == 0 || ((n as f64) * grid_step_h - 24.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "grid step {grid_step_h} h does not divide 24 h"
            )));
        }
        let values = (0..n)
            .map(|k| {
                if (k as f64 + 0.5) * grid_step_h < light_hours {
                    lux
                } else {
                    0.0
                }
            })
            .collect();
        Self::periodic(grid_step_h, values)
    }

    /// Samples `lux_at(t)` at bin midpoints over `[start_h, end_h)`.
    pub fn sampled(
        start_h: f64,
        end_h: f64,
        grid_step_h: f64,
        lux_at: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let n = ((end_h - start_h) / grid_step_h).round().max(0.0) as usize;
        let values = (0..n)
            .map(|k| lux_at(start_h + (k as f64 + 0.5) * grid_step_h))
            .collect();
        Self::new(start_h, grid_step_h, values)
    }

    pub fn validate(&self, i_max: f64) -> Result<()> {
        if !(self.grid_step_h > 0.0 && self.grid_step_h.is_finite()) {
            return Err(Error::Config(format!(
                "grid_step_h must be positive, got {}",
                self.grid_step_h
            )));
        }
        if let Some(p) = self.period_h {
            let covered = self.grid_step_h * self.values_lux.len() as f64;
            if !(p > 0.0) || (covered - p).abs() > 1e-9 * p.max(1.0) {
                return Err(Error::Config(format!(
                    "period_h {p} must equal grid_step_h x number of samples ({covered})"
                )));
            }
        }
        for (k, &v) in self.values_lux.iter().enumerate() {
            if !(v >= 0.0 && v <= i_max) {
                return Err(Error::Config(format!(
                    "light sample {k} = {v} lux outside [0, {i_max}]"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: LightSignal = serde_json::from_str(text)?;
        s.validate(f64::INFINITY)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Bin index containing `t`, or `None` outside a non-periodic span.
    pub fn bin_index(&self, t: f64) -> Option<usize> {
        let n = self.values_lux.len();
        if n == 0 {
            return None;
        }
        let rel = (t - self.start_h) / self.grid_step_h;
        match self.period_h {
            Some(_) => {
                let k = rel.floor() as i64;
                Some(k.rem_euclid(n as i64) as usize)
            }
            None => {
                if rel < 0.0 {
                    return None;
                }
                let k = rel.floor() as usize;
                (k < n).then_some(k)
            }
        }
    }

    /// Illuminance at time `t` (lux).
    pub fn at(&self, t: f64) -> f64 {
        self.bin_index(t).map_or(0.0, |k| self.values_lux[k])
    }

    /// Bin boundaries lying strictly inside `(t0, t1)`.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let h = self.grid_step_h;
        let (lo, hi) = match self.period_h {
            Some(_) => (t0, t1),
            None => (
                t0.max(self.start_h),
                t1.min(self.start_h + h * self.values_lux.len() as f64),
            ),
        };
        let mut out = Vec::new();
        let mut k = ((lo - self.start_h) / h).floor() as i64;
        loop {
            let t = self.start_h + k as f64 * h;
            if t >= hi + 1e-12 {
                break;
            }
            if t > t0 + 1e-12 && t < t1 - 1e-12 {
                out.push(t);
            }
            k += 1;
        }
        out
    }

    /// Copy with every sample clamped to `[0, i_max]`.
    pub fn clamped(&self, i_max: f64) -> Self {
        let mut s = self.clone();
        for v in &mut s.values_lux {
            *v = v.clamp(0.0, i_max);
        }
        s
    }

    pub fn end_h(&self) -> f64 {
        self.start_h + self.grid_step_h * self.values_lux.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_day_levels() {
        let l = LightSignal::reference_day(0.1).unwrap();
        assert_eq!(l.values_lux.len(), 240);
        assert_eq!(l.at(0.0), 150.0);
        assert_eq!(l.at(15.99), 150.0);
        assert_eq!(l.at(16.0), 0.0);
        assert_eq!(l.at(23.9), 0.0);
        assert_eq!(l.at(24.0 + 3.0), 150.0);
        assert_eq!(l.at(-1.0), 0.0);
        assert_eq!(l.at(-9.0), 150.0);
    }

    #[test]
    fn finite_signal_is_dark_outside() {
        let l = LightSignal::new(2.0, 0.5, vec![10.0, 20.0]).unwrap();
        assert_eq!(l.at(1.9), 0.0);
        assert_eq!(l.at(2.0), 10.0);
        assert_eq!(l.at(2.7), 20.0);
        assert_eq!(l.at(3.0), 0.0);
        assert_eq!(l.breakpoints(0.0, 10.0), vec![2.0, 2.5, 3.0]);
        assert_eq!(l.breakpoints(2.1, 2.9), vec![2.5]);
    }

    #[test]
    fn json_round_trip_and_errors() {
        let l = LightSignal::from_json(r#"{"grid_step_h": 12, "values_lux": [100, 0], "period_h": 24}"#)
            .unwrap();
        assert_eq!(l.at(13.0), 0.0);
        assert_eq!(LightSignal::from_json(&l.to_json().unwrap()).unwrap(), l);
        assert!(LightSignal::from_json(r#"{"grid_step_h": 1, "values_lux": [-1]}"#).is_err());
        assert!(LightSignal::from_json(r#"{"grid_step_h": 0, "values_lux": [1]}"#).is_err());
        assert!(LightSignal::from_json(r#"{"grid_step_h": 1, "values_lux": [1], "period_h": 2}"#)
            .is_err());
        assert!(LightSignal::from_json("{not json").is_err());
    }

    #[test]
    fn clamp_to_box() {
        let l = LightSignal::new(0.0, 1.0, vec![200.0, 50.0]).unwrap().clamped(150.0);
        assert_eq!(l.values_lux, vec![150.0, 50.0]);
        l.validate(150.0).unwrap();
    }
}
