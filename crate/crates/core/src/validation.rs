//! Constant-routine and photoperiod protocols, and the affine fit of
//! predicted alertness to subjective scores.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::light::LightSignal;
use crate::params::ModelParams;
use crate::registry::SleepModel;
use crate::simulator::{
    EventKind, Interval, ModelState, PeriodicOptions, SimulationSpan, SleepScheduleSpec,
    Trajectory,
};

/// Constant-routine light level (lux).
pub const CONSTANT_ROUTINE_LUX: f64 = 150.0;
pub const CONSTANT_ROUTINE_HOURS: f64 = 60.0;
/// Dim light of the photoperiod protocol; the protocol only bounds it below 1 lux.
pub const DIM_LUX: f64 = 0.5;
pub const DIM_HOURS: f64 = 24.0;
pub const PHOTOPERIOD_DAYS: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreLabel {
    /// Visual-analog alertness scale (mm).
    #[serde(rename = "VAS")]
    Vas,
    /// Stanford Sleepiness Scale.
    #[serde(rename = "SSS")]
    Sss,
}

impl fmt::Display for ScoreLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreLabel::Vas => "VAS",
            ScoreLabel::Sss => "SSS",
        })
    }
}

impl FromStr for ScoreLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "VAS" => Ok(ScoreLabel::Vas),
            "SSS" => Ok(ScoreLabel::Sss),
            _ => Err(Error::Config(format!("unknown label {s:?}; expected VAS or SSS"))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    t_h: f64,
    mean: f64,
    std: f64,
}

/// Mean and standard deviation of a score at hours since the protocol start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSeries {
    pub label: ScoreLabel,
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl DatasetSeries {
    pub fn new(label: ScoreLabel, times: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let s = Self {
            label,
            times,
            means,
            stds,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n == 0 || self.means.len() != n || self.stds.len() != n {
            return Err(Error::Config(format!(
                "dataset needs equally long, non-empty columns (t {}, mean {}, std {})",
                n,
                self.means.len(),
                self.stds.len()
            )));
        }
        if let Some(k) = self.stds.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("row {}: std must be positive", k + 1)));
        }
        if let Some(k) = self.means.iter().position(|m| !m.is_finite()) {
            return Err(Error::Config(format!("row {}: mean is not finite", k + 1)));
        }
        if let Some(k) = self.times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "row {}: times must be strictly increasing",
                k + 2
            )));
        }
        Ok(())
    }

    /// Reads a `t_h,mean,std` CSV.
    pub fn from_reader(label: ScoreLabel, reader: impl std::io::Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let (mut t, mut m, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for row in r.deserialize() {
            let row: Row = row?;
            t.push(row.t_h);
            m.push(row.mean);
            s.push(row.std);
        }
        Self::new(label, t, m, s)
    }

    pub fn load(label: ScoreLabel, path: &Path) -> Result<Self> {
        Self::from_reader(label, std::fs::File::open(path)?)
    }
}

/// Minimizer of `sum((m - theta1 a - theta2) / sigma)^2` and its value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta1: f64,
    pub theta2: f64,
    pub nmse: f64,
}

/// Weighted quadratic form of the residual for given parameters.
pub fn nmse(predicted: &[f64], data: &DatasetSeries, theta1: f64, theta2: f64) -> f64 {
    predicted
        .iter()
        .zip(&data.means)
        .zip(&data.stds)
        .map(|((a, m), s)| ((m - theta1 * a - theta2) / s).powi(2))
        .sum()
}

/// Closed-form weighted least squares for the affine map `theta1 A + theta2`.
pub fn weighted_linear_fit(predicted: &[f64], data: &DatasetSeries) -> Result<FitResult> {
    data.validate()?;
    if predicted.len() != data.means.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} measurements",
            predicted.len(),
            data.means.len()
        )));
    }
    let (mut sw, mut sa, mut sm, mut saa, mut sam) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((a, m), s) in predicted.iter().zip(&data.means).zip(&data.stds) {
        let w = 1.0 / (s * s);
        sw += w;
        sa += w * a;
        sm += w * m;
        saa += w * a * a;
        sam += w * a * m;
    }
    // Centered form keeps the determinant well conditioned.
    let (abar, mbar) = (sa / sw, sm / sw);
    let var = saa - sw * abar * abar;
    let scale = saa.abs().max(f64::MIN_POSITIVE);
    if !(var > 1e-12 * scale) {
        return Err(Error::DegenerateFit(
            "predicted series is constant over the dataset times".into(),
        ));
    }
    let theta1 = (sam - sw * abar * mbar) / var;
    let theta2 = mbar - theta1 * abar;
    Ok(FitResult {
        theta1,
        theta2,
        nmse: nmse(predicted, data, theta1, theta2),
    })
}

/// Forced-wake segment of a protocol, with time measured from its start.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    /// Absolute time at which the segment starts (a spontaneous wake).
    pub start: f64,
    pub trajectory: Trajectory,
    /// Normalized 24 h return mismatch at the end of the lead-in.
    pub lead_in_mismatch: f64,
}

impl ProtocolRun {
    /// Alertness at hours since the segment start, linearly interpolated.
    pub fn alertness_at(&self, times: &[f64]) -> Result<Vec<f64>> {
        times
            .iter()
            .map(|&t| {
                self.trajectory
                    .interpolate(self.start + t, |s| s.alertness)
                    .ok_or_else(|| {
                        Error::Config(format!("sample time {t} h lies outside the protocol"))
                    })
            })
            .collect()
    }
}

fn state_mismatch(a: &ModelState, b: &ModelState) -> f64 {
    a.to_vec()
        .iter()
        .zip(b.to_vec())
        .map(|(u, v)| (u - v).abs() / u.abs().max(v.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Entrains to `lead_light`, keeps following it for `lead_days`, then holds
/// the subject awake from the next spontaneous wake for `hours` under
/// constant `lux`.
pub fn forced_wake_protocol(
    model: &dyn SleepModel,
    params: &ModelParams,
    lead_light: &LightSignal,
    lead_days: u32,
    lux: f64,
    hours: f64,
) -> Result<ProtocolRun> {
    let cfg = model.default_integrator();
    let periodic = model.entrain(params, lead_light, &cfg, &PeriodicOptions::default())?;
    let spontaneous = SleepScheduleSpec::spontaneous();
    let (mut state, mut asleep) = (periodic.start_state.clone(), periodic.start_asleep);
    let mut t = 0.0;
    let mut mismatch = 0.0;
    for _ in 0..lead_days {
        let day = model.simulate(
            params,
            &state,
            asleep,
            &SimulationSpan {
                t0: t,
                t1: t + 24.0,
                light: lead_light,
                schedule: &spontaneous,
                cfg: &cfg,
            },
        )?;
        mismatch = state_mismatch(&state, &day.final_state);
        state = day.final_state;
        asleep = day.final_asleep;
        t += 24.0;
    }
    // Follow the lead light to the next wake.
    let probe = model.simulate(
        params,
        &state,
        asleep,
        &SimulationSpan {
            t0: t,
            t1: t + 24.0,
            light: lead_light,
            schedule: &spontaneous,
            cfg: &cfg,
        },
    )?;
    let wake = probe
        .events_of(EventKind::Woke)
        .next()
        .ok_or_else(|| Error::integration(t, "no spontaneous wake within a day"))?;
    if wake > t {
        let to_wake = model.simulate(
            params,
            &state,
            asleep,
            &SimulationSpan {
                t0: t,
                t1: wake,
                light: lead_light,
                schedule: &spontaneous,
                cfg: &cfg,
            },
        )?;
        state = to_wake.final_state;
    }
    let light = LightSignal::constant(lux)?;
    // Held past the end so the last sample is still awake.
    let forced = SleepScheduleSpec::forced(vec![Interval::new(wake, wake + hours + 1.0)]);
    let trajectory = model.simulate(
        params,
        &state,
        false,
        &SimulationSpan {
            t0: wake,
            t1: wake + hours,
            light: &light,
            schedule: &forced,
            cfg: &cfg,
        },
    )?;
    Ok(ProtocolRun {
        start: wake,
        trajectory,
        lead_in_mismatch: mismatch,
    })
}

/// 60 h awake at 150 lux from the entrained wake.
pub fn run_constant_routine(model: &dyn SleepModel, params: &ModelParams) -> Result<ProtocolRun> {
    forced_wake_protocol(
        model,
        params,
        &LightSignal::reference_day(0.1)?,
        0,
        CONSTANT_ROUTINE_LUX,
        CONSTANT_ROUTINE_HOURS,
    )
}

/// A week of 16 h light, then 24 h awake in dim light.
pub fn run_photoperiod(model: &dyn SleepModel, params: &ModelParams) -> Result<ProtocolRun> {
    forced_wake_protocol(
        model,
        params,
        &LightSignal::reference_day(0.1)?,
        PHOTOPERIOD_DAYS,
        DIM_LUX,
        DIM_HOURS,
    )
}

/// One fitted model against one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub label: ScoreLabel,
    pub theta1: f64,
    pub theta2: f64,
    pub nmse: f64,
    /// Same fit expressed against sleepiness `B = 1 - A`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement: Option<FitResult>,
}

/// Runs the protocol that matches the dataset's label and fits the model.
pub fn fit_model(
    model: &dyn SleepModel,
    params: &ModelParams,
    data: &DatasetSeries,
) -> Result<FitReport> {
    let run = match data.label {
        ScoreLabel::Vas => run_constant_routine(model, params)?,
        ScoreLabel::Sss => run_photoperiod(model, params)?,
    };
    let predicted = run.alertness_at(&data.times)?;
    let fit = weighted_linear_fit(&predicted, data)?;
    let complement = (data.label == ScoreLabel::Sss).then(|| FitResult {
        theta1: -fit.theta1,
        theta2: fit.theta1 + fit.theta2,
        nmse: fit.nmse,
    });
    Ok(FitReport {
        model: model.name().to_string(),
        label: data.label,
        theta1: fit.theta1,
        theta2: fit.theta2,
        nmse: fit.nmse,
        complement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Registry;
    use approx::assert_relative_eq;

    fn series(times: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> DatasetSeries {
        DatasetSeries::new(ScoreLabel::Vas, times, means, stds).unwrap()
    }

    #[test]
    fn exact_linear_data() {
        let a = [0.3, -1.0, 2.0, 0.7];
        let m: Vec<f64> = a.iter().map(|v| 2.0 * v + 3.0).collect();
        let d = series(vec![0.0, 1.0, 2.0, 3.0], m, vec![1.0; 4]);
        let f = weighted_linear_fit(&a, &d).unwrap();
        assert_relative_eq!(f.theta1, 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.theta2, 3.0, epsilon = 1e-12);
        assert!(f.nmse < 1e-20);
    }

    #[test]
    fn constant_prediction_is_degenerate() {
        let d = series(vec![0.0, 1.0], vec![1.0, 2.0], vec![1.0, 1.0]);
        assert!(matches!(
            weighted_linear_fit(&[0.5, 0.5], &d),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn csv_rows() {
        let text = "t_h,mean,std\n0,50,5\n2,45,4\n";
        let d = DatasetSeries::from_reader(ScoreLabel::Sss, text.as_bytes()).unwrap();
        assert_eq!(d.times, vec![0.0, 2.0]);
        assert_eq!(d.stds, vec![5.0, 4.0]);
        let bad = "t_h,mean,std\n0,50,0\n";
        assert!(DatasetSeries::from_reader(ScoreLabel::Vas, bad.as_bytes()).is_err());
        let unordered = "t_h,mean,std\n1,50,1\n1,40,1\n";
        assert!(DatasetSeries::from_reader(ScoreLabel::Vas, unordered.as_bytes()).is_err());
    }

    #[test]
    fn label_parsing() {
        assert_eq!("vas".parse::<ScoreLabel>().unwrap(), ScoreLabel::Vas);
        assert_eq!(serde_json::to_string(&ScoreLabel::Sss).unwrap(), "\"SSS\"");
        assert!("KSS".parse::<ScoreLabel>().is_err());
    }

    #[test]
    fn constant_routine_stays_awake_and_builds_pressure() {
        let p = ModelParams::default();
        let model = Registry::builtin().model("pr-hybrid").unwrap();
        let run = run_constant_routine(model.as_ref(), &p).unwrap();
        let s = &run.trajectory.samples;
        assert!(s.iter().all(|x| x.beta == 0.0));
        assert!(s.windows(2).all(|w| w[1].h >= w[0].h - 1e-12));
        assert_relative_eq!(s.last().unwrap().t - run.start, CONSTANT_ROUTINE_HOURS, epsilon = 1e-9);
        assert!(run.alertness_at(&[61.0]).is_err());
        assert!(run.alertness_at(&[0.0, 30.0, 60.0]).is_ok());
    }

    #[test]
    fn photoperiod_lead_in_is_entrained() {
        let p = ModelParams::default();
        let model = Registry::builtin().model("pr-hybrid").unwrap();
        let run = run_photoperiod(model.as_ref(), &p).unwrap();
        assert!(run.lead_in_mismatch < 1e-3, "{}", run.lead_in_mismatch);
        assert!(run.trajectory.samples.iter().all(|s| s.lux < 1.0 && s.beta == 0.0));
    }
}
