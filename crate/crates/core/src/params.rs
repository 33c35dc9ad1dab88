//! Parameter bundles for the three models.
//!
//! All time constants are in hours. The neuronal time constants `tau_m` and
//! `tau_v` (10 s) are therefore stored as `1/360` so that every right-hand
//! side is expressed per hour.

use serde::{Deserialize, Serialize};

use crate::bifurcation::BranchCoefficients;
use crate::error::{Error, Result};

/// Light-driven circadian pacemaker (shared by all three models).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircadianParams {
    /// Stiffness of the van der Pol term, 1/h.
    pub mu: f64,
    /// Photic sensitivity modulation of `x_c`, h.
    pub k_c: f64,
    pub q: f64,
    /// Intrinsic period, h.
    pub tau_x: f64,
    /// 1/h.
    pub k: f64,
    #[serde(rename = "G")]
    pub g: f64,
    /// 1/h.
    pub alpha_0: f64,
    pub p: f64,
    /// Reference illuminance, lux.
    #[serde(rename = "I_0")]
    pub i0: f64,
    /// Photoreceptor recovery rate, 1/h (scaled by 60 in the receptor equation).
    pub gamma: f64,
}

impl Default for CircadianParams {
    fn default() -> Self {
        Self {
            mu: 0.13,
            k_c: 0.4,
            q: 1.0 / 3.0,
            tau_x: 24.2,
            k: 0.55,
            g: 33.75,
            alpha_0: 0.05,
            p: 0.5,
            i0: 9500.0,
            gamma: 0.0075,
        }
    }
}

impl CircadianParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu", self.mu),
            ("k_c", self.k_c),
            ("tau_x", self.tau_x),
            ("k", self.k),
            ("G", self.g),
            ("alpha_0", self.alpha_0),
            ("p", self.p),
            ("I_0", self.i0),
            ("gamma", self.gamma),
        ];
        check_positive(&positive)?;
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Config(format!("q must lie in (0, 1], got {}", self.q)));
        }
        Ok(())
    }

    /// Squared angular frequency term `(24 / (0.99729 tau_x))^2`.
    pub fn omega_sq(&self) -> f64 {
        let w = 24.0 / (0.99729 * self.tau_x);
        w * w
    }
}

/// Sleep homeostasis, inertia and switching thresholds of the three-process model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeProcessParams {
    pub tau_d: f64,
    pub tau_r: f64,
    #[serde(rename = "tau_W")]
    pub tau_w: f64,
    #[serde(rename = "A_c")]
    pub a_c: f64,
    #[serde(rename = "H_m")]
    pub h_m: f64,
    #[serde(rename = "L_m")]
    pub l_m: f64,
}

impl Default for ThreeProcessParams {
    fn default() -> Self {
        Self {
            tau_d: 4.2,
            tau_r: 18.2,
            tau_w: 0.662,
            a_c: 0.1333,
            h_m: 0.67,
            l_m: 0.17,
        }
    }
}

impl ThreeProcessParams {
    pub fn validate(&self) -> Result<()> {
        check_positive(&[
            ("tau_d", self.tau_d),
            ("tau_r", self.tau_r),
            ("tau_W", self.tau_w),
            ("A_c", self.a_c),
        ])?;
        if !(0.0 < self.l_m && self.l_m < self.h_m && self.h_m < 1.0) {
            return Err(Error::Config(format!(
                "thresholds must satisfy 0 < L_m < H_m < 1, got L_m = {}, H_m = {}",
                self.l_m, self.h_m
            )));
        }
        Ok(())
    }
}

/// Mutually inhibitory MA / VLPO populations and the somnogen homeostat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronalParams {
    /// h.
    pub tau_m: f64,
    /// h.
    pub tau_v: f64,
    /// mV s.
    pub v_mv: f64,
    pub v_vm: f64,
    /// mV.
    pub v_vc: f64,
    /// mV / nM.
    pub v_vh: f64,
    #[serde(rename = "A_m")]
    pub a_m: f64,
    #[serde(rename = "A_v")]
    pub a_v: f64,
    /// 1/s.
    #[serde(rename = "Q_max")]
    pub q_max: f64,
    pub theta: f64,
    pub sigma: f64,
    pub c_x: f64,
    pub c_xc: f64,
    /// h.
    pub chi: f64,
    /// nM s.
    #[serde(rename = "mu_H")]
    pub mu_h: f64,
    /// Awake when `V_m` exceeds this value (mV).
    #[serde(rename = "V_m_th")]
    pub v_m_th: f64,
    /// Wake-effort clamp value of `V_m` during forced wakefulness (mV).
    #[serde(rename = "V_m_forced")]
    pub v_m_forced: f64,
}

impl Default for NeuronalParams {
    fn default() -> Self {
        Self {
            tau_m: 1.0 / 360.0,
            tau_v: 1.0 / 360.0,
            v_mv: 1.8,
            v_vm: 2.1,
            v_vc: 3.37,
            v_vh: 1.01,
            a_m: 1.3,
            a_v: -10.2,
            q_max: 100.0,
            theta: 10.0,
            sigma: 3.0,
            c_x: 0.8,
            c_xc: -0.16,
            chi: 45.0,
            mu_h: 4.2,
            v_m_th: -3.785,
            v_m_forced: 1.04,
        }
    }
}

impl NeuronalParams {
    pub fn validate(&self) -> Result<()> {
        check_positive(&[
            ("tau_m", self.tau_m),
            ("tau_v", self.tau_v),
            ("v_mv", self.v_mv),
            ("v_vm", self.v_vm),
            ("v_vc", self.v_vc),
            ("v_vh", self.v_vh),
            ("Q_max", self.q_max),
            ("sigma", self.sigma),
            ("chi", self.chi),
            ("mu_H", self.mu_h),
        ])
    }
}

/// Everything needed to evaluate any of the three models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub circadian: CircadianParams,
    pub three_process: ThreeProcessParams,
    pub neuronal: NeuronalParams,
    pub branches: BranchCoefficients,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.circadian.validate()?;
        self.three_process.validate()?;
        self.neuronal.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: ModelParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_positive(values: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in values {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelParams::default().validate().unwrap();
        assert_eq!(CircadianParams::default().tau_x, 24.2);
        assert_eq!(CircadianParams::default().i0, 9500.0);
        assert_eq!(NeuronalParams::default().v_m_th, -3.785);
    }

    #[test]
    fn json_uses_table_names_and_round_trips() {
        let p = ModelParams::default();
        let text = p.to_json().unwrap();
        assert!(text.contains("\"I_0\""));
        assert!(text.contains("\"tau_W\""));
        assert!(text.contains("\"mu_H\""));
        assert_eq!(ModelParams::from_json(&text).unwrap(), p);
    }

    #[test]
    fn partial_json_overrides_defaults() {
        let p = ModelParams::from_json(r#"{"circadian": {"mu": 0.13, "k_c": 0.4, "q": 0.5,
            "tau_x": 24.0, "k": 0.55, "G": 33.75, "alpha_0": 0.05, "p": 0.5, "I_0": 9500,
            "gamma": 0.0075}}"#)
        .unwrap();
        assert_eq!(p.circadian.tau_x, 24.0);
        assert_eq!(p.neuronal, NeuronalParams::default());
    }

    #[test]
    fn rejects_bad_thresholds() {
        let tp = ThreeProcessParams {
            l_m: 0.8,
            ..Default::default()
        };
        assert!(tp.validate().is_err());
        let c = CircadianParams {
            q: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
