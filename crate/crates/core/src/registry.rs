//! Name-keyed registries of models and objectives.
//!
//! Front ends select both by string at run time; new strategies can be
//! registered without touching the callers.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::light::LightSignal;
use crate::optimizer::{Cumulative, Objective, ShiftWork};
use crate::params::ModelParams;
use crate::simulator::{
    find_periodic_solution, integrate_full_pr, integrate_hybrid, integrate_three_process,
    nominal_state, IntegratorConfig, ModelKind, ModelState, PeriodicOptions, PeriodicSolution,
    SimulationSpan, Trajectory,
};

/// A sleep/wake model that can be simulated and entrained.
pub trait SleepModel: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn kind(&self) -> ModelKind;

    fn default_integrator(&self) -> IntegratorConfig {
        IntegratorConfig::for_model(self.kind())
    }

    fn nominal_state(&self, params: &ModelParams) -> Result<ModelState> {
        nominal_state(self.kind(), params)
    }

    fn simulate(
        &self,
        params: &ModelParams,
        initial: &ModelState,
        asleep: bool,
        span: &SimulationSpan<'_>,
    ) -> Result<Trajectory>;

    fn entrain(
        &self,
        params: &ModelParams,
        light: &LightSignal,
        cfg: &IntegratorConfig,
        opts: &PeriodicOptions,
    ) -> Result<PeriodicSolution> {
        find_periodic_solution(self.kind(), params, light, cfg, opts)
    }
}

fn wrong_state(model: &str, got: &ModelState) -> Error {
    Error::Config(format!("model {model} cannot start from a {} state", got.kind()))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ThreeProcessModel;

impl SleepModel for ThreeProcessModel {
    fn name(&self) -> &'static str {
        ModelKind::ThreeProcess.name()
    }

    fn kind(&self) -> ModelKind {
        ModelKind::ThreeProcess
    }

    fn simulate(
        &self,
        params: &ModelParams,
        initial: &ModelState,
        asleep: bool,
        span: &SimulationSpan<'_>,
    ) -> Result<Trajectory> {
        match initial {
            ModelState::ThreeProcess(s) => integrate_three_process(params, s, asleep, span),
            other => Err(wrong_state(self.name(), other)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FullPrModel;

impl SleepModel for FullPrModel {
    fn name(&self) -> &'static str {
        ModelKind::FullPr.name()
    }

    fn kind(&self) -> ModelKind {
        ModelKind::FullPr
    }

    fn simulate(
        &self,
        params: &ModelParams,
        initial: &ModelState,
        asleep: bool,
        span: &SimulationSpan<'_>,
    ) -> Result<Trajectory> {
        match initial {
            ModelState::FullPr(s) => integrate_full_pr(params, s, asleep, span),
            other => Err(wrong_state(self.name(), other)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HybridPrModel;

impl SleepModel for HybridPrModel {
    fn name(&self) -> &'static str {
        ModelKind::Hybrid.name()
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Hybrid
    }

    fn simulate(
        &self,
        params: &ModelParams,
        initial: &ModelState,
        asleep: bool,
        span: &SimulationSpan<'_>,
    ) -> Result<Trajectory> {
        match initial {
            ModelState::Hybrid(s) => integrate_hybrid(params, s, asleep, span),
            other => Err(wrong_state(self.name(), other)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    models: BTreeMap<&'static str, Arc<dyn SleepModel>>,
    objectives: BTreeMap<&'static str, Arc<dyn Objective>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `tp`, `pr-full`, `pr-hybrid`; `shift_work`, `cumulative`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register_model(Arc::new(ThreeProcessModel));
        r.register_model(Arc::new(FullPrModel));
        r.register_model(Arc::new(HybridPrModel));
        r.register_objective(Arc::new(ShiftWork));
        r.register_objective(Arc::new(Cumulative));
        r
    }

    /// Adds or replaces a model under its own name.
    pub fn register_model(&mut self, model: Arc<dyn SleepModel>) {
        self.models.insert(model.name(), model);
    }

    pub fn register_objective(&mut self, objective: Arc<dyn Objective>) {
        self.objectives.insert(objective.name(), objective);
    }

    pub fn model(&self, name: &str) -> Result<Arc<dyn SleepModel>> {
        self.models.get(name).cloned().ok_or_else(|| {
            Error::Config(format!(
                "unknown model {name:?}; expected one of {:?}",
                self.model_names()
            ))
        })
    }

    pub fn objective(&self, name: &str) -> Result<Arc<dyn Objective>> {
        self.objectives.get(name).cloned().ok_or_else(|| {
            Error::Config(format!(
                "unknown objective {name:?}; expected one of {:?}",
                self.objective_names()
            ))
        })
    }

    pub fn model_names(&self) -> Vec<&'static str> {
        self.models.keys().copied().collect()
    }

    pub fn objective_names(&self) -> Vec<&'static str> {
        self.objectives.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names() {
        let r = Registry::builtin();
        assert_eq!(r.model_names(), vec!["pr-full", "pr-hybrid", "tp"]);
        assert_eq!(r.objective_names(), vec!["cumulative", "shift_work"]);
        for name in r.model_names() {
            let m = r.model(name).unwrap();
            assert_eq!(m.name(), name);
            assert_eq!(m.kind().name(), name);
        }
        assert!(r.model("two-process").is_err());
        assert!(r.objective("max").is_err());
    }

    #[test]
    fn models_reject_foreign_states() {
        let r = Registry::builtin();
        let p = ModelParams::default();
        let light = LightSignal::constant(0.0).unwrap();
        let schedule = crate::simulator::SleepScheduleSpec::spontaneous();
        let cfg = IntegratorConfig::rk4(0.01);
        let span = SimulationSpan {
            t0: 0.0,
            t1: 1.0,
            light: &light,
            schedule: &schedule,
            cfg: &cfg,
        };
        let tp_state = r.model("tp").unwrap().nominal_state(&p).unwrap();
        assert!(r.model("pr-hybrid").unwrap().simulate(&p, &tp_state, false, &span).is_err());
        assert!(r.model("tp").unwrap().simulate(&p, &tp_state, false, &span).is_ok());
    }
}
