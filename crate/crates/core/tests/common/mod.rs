#![allow(dead_code)]

use std::sync::OnceLock;

use alertopt::optimizer::{
    initial_guess, reference_solution, start_state, DecisionVariables, ReferenceStart, Scenario,
};
use alertopt::simulator::PeriodicSolution;
use alertopt::ModelParams;

pub fn params() -> &'static ModelParams {
    static P: OnceLock<ModelParams> = OnceLock::new();
    P.get_or_init(ModelParams::default)
}

pub fn reference() -> &'static PeriodicSolution {
    static R: OnceLock<PeriodicSolution> = OnceLock::new();
    R.get_or_init(|| reference_solution(params(), 0.01).expect("reference orbit"))
}

/// Entrained start and initial guess for a bundled scenario.
pub fn setup(name: &str) -> (Scenario, ReferenceStart, DecisionVariables) {
    let sc = Scenario::bundled(name).unwrap();
    let start = start_state(params(), reference(), sc.start_h(), sc.optimizer.step_h).unwrap();
    let init = initial_guess(params(), &sc, &start).unwrap();
    (sc, start, init)
}
