//! Circadian and sleep-homeostasis models with optimal light and sleep
//! scheduling.
//!
//! Three models share one light-driven pacemaker: the three-process model,
//! the full two-population neuronal model, and a non-stiff hybrid reduction
//! of the latter in which the fast potentials follow precomputed branch
//! functions. The hybrid model drives an adjoint gradient method that
//! schedules light exposure and sleep around shift work.

pub mod bifurcation;
pub mod error;
pub mod integrate;
pub mod light;
pub mod model;
pub mod optimizer;
pub mod params;
pub mod quadrature;
pub mod registry;
pub mod simulator;
pub mod validation;

pub use error::{Error, Result};
pub use light::LightSignal;
pub use params::ModelParams;
pub use registry::Registry;
