//! Stochastic gradient Langevin dynamics with SVRG variance reduction (SGLD-VR).
//!
//! The crate is split into layers:
//!
//! * [`objectives`]: finite-sum objectives `f(x) = (1/n) Σ f_i(x)`, a zoo of test
//!   functions with known constants, and a central-difference gradient oracle.
//! * [`dynamics`]: the coupled stepsize/noise schedule, the SVRG estimator and the
//!   SGD / SGLD / SGLD-VR steppers.
//! * [`theory`]: closed-form calculators for the constants, sequences and bounds
//!   that come with the convergence analysis.
//! * [`experiments`]: seeded Monte Carlo campaigns that confront each bound with
//!   simulation and emit verdicts.
//! * [`trace`]: run records, summaries and lossless CSV/JSON persistence.

pub mod dynamics;
pub mod experiments;
pub mod linalg;
pub mod objectives;
pub mod rng;
pub mod theory;
pub mod trace;

pub use dynamics::{
    DecaySchedule, Method, SamplingMode, Schedule, SgldVrConfig, SgldVrState,
};
pub use objectives::{FiniteSumObjective, ObjectiveMetadata, ObjectiveSpec};
pub use trace::RunTrace;

/// Provenance string stamped into every sidecar file.
pub fn provenance() -> String {
    format!("sgldvr {}", env!("CARGO_PKG_VERSION"))
}
