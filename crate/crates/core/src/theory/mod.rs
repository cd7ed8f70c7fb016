//! Closed-form calculators for the constants, sequences and bounds of the
//! convergence analysis, plus brute-force oracles where one exists.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod lyapunov;
mod reach;
mod recurrence;
mod saddle;
mod subset;

pub use lyapunov::{
    closed_form_c0, grad_norm_bound, validate_hyperparams, weight_sequences, Feasibility,
    GradBoundInputs, LyapunovSequences,
};
pub use reach::{
    brownian_p1, drift_bound_check, ergodicity_horizon, max_reflection_base, reachability_radius,
    DriftCheck, DriftNoise, DriftSetup, DriftWeights, HorizonInputs, ReachabilityBound,
    REFLECTION_CONSTANT,
};
pub use recurrence::{
    expected_tau_bound, first_index_below, recurrence_constants, stepsize_batch_partition,
    RecurrenceConstants, RecurrenceInputs,
};
pub use saddle::{
    constrained_probability, escape_time_nu1, escape_times_by_summation, saddle_quantities,
    saddle_thresholds, success_probability, SaddleInputs, SaddleQuantities,
};
pub use subset::{binomial, subset_variance, subset_variance_oracle, ORACLE_LIMIT};

use crate::dynamics::SgldVrConfig;
use crate::objectives::{ObjectiveMetadata, Problem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible hyperparameters: {0}")]
    InfeasibleHyperparameters(String),
    #[error("inconsistent constants: {0}")]
    InconsistentConstants(String),
    #[error("enumeration too large: {combinations} subsets exceed the limit {limit}")]
    SizeLimit { combinations: f64, limit: f64 },
    #[error("too few trials: {0} < 100")]
    TooFewTrials(usize),
    #[error("objective does not declare {0}")]
    MissingConstant(&'static str),
}

/// Knobs of [`theory_report`] that are not part of the objective or config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub beta_tilde: f64,
    pub delta: f64,
    pub eps: f64,
    pub c_zero: f64,
}

impl Default for ReportInputs {
    fn default() -> Self {
        ReportInputs {
            beta_tilde: 2.0,
            delta: 0.5,
            eps: 0.1,
            c_zero: 1.0,
        }
    }
}

/// Every derived constant for one objective and config, for archival.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub objective: String,
    pub metadata: ObjectiveMetadata,
    pub config: SgldVrConfig,
    pub inputs: ReportInputs,
    pub f_x0: f64,
    pub feasibility: Feasibility,
    pub lyapunov: LyapunovSequences,
    /// Predicted `E‖∇f‖²` over the full horizon; `None` when infeasible.
    pub grad_norm_bound: Option<f64>,
    pub recurrence: Option<Result<RecurrenceConstants, String>>,
    pub saddle: Option<Result<SaddleQuantities, String>>,
}

/// Evaluates every calculator that applies to `problem` under `config`, from
/// the initial point `x0`.
pub fn theory_report(
    objective_id: &str,
    problem: &Problem,
    config: &SgldVrConfig,
    x0: &[f64],
    inp: &ReportInputs,
) -> Result<TheoryConstants, TheoryError> {
    let meta = &problem.metadata;
    let l = meta.grad_lipschitz;
    let eta0 = config.schedule.eta0();
    let be = config.epoch_length;
    let d = problem.objective.dim();
    let f_x0 = problem.objective.full_value(x0);
    let feasibility = validate_hyperparams(eta0, inp.beta_tilde, l, be)?;
    let lyapunov = weight_sequences(&vec![eta0; be], &[inp.beta_tilde], l)?;
    let nu = config.schedule.decay().map_or(0.0, |s| s.nu);
    let grad_norm_bound = if feasibility.is_feasible() {
        let delta_f = f_x0 - meta.known_min_value.unwrap_or(0.0);
        grad_norm_bound(&GradBoundInputs {
            delta_f,
            horizon: config.horizon.max(1) as f64,
            gamma_min: lyapunov.gamma_min,
            lipschitz: l,
            c0: lyapunov.c[0],
            dim: d,
            nu,
            c_zero: inp.c_zero,
        })
        .ok()
    } else {
        None
    };
    let recurrence = meta.regularization.map(|reg| {
        recurrence_constants(
            &reg,
            config,
            &RecurrenceInputs {
                lipschitz: l,
                dim: d,
                delta: inp.delta,
                f_x0,
                f_xn0: f_x0,
            },
        )
        .map_err(|e| e.to_string())
    });
    let saddle = meta.strict_saddle_q.map(|q| {
        saddle_quantities(&SaddleInputs {
            eps: inp.eps,
            lipschitz: l,
            q,
            dim: d,
            eta0,
            delta: inp.delta,
            batches: 0..10,
        })
        .map_err(|e| e.to_string())
    });
    Ok(TheoryConstants {
        objective: objective_id.to_string(),
        metadata: meta.clone(),
        config: config.clone(),
        inputs: inp.clone(),
        f_x0,
        feasibility,
        lyapunov,
        grad_norm_bound,
        recurrence,
        saddle,
    })
}
