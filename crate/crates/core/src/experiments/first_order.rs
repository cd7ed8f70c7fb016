//! First-order stationarity: hitting times of `‖∇f‖ ≤ ε` and the decay of the
//! best gradient norm seen so far.

use serde::{Deserialize, Serialize};

use super::{inverse_fit, json, par_trials, to_csv, CampaignReport, ExperimentError, Verdict};
use crate::dynamics::{gaussian_init, run_method, DecaySchedule, Method, RunOptions, SgldVrConfig};
use crate::linalg::{mean_and_se, median};
use crate::objectives::ObjectiveSpec;
use crate::theory::{grad_norm_bound, theory_report, GradBoundInputs, ReportInputs};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FirstOrderSpec {
    pub objective: ObjectiveSpec,
    pub config: SgldVrConfig,
    pub method: Method,
    pub eps: f64,
    pub n_trials: usize,
    /// Standard deviation of the Gaussian initialization.
    pub init_scale: f64,
    /// Horizons at which the best `‖∇f‖²` so far is read off.
    pub checkpoints: Vec<u64>,
    pub min_r_squared: f64,
}

impl Default for FirstOrderSpec {
    fn default() -> Self {
        FirstOrderSpec {
            objective: ObjectiveSpec::Quadratic { d: 10, scale: 1.0 },
            config: SgldVrConfig {
                batch_size: 1,
                epoch_length: 10,
                horizon: 2000,
                schedule: DecaySchedule::new(0.25, 1e-3, 1.0, 10).expect("valid").into(),
                sampling: Default::default(),
            },
            method: Method::SgldVr,
            eps: 0.1,
            n_trials: 20,
            init_scale: 0.1,
            checkpoints: vec![500, 1000, 2000],
            min_r_squared: 0.9,
        }
    }
}

#[derive(Serialize)]
struct Row {
    trial: usize,
    seed: u64,
    checkpoint: u64,
    min_grad_norm_sq: f64,
    /// Empty when censored at the horizon.
    tau_fsp: Option<u64>,
}

#[derive(Serialize)]
struct CheckpointSummary {
    horizon: u64,
    mean_min_grad_norm_sq: f64,
    std_error: f64,
    fit: f64,
    survival: f64,
    median_tau_fsp: Option<f64>,
    /// `√(predicted E‖∇f‖²)/ε`, or null when the hyperparameters are infeasible.
    predicted_ratio: Option<f64>,
}

pub fn run(spec: &FirstOrderSpec, master_seed: u64) -> Result<CampaignReport, ExperimentError> {
    let problem = spec.objective.build()?;
    let obj = problem.objective.as_ref();
    spec.config.validate(obj.num_components())?;
    if !(spec.eps > 0.0) {
        return Err(ExperimentError::Refused(format!("eps must be positive, got {}", spec.eps)));
    }
    if spec.checkpoints.is_empty() || spec.checkpoints.iter().any(|&c| c == 0 || c > spec.config.horizon) {
        return Err(ExperimentError::Refused(format!(
            "checkpoints must lie in [1, horizon={}]",
            spec.config.horizon
        )));
    }
    let d = obj.dim();
    let opts = RunOptions {
        stride: 1,
        record_iterates: false,
        objective_id: spec.objective.id(),
    };
    let trials = par_trials(spec.n_trials, master_seed, |_, seed| {
        let x0 = gaussian_init(d, spec.init_scale, seed);
        let trace = run_method(obj, &spec.config, spec.method, &x0, seed, &opts)?;
        let mut best = f64::INFINITY;
        let mut tau = None;
        let mut best_at = Vec::with_capacity(spec.checkpoints.len());
        for r in &trace.records {
            best = best.min(r.grad_norm * r.grad_norm);
            if tau.is_none() && r.grad_norm <= spec.eps {
                tau = Some(r.t);
            }
            for &c in &spec.checkpoints {
                if r.t == c {
                    best_at.push((c, best));
                }
            }
        }
        Ok::<_, ExperimentError>((seed, x0, tau, best_at))
    });
    let trials = trials.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (i, (seed, _, tau, best_at)) in trials.iter().enumerate() {
        for &(c, b) in best_at {
            rows.push(Row {
                trial: i,
                seed: *seed,
                checkpoint: c,
                min_grad_norm_sq: b,
                tau_fsp: tau.filter(|&t| t <= c),
            });
        }
    }

    let x0 = &trials[0].1;
    let constants = theory_report(&spec.objective.id(), &problem, &spec.config, x0, &ReportInputs {
        eps: spec.eps,
        ..Default::default()
    })?;
    let f_x0 = obj.full_value(x0);
    let nu = spec.config.schedule.decay().map_or(0.0, |s| s.nu);

    let xs: Vec<f64> = spec.checkpoints.iter().map(|&c| c as f64).collect();
    let means: Vec<(f64, f64)> = spec
        .checkpoints
        .iter()
        .enumerate()
        .map(|(k, _)| mean_and_se(&trials.iter().map(|t| t.3[k].1).collect::<Vec<_>>()))
        .collect();
    let ys: Vec<f64> = means.iter().map(|m| m.0).collect();
    let (c_fit, r2) = inverse_fit(&xs, &ys);

    let summary_rows: Vec<CheckpointSummary> = spec
        .checkpoints
        .iter()
        .zip(&means)
        .map(|(&c, &(m, se))| {
            let taus: Vec<f64> = trials
                .iter()
                .map(|t| t.2.filter(|&h| h <= c).map_or(f64::INFINITY, |h| h as f64))
                .collect();
            let survival = taus.iter().filter(|t| t.is_infinite()).count() as f64 / taus.len() as f64;
            let med = median(&taus).filter(|m| m.is_finite());
            let predicted = constants.feasibility.is_feasible().then(|| {
                grad_norm_bound(&GradBoundInputs {
                    delta_f: f_x0 - problem.metadata.known_min_value.unwrap_or(0.0),
                    horizon: c as f64,
                    gamma_min: constants.lyapunov.gamma_min,
                    lipschitz: problem.metadata.grad_lipschitz,
                    c0: constants.lyapunov.c[0],
                    dim: d,
                    nu,
                    c_zero: constants.inputs.c_zero,
                })
                .ok()
                .map(|b| b.sqrt() / spec.eps)
            });
            CheckpointSummary {
                horizon: c,
                mean_min_grad_norm_sq: m,
                std_error: se,
                fit: c_fit / c as f64,
                survival,
                median_tau_fsp: med,
                predicted_ratio: predicted.flatten(),
            }
        })
        .collect();

    let worst_ratio = ys.windows(2).map(|w| w[1] / w[0]).fold(f64::NEG_INFINITY, f64::max);
    let n = spec.n_trials;
    let mut verdicts = vec![
        Verdict::le("max ratio of consecutive mean best grad-norm^2", worst_ratio, 1.0, n),
        Verdict::ge("R^2 of C/T fit", r2, spec.min_r_squared, n),
    ];
    if !constants.feasibility.is_feasible() {
        verdicts[1] = verdicts[1].clone().with_note(format!(
            "hyperparameters are outside the sufficient condition (lhs = {:.4}); the predicted curve is not available",
            constants.feasibility.lhs()
        ));
    }

    Ok(CampaignReport {
        name: "first_order".into(),
        master_seed,
        spec: json(spec),
        verdicts,
        summary: serde_json::json!({
            "fit_constant": c_fit,
            "r_squared": r2,
            "checkpoints": summary_rows,
        }),
        constants: json(&constants),
        trials_csv: to_csv(&rows)?,
        extra_csv: Vec::new(),
    })
}
