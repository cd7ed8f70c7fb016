//! Repeated visits of the level set `f ≤ 2δB`, observed at the stepsize-batch
//! partition points.

use serde::{Deserialize, Serialize};

use super::{json, ols_slope, par_trials, to_csv, CampaignReport, ExperimentError, Verdict};
use crate::dynamics::{step, DecaySchedule, Method, SgldVrConfig, SgldVrState};
use crate::linalg::{all_finite, mean_and_se};
use crate::objectives::ObjectiveSpec;
use crate::theory::{recurrence_constants, stepsize_batch_partition, RecurrenceInputs};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecurrenceSpec {
    pub objective: ObjectiveSpec,
    pub config: SgldVrConfig,
    pub x0: Vec<f64>,
    pub delta: f64,
    pub j_max: usize,
    pub n_trials: usize,
    /// Allowed factor between the empirical slope in `j` and the bound's slope.
    pub slope_slack: f64,
}

impl Default for RecurrenceSpec {
    fn default() -> Self {
        RecurrenceSpec {
            objective: ObjectiveSpec::Quadratic { d: 1, scale: 1.0 },
            config: SgldVrConfig {
                batch_size: 1,
                epoch_length: 100,
                horizon: 300_000,
                schedule: DecaySchedule::new(0.245, 1.0, 1.0, 1).expect("valid").into(),
                sampling: Default::default(),
            },
            x0: vec![1.0],
            delta: 0.784,
            j_max: 5,
            n_trials: 20,
            slope_slack: 1.5,
        }
    }
}

#[derive(Serialize)]
struct Row {
    trial: usize,
    seed: u64,
    j: usize,
    /// Partition slot of the `j`-th visit; empty when censored.
    tau: Option<usize>,
    /// Iteration index `n_τ` of that slot.
    iteration: Option<u64>,
    f: Option<f64>,
}

pub fn run(spec: &RecurrenceSpec, master_seed: u64) -> Result<CampaignReport, ExperimentError> {
    let problem = spec.objective.build()?;
    let obj = problem.objective.as_ref();
    spec.config.validate(obj.num_components())?;
    let reg = problem.metadata.regularization.ok_or_else(|| {
        ExperimentError::Refused("objective does not declare regularization constants".into())
    })?;
    if spec.x0.len() != obj.dim() {
        return Err(ExperimentError::Refused(format!(
            "x0 has dimension {}, objective has {}",
            spec.x0.len(),
            obj.dim()
        )));
    }
    if spec.j_max == 0 {
        return Err(ExperimentError::Refused("j_max must be >= 1".into()));
    }
    let f_x0 = obj.full_value(&spec.x0);
    let sch = &spec.config.schedule;
    let partition = stepsize_batch_partition(sch, spec.delta, spec.config.horizon)?;
    let n0 = partition.first().copied().unwrap_or(0);
    // f at n₀ is only known per trial; the bound uses the start value when n₀ = 0
    let constants = recurrence_constants(&reg, &spec.config, &RecurrenceInputs {
        lipschitz: problem.metadata.grad_lipschitz,
        dim: obj.dim(),
        delta: spec.delta,
        f_x0,
        f_xn0: f_x0,
    })?;
    if constants.alpha <= 0.0 {
        return Err(ExperimentError::Refused(format!(
            "delta too small: alpha = {:.6e} <= 0",
            constants.alpha
        )));
    }
    let level = constants.level;
    let first_slot = constants.first_slot() as usize;

    let trials = par_trials(spec.n_trials, master_seed, |_, seed| {
        let mut state = SgldVrState::new(spec.x0.clone(), seed);
        let mut visits: Vec<(usize, u64, f64)> = Vec::new();
        for (k, &n_k) in partition.iter().enumerate() {
            while state.t < n_k {
                step(obj, &spec.config, Method::SgldVr, &mut state);
            }
            if !all_finite(&state.x) {
                return Err(ExperimentError::Dynamics(crate::dynamics::DynamicsError::Diverged {
                    t: state.t,
                }));
            }
            let f = obj.full_value(&state.x);
            if k >= first_slot && f <= level {
                visits.push((k, n_k, f));
                if visits.len() == spec.j_max {
                    break;
                }
            }
        }
        Ok((seed, visits))
    });
    let trials = trials.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (i, (seed, visits)) in trials.iter().enumerate() {
        for j in 1..=spec.j_max {
            let v = visits.get(j - 1);
            rows.push(Row {
                trial: i,
                seed: *seed,
                j,
                tau: v.map(|v| v.0),
                iteration: v.map(|v| v.1),
                f: v.map(|v| v.2),
            });
        }
    }

    let n = spec.n_trials;
    let complete = trials.iter().filter(|t| t.1.len() >= spec.j_max).count();
    let mut verdicts = vec![Verdict::ge(
        "fraction of trials with j_max visits",
        complete as f64 / n as f64,
        1.0,
        n,
    )];
    let mut per_j = Vec::new();
    if complete == n {
        let mut means = Vec::new();
        for j in 1..=spec.j_max {
            let taus: Vec<f64> = trials.iter().map(|t| t.1[j - 1].0 as f64).collect();
            let (m, se) = mean_and_se(&taus);
            let bound = constants.expected_tau_bound(j as u64);
            per_j.push(serde_json::json!({"j": j, "mean_tau": m, "std_error": se, "bound": bound}));
            verdicts.push(Verdict::le(&format!("mean tau_{j} - 3 SE vs bound"), m - 3.0 * se, bound, n));
            means.push(m);
        }
        let worst_step = means.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        verdicts.push(Verdict::le("largest decrease of mean tau_j in j", worst_step, 0.0, n));
        if spec.j_max >= 2 {
            let js: Vec<f64> = (1..=spec.j_max).map(|j| j as f64).collect();
            let slope = ols_slope(&js, &means);
            verdicts.push(Verdict::le(
                "empirical slope of mean tau_j",
                slope,
                spec.slope_slack * constants.slope(),
                n,
            ));
        }
    }

    Ok(CampaignReport {
        name: "recurrence".into(),
        master_seed,
        spec: json(spec),
        verdicts,
        summary: serde_json::json!({
            "partition_len": partition.len(),
            "n0": n0,
            "first_slot": first_slot,
            "level": level,
            "per_j": per_j,
        }),
        constants: serde_json::json!({
            "recurrence": constants,
            "regularization": reg,
            "lipschitz": problem.metadata.grad_lipschitz,
            "partition": partition,
        }),
        trials_csv: to_csv(&rows)?,
        extra_csv: Vec::new(),
    })
}
