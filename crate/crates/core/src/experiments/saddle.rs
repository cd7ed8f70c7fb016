//! Escape from a strict saddle, started on its stable manifold.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{json, par_trials, to_csv, CampaignReport, ExperimentError, Verdict};
use crate::dynamics::{step, DecaySchedule, Method, Schedule, ScheduleSpec, SgldVrConfig, SgldVrState};
use crate::linalg::median;
use crate::objectives::ObjectiveSpec;
use crate::rng::StreamKey;
use crate::theory::{saddle_quantities, stepsize_batch_partition, SaddleInputs};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaddleSpec {
    pub objective: ObjectiveSpec,
    /// Config of the noisy arm; the comparison arm reruns it with `ρ₀ = 0`.
    pub config: SgldVrConfig,
    pub eps: f64,
    /// Batch-partition width used for the projection statistic.
    pub delta: f64,
    /// Standard deviation of the free coordinates at initialization; the
    /// unstable coordinate starts at exactly 0.
    pub init_scale: f64,
    pub n_trials: usize,
    pub min_escape_fraction: f64,
    pub min_projection_fraction: f64,
}

impl Default for SaddleSpec {
    fn default() -> Self {
        SaddleSpec {
            objective: ObjectiveSpec::SaddleQuadratic {
                d: 2,
                neg_eig: 1.0,
                pos_eig: 1.0,
            },
            config: SgldVrConfig {
                batch_size: 1,
                epoch_length: 10,
                horizon: 10_000,
                schedule: DecaySchedule::new(1.0, 0.01, 1.0, 1).expect("valid").into(),
                sampling: Default::default(),
            },
            eps: 0.1,
            delta: 0.5,
            init_scale: 0.1,
            n_trials: 50,
            min_escape_fraction: 0.9,
            min_projection_fraction: 0.5,
        }
    }
}

#[derive(Serialize)]
struct Row {
    arm: &'static str,
    trial: usize,
    seed: u64,
    /// First `t` with `f(x_t) ≤ f(saddle) − ζ`; empty when censored.
    escape_t: Option<u64>,
    /// Batch (partition slot) in which the escape happened.
    escape_batch: Option<usize>,
    /// `(Δ_i)₁²` over that batch.
    projection_sq: Option<f64>,
}

struct Outcome {
    escape_t: Option<u64>,
    escape_batch: Option<usize>,
    projection_sq: Option<f64>,
}

/// Index `i` of the half-open batch `[b_i, b_{i+1})` containing step `s`, where
/// `bounds = [0, n₀, n₁, …]`.
fn batch_of(bounds: &[u64], s: u64) -> usize {
    bounds.partition_point(|&b| b <= s) - 1
}

fn simulate(
    obj: &dyn crate::objectives::FiniteSumObjective,
    config: &SgldVrConfig,
    x0: Vec<f64>,
    seed: u64,
    level: f64,
    bounds: &[u64],
) -> Outcome {
    let mut state = SgldVrState::new(x0, seed);
    let mut escape: Option<(u64, usize)> = None;
    // accumulated √η_l ε_l along the unstable coordinate, per batch
    let mut acc = 0.0;
    let mut batch = 0usize;
    while state.t < config.horizon {
        let l = state.t;
        let eta = config.schedule.eta(l);
        step(obj, config, Method::SgldVr, &mut state);
        let b = batch_of(bounds, l);
        if b != batch {
            if escape.is_some() {
                break;
            }
            batch = b;
            acc = 0.0;
        }
        acc += eta.sqrt() * state.last_noise[0];
        if escape.is_none() && obj.full_value(&state.x) <= level {
            escape = Some((state.t, b));
        }
        // stop once the escape batch is complete
        if let Some((_, eb)) = escape {
            if bounds.get(eb + 1).is_none_or(|&end| state.t >= end) {
                break;
            }
        }
    }
    match escape {
        Some((t, b)) => Outcome {
            escape_t: Some(t),
            escape_batch: Some(b),
            projection_sq: Some(acc * acc),
        },
        None => Outcome {
            escape_t: None,
            escape_batch: None,
            projection_sq: None,
        },
    }
}

pub fn run(spec: &SaddleSpec, master_seed: u64) -> Result<CampaignReport, ExperimentError> {
    let problem = spec.objective.build()?;
    let obj = problem.objective.as_ref();
    spec.config.validate(obj.num_components())?;
    let q = problem
        .metadata
        .strict_saddle_q
        .ok_or_else(|| ExperimentError::Refused("objective does not declare a strict-saddle constant".into()))?;
    let saddle = problem
        .metadata
        .known_fsps
        .iter()
        .find(|p| p.min_hessian_eig < 0.0)
        .ok_or_else(|| ExperimentError::Refused("objective declares no saddle point".into()))?;
    let d = obj.dim();
    let quantities = saddle_quantities(&SaddleInputs {
        eps: spec.eps,
        lipschitz: problem.metadata.grad_lipschitz,
        q,
        dim: d,
        eta0: spec.config.schedule.eta0(),
        delta: spec.delta,
        batches: 0..10,
    })?;
    let f_saddle = obj.full_value(&saddle.point);
    let level = f_saddle - quantities.zeta;
    let partition = stepsize_batch_partition(&spec.config.schedule, spec.delta, spec.config.horizon)?;
    // batch 0 covers the steps before n₀
    let mut bounds = vec![0];
    bounds.extend(partition.iter().copied().filter(|&b| b > 0));

    let mut quiet = spec.config.clone();
    quiet.schedule = match quiet.schedule {
        ScheduleSpec::Decay(mut s) => {
            s.rho0 = 0.0;
            ScheduleSpec::Decay(s)
        }
        ScheduleSpec::Constant(mut c) => {
            c.rho = 0.0;
            ScheduleSpec::Constant(c)
        }
    };

    let noise = Normal::new(0.0, spec.init_scale)
        .map_err(|e| ExperimentError::Refused(format!("init_scale: {e}")))?;
    let start = |seed: u64| {
        let mut rng = StreamKey::new(seed).aux(1);
        let mut x = saddle.point.clone();
        for xj in x.iter_mut().skip(1) {
            *xj += noise.sample(&mut rng);
        }
        x
    };
    let arms = [("noisy", &spec.config), ("noise_free", &quiet)];
    let mut rows = Vec::new();
    let mut arm_summaries = Vec::new();
    let mut verdicts = Vec::new();
    let n = spec.n_trials;
    for (name, config) in arms {
        let outcomes = par_trials(n, master_seed, |_, seed| {
            (seed, simulate(obj, config, start(seed), seed, level, &bounds))
        });
        let escaped: Vec<&Outcome> = outcomes.iter().map(|o| &o.1).filter(|o| o.escape_t.is_some()).collect();
        let frac = escaped.len() as f64 / n as f64;
        let times: Vec<f64> = escaped.iter().map(|o| o.escape_t.unwrap() as f64).collect();
        let proj_frac = (!escaped.is_empty()).then(|| {
            escaped
                .iter()
                .filter(|o| o.projection_sq.unwrap() >= quantities.q_threshold)
                .count() as f64
                / escaped.len() as f64
        });
        match name {
            "noisy" => {
                verdicts.push(Verdict::ge("noisy arm escape fraction", frac, spec.min_escape_fraction, n));
                verdicts.push(Verdict::ge(
                    "fraction of escapes whose batch has (Delta_i)_1^2 >= Q",
                    proj_frac.unwrap_or(0.0),
                    spec.min_projection_fraction,
                    escaped.len(),
                ));
            }
            _ => verdicts.push(Verdict::le("noise-free arm escape fraction", frac, 0.0, n)),
        }
        arm_summaries.push(serde_json::json!({
            "arm": name,
            "rho0": config.schedule.rho0(),
            "escape_fraction": frac,
            "median_escape_t": median(&times),
            "projection_fraction": proj_frac,
        }));
        for (i, (seed, o)) in outcomes.iter().enumerate() {
            rows.push(Row {
                arm: name,
                trial: i,
                seed: *seed,
                escape_t: o.escape_t,
                escape_batch: o.escape_batch,
                projection_sq: o.projection_sq,
            });
        }
    }

    Ok(CampaignReport {
        name: "saddle".into(),
        master_seed,
        spec: json(spec),
        verdicts,
        summary: serde_json::json!({
            "f_saddle": f_saddle,
            "escape_level": level,
            "arms": arm_summaries,
            "success_probability_unit_constant": quantities.success_probability,
        }),
        constants: serde_json::json!({
            "saddle": quantities,
            "q": q,
            "lipschitz": problem.metadata.grad_lipschitz,
            "batch_bounds": bounds,
        }),
        trials_csv: to_csv(&rows)?,
        extra_csv: Vec::new(),
    })
}
