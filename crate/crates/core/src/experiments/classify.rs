//! SGD, SGLD and SGLD-VR on the synthetic binary classification task, from
//! shared initializations.

use serde::{Deserialize, Serialize};

use super::{json, par_trials, to_csv, CampaignReport, ExperimentError, Verdict};
use crate::dynamics::{step, DecaySchedule, Method, ScheduleSpec, SgldVrConfig, SgldVrState};
use crate::linalg::{all_finite, mean_and_se, median};
use crate::objectives::{BinaryClassifier, FiniteSumObjective, ObjectiveSpec, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifySpec {
    pub n_samples: usize,
    pub hidden: [usize; 2],
    pub data_seed: u64,
    /// Config shared by all methods; `schedule.eta0` is replaced by the grid
    /// choice unless `eta_grid` is empty.
    pub config: SgldVrConfig,
    /// Candidate `η₀`; the largest one whose first epoch is stable for every
    /// method and seed is used.
    pub eta_grid: Vec<f64>,
    pub n_seeds: usize,
    pub init_half_width: f64,
    pub target_train_error: f64,
    pub test_error_slack: f64,
}

impl Default for ClassifySpec {
    fn default() -> Self {
        ClassifySpec {
            n_samples: 1000,
            hidden: [8, 8],
            data_seed: 1,
            config: SgldVrConfig {
                batch_size: 100,
                epoch_length: 10,
                horizon: 1000,
                schedule: DecaySchedule::new(1000.0, 1e-2, 1.0, 1).expect("valid").into(),
                sampling: Default::default(),
            },
            eta_grid: vec![1.0, 10.0, 100.0, 1000.0],
            n_seeds: 10,
            init_half_width: 0.5,
            target_train_error: 0.2,
            test_error_slack: 0.05,
        }
    }
}

const METHODS: [Method; 3] = [Method::Sgd, Method::Sgld, Method::SgldVr];

#[derive(Serialize)]
struct Row {
    seed_index: usize,
    seed: u64,
    method: &'static str,
    eta0: f64,
    /// First evaluated iteration with train error at most the target; empty
    /// when never reached.
    iters_to_target: Option<u64>,
    initial_train_error: f64,
    final_train_error: f64,
    final_test_error: f64,
    final_loss: f64,
}

#[derive(Serialize)]
struct CurveRow {
    seed_index: usize,
    method: &'static str,
    t: u64,
    train_error: f64,
    test_error: f64,
    loss: f64,
}

struct Curve {
    points: Vec<(u64, f64, f64, f64)>,
    diverged: bool,
}

fn with_eta0(config: &SgldVrConfig, eta0: f64) -> SgldVrConfig {
    let mut c = config.clone();
    match &mut c.schedule {
        ScheduleSpec::Decay(s) => s.eta0 = eta0,
        ScheduleSpec::Constant(k) => k.eta = eta0,
    }
    c
}

/// Trains one method, evaluating errors and loss at `t = 0` and after every
/// epoch, for `steps` iterations.
fn train(net: &BinaryClassifier, config: &SgldVrConfig, method: Method, x0: &[f64], seed: u64, steps: u64) -> Curve {
    let mut state = SgldVrState::new(x0.to_vec(), seed);
    let eval = |x: &[f64], t: u64| {
        (
            t,
            net.misclassification_rate(x, Split::Train),
            net.misclassification_rate(x, Split::Test),
            net.full_value(x),
        )
    };
    let mut points = vec![eval(&state.x, 0)];
    let be = config.epoch_length as u64;
    while state.t < steps {
        step(net, config, method, &mut state);
        if !all_finite(&state.x) {
            return Curve { points, diverged: true };
        }
        if state.t % be == 0 || state.t == steps {
            let p = eval(&state.x, state.t);
            if !p.3.is_finite() {
                return Curve { points, diverged: true };
            }
            points.push(p);
        }
    }
    Curve { points, diverged: false }
}

pub fn run(spec: &ClassifySpec, master_seed: u64) -> Result<CampaignReport, ExperimentError> {
    let objective = ObjectiveSpec::BinaryClassifier {
        n_samples: spec.n_samples,
        hidden: spec.hidden,
        data_seed: spec.data_seed,
        lipschitz_pairs: None,
    };
    let problem = objective.build()?;
    let net = problem.classifier.clone().expect("classifier objective");
    spec.config.validate(net.num_components())?;
    if spec.n_seeds == 0 {
        return Err(ExperimentError::Refused("n_seeds must be positive".into()));
    }
    let inits: Vec<(u64, Vec<f64>)> = par_trials(spec.n_seeds, master_seed, |_, seed| {
        (seed, net.random_init(spec.init_half_width, seed))
    });

    // stability grid: first epoch finite and not above the starting loss
    let be = spec.config.epoch_length as u64;
    let mut grid_report = Vec::new();
    let mut chosen = None;
    for &eta0 in &spec.eta_grid {
        let config = with_eta0(&spec.config, eta0);
        config.schedule.validate()?;
        let stable = par_trials(spec.n_seeds * METHODS.len(), master_seed, |k, _| {
            let (seed, x0) = &inits[k / METHODS.len()];
            let c = train(&net, &config, METHODS[k % METHODS.len()], x0, *seed, be);
            !c.diverged && c.points.last().unwrap().3 <= c.points[0].3
        })
        .into_iter()
        .all(|s| s);
        grid_report.push(serde_json::json!({"eta0": eta0, "stable": stable}));
        if stable {
            chosen = Some(eta0);
        }
    }
    let eta0 = match (spec.eta_grid.is_empty(), chosen) {
        (true, _) => spec.config.schedule.eta0(),
        (false, Some(e)) => e,
        (false, None) => {
            return Err(ExperimentError::Refused(format!(
                "no stepsize in {:?} is stable over the first epoch",
                spec.eta_grid
            )))
        }
    };
    let config = with_eta0(&spec.config, eta0);

    let runs = par_trials(spec.n_seeds * METHODS.len(), master_seed, |k, _| {
        let (seed, x0) = &inits[k / METHODS.len()];
        train(&net, &config, METHODS[k % METHODS.len()], x0, *seed, config.horizon)
    });

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (k, c) in runs.iter().enumerate() {
        let (s, m) = (k / METHODS.len(), METHODS[k % METHODS.len()]);
        let last = c.points.last().unwrap();
        rows.push(Row {
            seed_index: s,
            seed: inits[s].0,
            method: m.name(),
            eta0,
            iters_to_target: c
                .points
                .iter()
                .find(|p| p.1 <= spec.target_train_error)
                .map(|p| p.0),
            initial_train_error: c.points[0].1,
            final_train_error: if c.diverged { f64::NAN } else { last.1 },
            final_test_error: if c.diverged { f64::NAN } else { last.2 },
            final_loss: if c.diverged { f64::NAN } else { last.3 },
        });
        for p in &c.points {
            curves.push(CurveRow {
                seed_index: s,
                method: m.name(),
                t: p.0,
                train_error: p.1,
                test_error: p.2,
                loss: p.3,
            });
        }
    }

    let per_method = |m: Method| rows.iter().filter(move |r| r.method == m.name());
    let median_iters = |m: Method| {
        let v: Vec<f64> = per_method(m)
            .map(|r| r.iters_to_target.map_or(f64::INFINITY, |t| t as f64))
            .collect();
        median(&v).unwrap()
    };
    let mean_test = |m: Method| mean_and_se(&per_method(m).map(|r| r.final_test_error).collect::<Vec<_>>());
    let method_summary: Vec<serde_json::Value> = METHODS
        .iter()
        .map(|&m| {
            let (t, se) = mean_test(m);
            let it = median_iters(m);
            serde_json::json!({
                "method": m.name(),
                "median_iters_to_target": it.is_finite().then_some(it),
                "mean_final_test_error": t,
                "std_error": se,
            })
        })
        .collect();

    let n = spec.n_seeds;
    let (vr_iters, sgld_iters) = (median_iters(Method::SgldVr), median_iters(Method::Sgld));
    let mut v_iters = Verdict::le(
        "median iterations to target train error: SGLD-VR minus SGLD",
        if vr_iters == sgld_iters { 0.0 } else { vr_iters - sgld_iters },
        0.0,
        n,
    );
    if !vr_iters.is_finite() {
        v_iters = v_iters.with_note("SGLD-VR median is censored at the horizon");
    }
    let verdicts = vec![
        v_iters,
        Verdict::le(
            "mean final test error: SGLD-VR minus SGD",
            mean_test(Method::SgldVr).0 - mean_test(Method::Sgd).0,
            spec.test_error_slack,
            n,
        ),
    ];

    Ok(CampaignReport {
        name: "classify".into(),
        master_seed,
        spec: json(spec),
        verdicts,
        summary: serde_json::json!({
            "eta0": eta0,
            "stability_grid": grid_report,
            "methods": method_summary,
        }),
        constants: serde_json::json!({
            "objective": objective.id(),
            "metadata": problem.metadata,
            "config": config,
        }),
        trials_csv: to_csv(&rows)?,
        extra_csv: vec![("curves".into(), to_csv(&curves)?)],
    })
}
