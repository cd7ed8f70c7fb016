//! Monte Carlo second moments of the SVRG and plain minibatch estimators at
//! probe points along a reference trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{json, par_trials, to_csv, CampaignReport, ExperimentError, Verdict};
use crate::dynamics::{
    draw_batch, gaussian_init, minibatch_gradient_into, step, svrg_estimator_into, DecaySchedule, Method,
    SamplingMode, SgldVrConfig, SgldVrState,
};
use crate::linalg::{dist_sq, median, norm_sq};
use crate::objectives::{FiniteSumObjective, ObjectiveSpec};
use crate::rng::trial_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarianceSpec {
    pub objective: ObjectiveSpec,
    pub config: SgldVrConfig,
    pub init_scale: f64,
    pub n_probes: usize,
    /// Probe `k` is taken just before step `offset + k·stride`.
    pub probe_stride: u64,
    pub probe_offset: u64,
    pub mc_batches: usize,
    /// Standard errors of slack on every assertion.
    pub se_slack: f64,
}

impl Default for VarianceSpec {
    fn default() -> Self {
        VarianceSpec {
            objective: ObjectiveSpec::Quadratic { d: 10, scale: 1.0 },
            config: SgldVrConfig {
                batch_size: 1,
                epoch_length: 10,
                horizon: 1000,
                schedule: DecaySchedule::new(0.25, 1e-3, 1.0, 10).expect("valid").into(),
                sampling: SamplingMode::WithoutReplacement,
            },
            init_scale: 1.0,
            n_probes: 100,
            probe_stride: 10,
            probe_offset: 5,
            mc_batches: 100_000,
            se_slack: 4.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ProbeStats {
    pub probe: usize,
    pub t: u64,
    pub grad_norm_sq: f64,
    pub snapshot_dist_sq: f64,
    pub svrg_second_moment: f64,
    pub svrg_second_moment_se: f64,
    pub sgd_second_moment: f64,
    pub sgd_second_moment_se: f64,
    /// `2‖∇f‖² + 2(L²/B_e)‖x − x̃‖²`.
    pub bound: f64,
    /// Largest `|mean_j − ∂_j f|/SE_j` over coordinates of the SVRG estimator.
    pub max_bias_z: f64,
    pub variance_ratio: f64,
}

struct Moments {
    mean: Vec<f64>,
    coord_se: Vec<f64>,
    second: f64,
    second_se: f64,
}

fn moments(samples: usize, sum: &[f64], sum_sq: &[f64], s2: f64, s4: f64) -> Moments {
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let coord_se = sum_sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
        .collect();
    let second = s2 / n;
    let var = (s4 / n - second * second).max(0.0) * n / (n - 1.0);
    Moments {
        mean,
        coord_se,
        second,
        second_se: (var / n).sqrt(),
    }
}

fn estimate<F: FnMut(&mut ChaCha8Rng, &mut Vec<usize>, &mut [f64])>(
    d: usize,
    samples: usize,
    seed: u64,
    mut draw: F,
) -> Moments {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = Vec::new();
    let mut est = vec![0.0; d];
    let (mut sum, mut sum_sq) = (vec![0.0; d], vec![0.0; d]);
    let (mut s2, mut s4) = (0.0, 0.0);
    for _ in 0..samples {
        draw(&mut rng, &mut batch, &mut est);
        for j in 0..d {
            sum[j] += est[j];
            sum_sq[j] += est[j] * est[j];
        }
        let q = norm_sq(&est);
        s2 += q;
        s4 += q * q;
    }
    moments(samples, &sum, &sum_sq, s2, s4)
}

/// Second moments of both estimators at one `(x, x̃)` pair.
pub fn probe_point(
    obj: &dyn FiniteSumObjective,
    config: &SgldVrConfig,
    lipschitz: f64,
    x: &[f64],
    snapshot: &[f64],
    mc_batches: usize,
    seed: u64,
) -> ProbeStats {
    let d = obj.dim();
    let n = obj.num_components();
    let (b, mode) = (config.batch_size, config.sampling);
    let snapshot_grad = obj.full_gradient(snapshot);
    let grad = obj.full_gradient(x);
    let svrg = estimate(d, mc_batches, seed, |rng, batch, est| {
        draw_batch(rng, n, b, mode, batch);
        svrg_estimator_into(obj, x, snapshot, &snapshot_grad, batch, est).expect("nonempty batch");
    });
    let sgd = estimate(d, mc_batches, seed ^ 1, |rng, batch, est| {
        draw_batch(rng, n, b, mode, batch);
        minibatch_gradient_into(obj, x, batch, est).expect("nonempty batch");
    });
    let g2 = norm_sq(&grad);
    let dist = dist_sq(x, snapshot);
    let max_bias_z = svrg
        .mean
        .iter()
        .zip(&svrg.coord_se)
        .zip(&grad)
        .map(|((m, se), g)| {
            let diff = (m - g).abs();
            if diff <= 1e-12 * g.abs().max(1.0) {
                0.0
            } else if *se > 0.0 {
                diff / se
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    let sgd_var = sgd.second - g2;
    ProbeStats {
        probe: 0,
        t: 0,
        grad_norm_sq: g2,
        snapshot_dist_sq: dist,
        svrg_second_moment: svrg.second,
        svrg_second_moment_se: svrg.second_se,
        sgd_second_moment: sgd.second,
        sgd_second_moment_se: sgd.second_se,
        bound: 2.0 * g2 + 2.0 * lipschitz * lipschitz / config.epoch_length as f64 * dist,
        max_bias_z,
        variance_ratio: if sgd_var > 0.0 { (svrg.second - g2) / sgd_var } else { f64::NAN },
    }
}

pub fn run(spec: &VarianceSpec, master_seed: u64) -> Result<CampaignReport, ExperimentError> {
    let problem = spec.objective.build()?;
    let obj = problem.objective.as_ref();
    spec.config.validate(obj.num_components())?;
    if spec.mc_batches < 2 || spec.n_probes == 0 || spec.probe_stride == 0 {
        return Err(ExperimentError::Refused(
            "need mc_batches >= 2, n_probes >= 1 and probe_stride >= 1".into(),
        ));
    }
    let last = spec.probe_offset + (spec.n_probes as u64 - 1) * spec.probe_stride;
    if last >= spec.config.horizon {
        return Err(ExperimentError::Refused(format!(
            "last probe at t={last} lies beyond the horizon {}",
            spec.config.horizon
        )));
    }
    let l = problem.metadata.grad_lipschitz;
    let be = spec.config.epoch_length as u64;

    // reference trajectory; the snapshot seen by step t is refreshed at its start
    let ref_seed = trial_seed(master_seed, u64::MAX);
    let mut state = SgldVrState::new(gaussian_init(obj.dim(), spec.init_scale, ref_seed), ref_seed);
    let mut pairs = Vec::with_capacity(spec.n_probes);
    for k in 0..spec.n_probes as u64 {
        let t = spec.probe_offset + k * spec.probe_stride;
        while state.t < t {
            step(obj, &spec.config, Method::SgldVr, &mut state);
        }
        if t % be == 0 {
            state.refresh_snapshot(obj);
        }
        pairs.push((t, state.x.clone(), state.snapshot.clone()));
    }

    let stats = par_trials(spec.n_probes, master_seed, |k, seed| {
        let (t, x, snap) = &pairs[k];
        let mut s = probe_point(obj, &spec.config, l, x, snap, spec.mc_batches, seed);
        s.probe = k;
        s.t = *t;
        s
    });

    let slack = spec.se_slack;
    let worst_bound = stats
        .iter()
        .map(|s| s.svrg_second_moment - slack * s.svrg_second_moment_se - s.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_bias = stats.iter().map(|s| s.max_bias_z).fold(0.0, f64::max);
    let ratios: Vec<f64> = stats.iter().map(|s| s.variance_ratio).filter(|r| r.is_finite()).collect();
    let n = spec.n_probes;
    let verdicts = vec![
        Verdict::le(
            "max over probes of E|svrg|^2 - SE slack - bound",
            worst_bound,
            0.0,
            n,
        ),
        Verdict::le("max |estimator mean - gradient| in standard errors", worst_bias, slack, n),
    ];

    Ok(CampaignReport {
        name: "variance".into(),
        master_seed,
        spec: json(spec),
        verdicts,
        summary: serde_json::json!({
            "median_variance_ratio": median(&ratios),
            "mc_batches": spec.mc_batches,
        }),
        constants: serde_json::json!({
            "lipschitz": l,
            "epoch_length": spec.config.epoch_length,
            "metadata": problem.metadata,
        }),
        trials_csv: to_csv(&stats)?,
        extra_csv: Vec::new(),
    })
}
