//! Stepsize/noise schedules, gradient estimators and the SGD / SGLD / SGLD-VR
//! steppers.
//!
//! One iteration of SGLD-VR at step `t` with stepsize `η_t` and noise scale `ρ_t`:
//!
//! ```text
//! if t % B_e == 0 { x̃ ← x_t;  w̃ ← ∇f(x̃) }
//! I_t ~ uniform batch of size B_b,  ε_t ~ N(0, I_d)
//! ∇̃_t = (1/B_b) Σ_{i∈I_t} (∇fᵢ(x_t) − ∇fᵢ(x̃) + w̃)
//! x_{t+1} = x_t − η_t ∇̃_t + ρ_t ε_t
//! ```
//!
//! The baselines replace `∇̃_t` by the plain minibatch mean; SGD additionally
//! drops the noise term.

use std::fmt;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{all_finite, norm};
use crate::objectives::FiniteSumObjective;
use crate::rng::StreamKey;
use crate::trace::{RunTrace, TraceMeta, TraceRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid batch: the index batch is empty")]
    InvalidBatch,
    #[error("dimension mismatch: objective has d={expected}, x0 has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("divergence at t={t}: non-finite iterate or objective value")]
    Diverged { t: u64 },
}

/// A stepsize/noise schedule `t ↦ (η_t, ρ_t)`.
pub trait Schedule: Send + Sync + fmt::Debug {
    fn eta(&self, t: u64) -> f64;
    fn rho(&self, t: u64) -> f64;

    fn eval(&self, t: u64) -> (f64, f64) {
        (self.eta(t), self.rho(t))
    }
}

fn default_offset() -> u64 {
    1
}

/// `η_t = η₀/(t + offset)^ν`, `ρ_t = ρ₀/(t + offset)^{ν/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySchedule {
    pub eta0: f64,
    pub rho0: f64,
    pub nu: f64,
    #[serde(default = "default_offset")]
    pub index_offset: u64,
}

impl DecaySchedule {
    pub fn new(eta0: f64, rho0: f64, nu: f64, index_offset: u64) -> Result<Self, DynamicsError> {
        let s = DecaySchedule {
            eta0,
            rho0,
            nu,
            index_offset,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(DynamicsError::InvalidSchedule(format!(
                "eta0 must be positive and finite, got {}",
                self.eta0
            )));
        }
        if !(self.rho0 >= 0.0 && self.rho0.is_finite()) {
            return Err(DynamicsError::InvalidSchedule(format!(
                "rho0 must be nonnegative, got {}",
                self.rho0
            )));
        }
        if !(self.nu >= 1.0 && self.nu.is_finite()) {
            return Err(DynamicsError::InvalidSchedule(format!(
                "decay exponent nu must be >= 1, got {}",
                self.nu
            )));
        }
        if self.index_offset == 0 {
            return Err(DynamicsError::InvalidSchedule(
                "index_offset must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Schedule for DecaySchedule {
    fn eta(&self, t: u64) -> f64 {
        self.eta0 / ((t + self.index_offset) as f64).powf(self.nu)
    }

    fn rho(&self, t: u64) -> f64 {
        if self.rho0 == 0.0 {
            return 0.0;
        }
        self.rho0 / ((t + self.index_offset) as f64).powf(0.5 * self.nu)
    }
}

/// Constant `(η, ρ)`; used for deterministic reference runs and unit fixtures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSchedule {
    pub eta: f64,
    pub rho: f64,
}

impl Schedule for ConstantSchedule {
    fn eta(&self, _t: u64) -> f64 {
        self.eta
    }

    fn rho(&self, _t: u64) -> f64 {
        self.rho
    }
}

/// Explicit stepsize list; `η_t` for `t` past the end repeats the last entry.
/// Noise is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ListSchedule(pub Vec<f64>);

impl Schedule for ListSchedule {
    fn eta(&self, t: u64) -> f64 {
        let i = (t as usize).min(self.0.len().saturating_sub(1));
        self.0.get(i).copied().unwrap_or(0.0)
    }

    fn rho(&self, _t: u64) -> f64 {
        0.0
    }
}

/// Serializable schedule selection for configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Decay(DecaySchedule),
    Constant(ConstantSchedule),
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        match self {
            ScheduleSpec::Decay(s) => s.validate(),
            ScheduleSpec::Constant(c) => {
                if c.eta > 0.0 && c.eta.is_finite() && c.rho >= 0.0 && c.rho.is_finite() {
                    Ok(())
                } else {
                    Err(DynamicsError::InvalidSchedule(format!(
                        "constant schedule needs eta > 0 and rho >= 0, got eta={} rho={}",
                        c.eta, c.rho
                    )))
                }
            }
        }
    }

    /// The `η₀` parameter (not `η` at `t = 0`, which also depends on the offset).
    pub fn eta0(&self) -> f64 {
        match self {
            ScheduleSpec::Decay(s) => s.eta0,
            ScheduleSpec::Constant(c) => c.eta,
        }
    }

    pub fn rho0(&self) -> f64 {
        match self {
            ScheduleSpec::Decay(s) => s.rho0,
            ScheduleSpec::Constant(c) => c.rho,
        }
    }

    /// The decay schedule, if this is one.
    pub fn decay(&self) -> Option<&DecaySchedule> {
        match self {
            ScheduleSpec::Decay(s) => Some(s),
            ScheduleSpec::Constant(_) => None,
        }
    }
}

impl Schedule for ScheduleSpec {
    fn eta(&self, t: u64) -> f64 {
        match self {
            ScheduleSpec::Decay(s) => s.eta(t),
            ScheduleSpec::Constant(c) => c.eta(t),
        }
    }

    fn rho(&self, t: u64) -> f64 {
        match self {
            ScheduleSpec::Decay(s) => s.rho(t),
            ScheduleSpec::Constant(c) => c.rho(t),
        }
    }
}

impl From<DecaySchedule> for ScheduleSpec {
    fn from(s: DecaySchedule) -> Self {
        ScheduleSpec::Decay(s)
    }
}

impl From<ConstantSchedule> for ScheduleSpec {
    fn from(s: ConstantSchedule) -> Self {
        ScheduleSpec::Constant(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    WithReplacement,
    WithoutReplacement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sgd,
    Sgld,
    SgldVr,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Sgld => "sgld",
            Method::SgldVr => "sgld_vr",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgd" => Ok(Method::Sgd),
            "sgld" => Ok(Method::Sgld),
            "sgld_vr" | "sgld-vr" => Ok(Method::SgldVr),
            other => Err(format!("unknown method {other:?} (expected sgd, sgld or sgld-vr)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgldVrConfig {
    pub batch_size: usize,
    pub epoch_length: usize,
    pub horizon: u64,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub sampling: SamplingMode,
}

impl SgldVrConfig {
    pub fn validate(&self, n: usize) -> Result<(), DynamicsError> {
        self.schedule.validate()?;
        if self.batch_size == 0 || self.batch_size > n {
            return Err(DynamicsError::InvalidConfig(format!(
                "batch_size must lie in [1, n={n}], got {}",
                self.batch_size
            )));
        }
        if self.epoch_length == 0 {
            return Err(DynamicsError::InvalidConfig("epoch_length must be >= 1".into()));
        }
        if self.horizon % self.epoch_length as u64 != 0 {
            return Err(DynamicsError::InvalidConfig(format!(
                "horizon {} is not a multiple of epoch_length {}",
                self.horizon, self.epoch_length
            )));
        }
        Ok(())
    }
}

/// Mutable state of one trajectory.
#[derive(Clone, Debug)]
pub struct SgldVrState {
    pub x: Vec<f64>,
    pub snapshot: Vec<f64>,
    pub snapshot_grad: Vec<f64>,
    pub t: u64,
    pub epoch: u64,
    /// `ε_t` drawn by the most recent step (zeros when no noise was added).
    pub last_noise: Vec<f64>,
    /// Index batch drawn by the most recent step.
    pub last_batch: Vec<usize>,
    key: StreamKey,
    estimate: Vec<f64>,
}

impl SgldVrState {
    pub fn new(x0: Vec<f64>, seed: u64) -> Self {
        let d = x0.len();
        SgldVrState {
            snapshot: x0.clone(),
            x: x0,
            snapshot_grad: vec![0.0; d],
            t: 0,
            epoch: 0,
            last_noise: vec![0.0; d],
            last_batch: Vec::new(),
            key: StreamKey::new(seed),
            estimate: vec![0.0; d],
        }
    }

    pub fn key(&self) -> &StreamKey {
        &self.key
    }

    /// The gradient estimate used by the most recent step.
    pub fn last_estimate(&self) -> &[f64] {
        &self.estimate
    }

    /// Sets `x̃ ← x_t` and `w̃ ← ∇f(x̃)`.
    pub fn refresh_snapshot(&mut self, obj: &dyn FiniteSumObjective) {
        self.snapshot.copy_from_slice(&self.x);
        obj.full_gradient_into(&self.snapshot, &mut self.snapshot_grad);
    }
}

/// Seeded Gaussian initialization `N(0, scale²·I_d)`, drawn from an auxiliary
/// stream of `seed` so it never overlaps the iteration streams.
pub fn gaussian_init(d: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = StreamKey::new(seed).aux(0);
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect()
}

/// Draws an index batch of size `b` from `0..n`.
pub fn draw_batch<R: Rng>(rng: &mut R, n: usize, b: usize, mode: SamplingMode, out: &mut Vec<usize>) {
    out.clear();
    match mode {
        SamplingMode::WithReplacement => out.extend((0..b).map(|_| rng.random_range(0..n))),
        SamplingMode::WithoutReplacement => out.extend(sample(rng, n, b)),
    }
}

/// `(1/B_b) Σ_{i∈batch} (∇fᵢ(x) − ∇fᵢ(x̃) + w̃)`, written into `out`.
pub fn svrg_estimator_into(
    obj: &dyn FiniteSumObjective,
    x: &[f64],
    snapshot: &[f64],
    snapshot_grad: &[f64],
    batch: &[usize],
    out: &mut [f64],
) -> Result<(), DynamicsError> {
    if batch.is_empty() {
        return Err(DynamicsError::InvalidBatch);
    }
    let w = 1.0 / batch.len() as f64;
    // both sides accumulate in the same order, so x = x̃ gives exactly w̃
    let mut at_x = vec![0.0; out.len()];
    let mut at_snapshot = vec![0.0; out.len()];
    for &i in batch {
        obj.add_component_gradient(i, x, w, &mut at_x);
        obj.add_component_gradient(i, snapshot, w, &mut at_snapshot);
    }
    for ((o, (a, b)), g) in out.iter_mut().zip(at_x.iter().zip(&at_snapshot)).zip(snapshot_grad) {
        *o = g + (a - b);
    }
    Ok(())
}

pub fn svrg_estimator(
    obj: &dyn FiniteSumObjective,
    state: &SgldVrState,
    batch: &[usize],
) -> Result<Vec<f64>, DynamicsError> {
    let mut out = vec![0.0; state.x.len()];
    svrg_estimator_into(obj, &state.x, &state.snapshot, &state.snapshot_grad, batch, &mut out)?;
    Ok(out)
}

/// Plain minibatch mean `(1/|I|) Σ_{i∈I} ∇fᵢ(x)`, written into `out`.
pub fn minibatch_gradient_into(
    obj: &dyn FiniteSumObjective,
    x: &[f64],
    batch: &[usize],
    out: &mut [f64],
) -> Result<(), DynamicsError> {
    if batch.is_empty() {
        return Err(DynamicsError::InvalidBatch);
    }
    let w = 1.0 / batch.len() as f64;
    out.iter_mut().for_each(|v| *v = 0.0);
    for &i in batch {
        obj.add_component_gradient(i, x, w, out);
    }
    Ok(())
}

/// Performs one iteration of `method`. The config must already be validated
/// against `obj`.
pub fn step(
    obj: &dyn FiniteSumObjective,
    config: &SgldVrConfig,
    method: Method,
    state: &mut SgldVrState,
) {
    let t = state.t;
    if method == Method::SgldVr && t % config.epoch_length as u64 == 0 {
        state.refresh_snapshot(obj);
        state.epoch = t / config.epoch_length as u64;
    }
    let (eta, rho) = config.schedule.eval(t);
    let mut rng = state.key.at(t);
    draw_batch(
        &mut rng,
        obj.num_components(),
        config.batch_size,
        config.sampling,
        &mut state.last_batch,
    );
    // batch_size >= 1 after validation, so neither estimator can fail
    let est = &mut state.estimate;
    match method {
        Method::SgldVr => svrg_estimator_into(
            obj,
            &state.x,
            &state.snapshot,
            &state.snapshot_grad,
            &state.last_batch,
            est,
        ),
        Method::Sgd | Method::Sgld => minibatch_gradient_into(obj, &state.x, &state.last_batch, est),
    }
    .expect("validated config has a nonempty batch");
    crate::linalg::axpy(-eta, est, &mut state.x);

    let rho = if method == Method::Sgd { 0.0 } else { rho };
    if rho != 0.0 {
        for (xj, e) in state.x.iter_mut().zip(state.last_noise.iter_mut()) {
            *e = StandardNormal.sample(&mut rng);
            *xj += rho * *e;
        }
    } else {
        state.last_noise.iter_mut().for_each(|e| *e = 0.0);
    }
    state.t += 1;
}

/// Recording options for [`run_method`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Record every `stride` steps (the endpoints are always recorded).
    pub stride: u64,
    pub record_iterates: bool,
    /// Objective identifier copied into the trace metadata.
    pub objective_id: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stride: 1,
            record_iterates: false,
            objective_id: "unnamed".into(),
        }
    }
}

fn record(obj: &dyn FiniteSumObjective, state: &SgldVrState, opts: &RunOptions, grad: &mut [f64]) -> Result<TraceRecord, DynamicsError> {
    let f = obj.full_value(&state.x);
    obj.full_gradient_into(&state.x, grad);
    let g = norm(grad);
    if !f.is_finite() || !g.is_finite() || !all_finite(&state.x) {
        return Err(DynamicsError::Diverged { t: state.t });
    }
    Ok(TraceRecord {
        t: state.t,
        f,
        grad_norm: g,
        x: opts.record_iterates.then(|| state.x.clone()),
    })
}

/// Runs `config.horizon` iterations of `method` from `x0`.
pub fn run_method(
    obj: &dyn FiniteSumObjective,
    config: &SgldVrConfig,
    method: Method,
    x0: &[f64],
    seed: u64,
    opts: &RunOptions,
) -> Result<RunTrace, DynamicsError> {
    config.validate(obj.num_components())?;
    if x0.len() != obj.dim() {
        return Err(DynamicsError::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        });
    }
    if opts.stride == 0 {
        return Err(DynamicsError::InvalidConfig("record stride must be >= 1".into()));
    }
    let mut state = SgldVrState::new(x0.to_vec(), seed);
    let mut grad = vec![0.0; obj.dim()];
    let mut records = vec![record(obj, &state, opts, &mut grad)?];
    while state.t < config.horizon {
        step(obj, config, method, &mut state);
        if !all_finite(&state.x) {
            return Err(DynamicsError::Diverged { t: state.t });
        }
        if state.t % opts.stride == 0 || state.t == config.horizon {
            records.push(record(obj, &state, opts, &mut grad)?);
        }
    }
    Ok(RunTrace {
        records,
        meta: TraceMeta {
            objective: opts.objective_id.clone(),
            method: method.name().into(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            provenance: crate::provenance(),
            constants: None,
        },
    })
}

/// SGLD-VR run.
pub fn run(
    obj: &dyn FiniteSumObjective,
    config: &SgldVrConfig,
    x0: &[f64],
    seed: u64,
    opts: &RunOptions,
) -> Result<RunTrace, DynamicsError> {
    run_method(obj, config, Method::SgldVr, x0, seed, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Sgd,
    Sgld,
}

/// Baseline run with the plain minibatch estimator.
pub fn run_baseline(
    obj: &dyn FiniteSumObjective,
    config: &SgldVrConfig,
    x0: &[f64],
    seed: u64,
    variant: Baseline,
    opts: &RunOptions,
) -> Result<RunTrace, DynamicsError> {
    let method = match variant {
        Baseline::Sgd => Method::Sgd,
        Baseline::Sgld => Method::Sgld,
    };
    run_method(obj, config, method, x0, seed, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::make_quadratic;

    #[test]
    fn schedule_example() {
        let s = DecaySchedule::new(1000.0, 0.01, 1.0, 1).unwrap();
        let (eta, rho) = s.eval(9);
        assert_eq!(eta, 100.0);
        assert!((rho - 0.01 / 10f64.sqrt()).abs() < 1e-18);
        assert_eq!(DecaySchedule::new(1.0, 0.0, 1.0, 1).unwrap().rho(123), 0.0);
    }

    #[test]
    fn schedule_rejects_bad_params() {
        assert!(DecaySchedule::new(1.0, 0.1, 0.5, 1).is_err());
        assert!(DecaySchedule::new(0.0, 0.1, 1.0, 1).is_err());
        assert!(DecaySchedule::new(1.0, -0.1, 1.0, 1).is_err());
        assert!(DecaySchedule::new(1.0, 0.1, 1.0, 0).is_err());
    }

    #[test]
    fn empty_batch_is_rejected() {
        let (q, _) = make_quadratic(2, 1.0).unwrap();
        let st = SgldVrState::new(vec![1.0, 1.0], 0);
        assert_eq!(svrg_estimator(&q, &st, &[]), Err(DynamicsError::InvalidBatch));
    }

    #[test]
    fn snapshot_identity() {
        let (q, _) = make_quadratic(3, 1.0).unwrap();
        let mut st = SgldVrState::new(vec![0.3, -1.0, 2.0], 0);
        st.refresh_snapshot(&q);
        let est = svrg_estimator(&q, &st, &[0, 2, 2]).unwrap();
        assert_eq!(est, st.snapshot_grad);
    }

    #[test]
    fn config_validation() {
        let sch = DecaySchedule::new(0.1, 0.0, 1.0, 1).unwrap().into();
        let mut c = SgldVrConfig {
            batch_size: 1,
            epoch_length: 10,
            horizon: 25,
            schedule: sch,
            sampling: SamplingMode::WithReplacement,
        };
        assert!(matches!(c.validate(5), Err(DynamicsError::InvalidConfig(_))));
        c.horizon = 30;
        assert!(c.validate(5).is_ok());
        c.batch_size = 6;
        assert!(c.validate(5).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("sgld-vr".parse::<Method>().unwrap(), Method::SgldVr);
        assert!("adam".parse::<Method>().is_err());
    }
}
