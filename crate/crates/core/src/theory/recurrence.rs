//! Stepsize-batch partition and the constants of the recurrence bound.

use serde::{Deserialize, Serialize};

use super::TheoryError;
use crate::dynamics::{Schedule, SgldVrConfig};
use crate::objectives::Regularization;

/// First `t ≤ t_max` with `η_t ≤ δ`, for a nonincreasing schedule.
pub fn first_index_below<S: Schedule + ?Sized>(sch: &S, delta: f64, t_max: u64) -> Option<u64> {
    if sch.eta(t_max) > delta {
        return None;
    }
    let (mut lo, mut hi) = (0u64, t_max);
    if sch.eta(0) <= delta {
        return Some(0);
    }
    // invariant: η_lo > δ ≥ η_hi
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if sch.eta(mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Partition indices `n₀ < n₁ < …` with `n₀` the first index where `η ≤ δ` and
/// `n_{k+1}` the smallest `s > n_k` with `η_{n_k} + … + η_{s−1} ≥ δ`. Every
/// returned index is at most `t_max`.
pub fn stepsize_batch_partition<S: Schedule + ?Sized>(
    sch: &S,
    delta: f64,
    t_max: u64,
) -> Result<Vec<u64>, TheoryError> {
    if !(delta > 0.0) {
        return Err(TheoryError::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let Some(n0) = first_index_below(sch, delta, t_max) else {
        return Ok(Vec::new());
    };
    let mut out = vec![n0];
    let mut sum = 0.0;
    let mut s = n0;
    while s < t_max {
        sum += sch.eta(s);
        s += 1;
        if sum >= delta {
            out.push(s);
            sum = 0.0;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceConstants {
    pub delta: f64,
    pub n0: u64,
    pub eta_n0: f64,
    /// `η₀(2L³μ₂/(μ₁B_e) + L)`: `C1` must exceed this.
    pub c1_lower: f64,
    pub c1: f64,
    pub alpha: f64,
    pub b: f64,
    pub k: f64,
    /// Target level `M = 2δB`.
    pub level: f64,
    /// Set when `α ≤ 0`: δ is too small for the bound to say anything.
    pub warning: Option<String>,
}

impl RecurrenceConstants {
    /// `4/α + K + j(1/(2αδ) + 1)`.
    pub fn expected_tau_bound(&self, j: u64) -> f64 {
        expected_tau_bound(self.alpha, self.delta, self.k, j)
    }

    /// Slope of the bound in `j`: `1/(2αδ) + 1`.
    pub fn slope(&self) -> f64 {
        1.0 / (2.0 * self.alpha * self.delta) + 1.0
    }

    /// First partition slot considered for a visit: the smallest integer `≥ K + 1`
    /// (and at least 0).
    pub fn first_slot(&self) -> u64 {
        (self.k + 1.0).ceil().max(0.0) as u64
    }
}

pub fn expected_tau_bound(alpha: f64, delta: f64, k: f64, j: u64) -> f64 {
    4.0 / alpha + k + j as f64 * (1.0 / (2.0 * alpha * delta) + 1.0)
}

/// Inputs of [`recurrence_constants`] besides the objective constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecurrenceInputs {
    pub lipschitz: f64,
    pub dim: usize,
    pub delta: f64,
    pub f_x0: f64,
    pub f_xn0: f64,
}

/// `C1` (interval midpoint), `α`, `B`, `M = 2δB` and `K`.
pub fn recurrence_constants(
    reg: &Regularization,
    config: &SgldVrConfig,
    inp: &RecurrenceInputs,
) -> Result<RecurrenceConstants, TheoryError> {
    let l = inp.lipschitz;
    let delta = inp.delta;
    if !(delta > 0.0) {
        return Err(TheoryError::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    if !(reg.mu1 > 0.0) {
        return Err(TheoryError::InvalidInput("mu1 must be positive".into()));
    }
    let sch = &config.schedule;
    let eta0 = sch.eta0();
    let rho0 = sch.rho0();
    let be = config.epoch_length as f64;
    let c1_lower = eta0 * (2.0 * l.powi(3) * reg.mu2 / (reg.mu1 * be) + l);
    if c1_lower >= 1.0 {
        return Err(TheoryError::InfeasibleHyperparameters(format!(
            "eta0*(2L^3 mu2/(mu1 B_e) + L) = {c1_lower:.6e} >= 1: no admissible C1"
        )));
    }
    let c1 = 0.5 * (c1_lower + 1.0);
    let rate = (1.0 - c1) * reg.mu1 * delta;
    let alpha = 1.0 - 2.0 * (-rate).exp();
    let n0 = first_index_below(sch, delta, u64::MAX / 4).ok_or_else(|| {
        TheoryError::InvalidInput(format!("stepsize never drops below delta = {delta}"))
    })?;
    let eta_n0 = sch.eta(n0);
    let b = 2.0
        * (reg.psi1
            + (2.0 * eta_n0 * l.powi(3) / be) * (reg.mu2 * inp.f_x0 + 2.0 * reg.psi2)
            + rho0 * rho0 * l * inp.dim as f64 / (2.0 * eta0));
    let k = (inp.f_xn0 / (delta * b)).ln() / rate;
    let warning = (alpha <= 0.0).then(|| {
        format!("alpha = {alpha:.6e} <= 0: delta = {delta} is too small for the recurrence bound")
    });
    Ok(RecurrenceConstants {
        delta,
        n0,
        eta_n0,
        c1_lower,
        c1,
        alpha,
        b,
        k,
        level: 2.0 * delta * b,
        warning,
    })
}
