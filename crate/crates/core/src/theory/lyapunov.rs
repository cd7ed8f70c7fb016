//! Weight sequences `c_t`, normalizers `γ_t`, the feasibility test and the
//! gradient-norm bound.

use serde::{Deserialize, Serialize};

use super::TheoryError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSequences {
    /// `c_0..=c_{B_e}`, with `c_{B_e} = 0`.
    pub c: Vec<f64>,
    /// `γ_0..γ_{B_e−1}`.
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma_min: f64,
}

/// Backward recursion
/// `c_t = c_{t+1}(1 + β_tη_t + 2η_t²L²/B_e) + η_t²L³/B_e` from `c_{B_e} = 0`, and
/// `γ_t = η_t − (c_{t+1}/β_t)η_t − η_t²L − 2c_{t+1}η_t²`.
///
/// `eta` has one entry per step of the epoch (`B_e = eta.len()`); `beta` has
/// either one entry (held constant) or `B_e` entries.
pub fn weight_sequences(eta: &[f64], beta: &[f64], l: f64) -> Result<LyapunovSequences, TheoryError> {
    let be = eta.len();
    if be == 0 {
        return Err(TheoryError::InvalidInput("epoch length must be >= 1".into()));
    }
    let beta: Vec<f64> = match beta.len() {
        1 => vec![beta[0]; be],
        n if n == be => beta.to_vec(),
        n => {
            return Err(TheoryError::InvalidInput(format!(
                "beta has {n} entries, expected 1 or {be}"
            )))
        }
    };
    if beta.iter().any(|b| !(*b > 0.0)) {
        return Err(TheoryError::InvalidInput("beta must be positive".into()));
    }
    if !(l >= 0.0) {
        return Err(TheoryError::InvalidInput(format!("L must be nonnegative, got {l}")));
    }
    let bef = be as f64;
    let mut c = vec![0.0; be + 1];
    let mut gamma = vec![0.0; be];
    for t in (0..be).rev() {
        let (e, b, next) = (eta[t], beta[t], c[t + 1]);
        c[t] = next * (1.0 + b * e + 2.0 * e * e * l * l / bef) + e * e * l * l * l / bef;
        gamma[t] = e - (next / b) * e - e * e * l - 2.0 * next * e * e;
    }
    let gamma_min = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LyapunovSequences {
        c,
        gamma,
        beta,
        gamma_min,
    })
}

/// Closed form of `c_0` for constant `(η₀, β̃)`: `(g^{B_e} − 1)·D` with
/// `g = 1 + β̃η₀ + 2η₀²L²/B_e` and `D = (η₀L³/B_e)/(β̃ + 2η₀L²/B_e)`.
pub fn closed_form_c0(eta0: f64, beta: f64, l: f64, epoch_length: usize) -> f64 {
    let be = epoch_length as f64;
    let g_minus_one = beta * eta0 + 2.0 * eta0 * eta0 * l * l / be;
    let d = (eta0 * l * l * l / be) / (beta + 2.0 * eta0 * l * l / be);
    (be * g_minus_one.ln_1p()).exp_m1() * d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Feasibility {
    Feasible {
        lhs: f64,
        c0: f64,
        gamma_min: f64,
    },
    Infeasible {
        reason: String,
        lhs: f64,
        c0: f64,
        gamma_min: f64,
    },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }

    /// `c̃₀(1/β̃ + 2η₀) + η₀L`.
    pub fn lhs(&self) -> f64 {
        match self {
            Feasibility::Feasible { lhs, .. } | Feasibility::Infeasible { lhs, .. } => *lhs,
        }
    }
}

/// Sufficient condition `c̃₀(1/β̃ + 2η₀) + η₀L < 1` together with strict
/// positivity of every `γ_t` under constant `(η₀, β̃)`.
pub fn validate_hyperparams(
    eta0: f64,
    beta: f64,
    l: f64,
    epoch_length: usize,
) -> Result<Feasibility, TheoryError> {
    if !(eta0 > 0.0 && beta > 0.0 && l >= 0.0 && epoch_length >= 1) {
        return Err(TheoryError::InvalidInput(format!(
            "need eta0 > 0, beta > 0, L >= 0, B_e >= 1 (got {eta0}, {beta}, {l}, {epoch_length})"
        )));
    }
    let c0 = closed_form_c0(eta0, beta, l, epoch_length);
    let lhs = c0 * (1.0 / beta + 2.0 * eta0) + eta0 * l;
    let seq = weight_sequences(&vec![eta0; epoch_length], &[beta], l)?;
    let gamma_min = seq.gamma_min;
    if !(lhs < 1.0) {
        return Ok(Feasibility::Infeasible {
            reason: format!(
                "c0*(1/beta + 2*eta0) + eta0*L = {lhs:.6e} >= 1 (c0 = {c0:.6e}, eta0*L = {:.6e})",
                eta0 * l
            ),
            lhs,
            c0,
            gamma_min,
        });
    }
    if !(gamma_min > 0.0) {
        return Ok(Feasibility::Infeasible {
            reason: format!("min gamma_t = {gamma_min:.6e} is not positive"),
            lhs,
            c0,
            gamma_min,
        });
    }
    Ok(Feasibility::Feasible { lhs, c0, gamma_min })
}

/// Inputs of [`grad_norm_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradBoundInputs {
    /// `f(x₀) − f*`.
    pub delta_f: f64,
    pub horizon: f64,
    pub gamma_min: f64,
    pub lipschitz: f64,
    pub c0: f64,
    pub dim: usize,
    pub nu: f64,
    /// Unspecified universal constant; 1 unless fitted.
    pub c_zero: f64,
}

/// `Δ_f/(Tγ̄) + (d/γ̄)(L/2 + c₀)C₀/T^ν`: bound on the expected squared gradient
/// norm at an iterate drawn uniformly from the run.
pub fn grad_norm_bound(p: &GradBoundInputs) -> Result<f64, TheoryError> {
    if !(p.gamma_min > 0.0) {
        return Err(TheoryError::InfeasibleHyperparameters(format!(
            "gamma_min = {} must be positive",
            p.gamma_min
        )));
    }
    if !(p.horizon >= 1.0) {
        return Err(TheoryError::InvalidInput(format!("horizon must be >= 1, got {}", p.horizon)));
    }
    Ok(p.delta_f / (p.horizon * p.gamma_min)
        + (p.dim as f64 / p.gamma_min) * (p.lipschitz / 2.0 + p.c0) * p.c_zero / p.horizon.powf(p.nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_backward_step() {
        let s = weight_sequences(&[0.01; 10], &[2.0], 1.0).unwrap();
        assert_eq!(s.c[10], 0.0);
        assert!((s.c[9] - 1e-5).abs() < 1e-20);
        assert_eq!(s.c.len(), 11);
        assert_eq!(s.gamma.len(), 10);
    }

    #[test]
    fn zero_lipschitz_collapses() {
        let eta = [0.3, 0.2, 0.1];
        let s = weight_sequences(&eta, &[1.0], 0.0).unwrap();
        assert!(s.c.iter().all(|&c| c == 0.0));
        assert_eq!(s.gamma, eta.to_vec());
        assert!(validate_hyperparams(5.0, 1.0, 0.0, 10).unwrap().is_feasible());
    }

    #[test]
    fn feasibility_examples() {
        let f = validate_hyperparams(1e-3, 2.0, 1.0, 10).unwrap();
        assert!(f.is_feasible());
        assert!((f.lhs() - 1e-3).abs() < 1e-5);
        let f = validate_hyperparams(2.0, 2.0, 1.0, 10).unwrap();
        assert!(!f.is_feasible());
        assert!(f.lhs() >= 2.0);
    }

    #[test]
    fn bound_example_and_homogeneity() {
        let mut p = GradBoundInputs {
            delta_f: 1.0,
            horizon: 1000.0,
            gamma_min: 0.5,
            lipschitz: 1.0,
            c0: 0.0,
            dim: 10,
            nu: 1.0,
            c_zero: 1.0,
        };
        let b = grad_norm_bound(&p).unwrap();
        assert!((b - 0.012).abs() < 1e-15);
        p.horizon = 2000.0;
        assert_eq!(grad_norm_bound(&p).unwrap(), b / 2.0);
        p.delta_f = 0.0;
        p.c_zero = 0.0;
        assert_eq!(grad_norm_bound(&p).unwrap(), 0.0);
        p.gamma_min = 0.0;
        assert!(matches!(
            grad_norm_bound(&p),
            Err(TheoryError::InfeasibleHyperparameters(_))
        ));
    }
}
