//! Brownian reachability factor `p₁`, the bounded-drift check and the
//! ergodicity horizon.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TheoryError;
use crate::linalg::norm;
use crate::objectives::Regularization;

/// `(4/√(2π) − 1)·e^{−1/2}`, the per-dimension reflection constant in the horizon.
pub const REFLECTION_CONSTANT: f64 = 0.361_352_238_363_940_04;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityBound {
    pub r: f64,
    pub rho0: f64,
    pub t_n: f64,
    pub z_star: Vec<f64>,
    /// `min_dim √(2/(πt_n))·exp(−(z*² + (z* + r/d)²)/(2t_n))·r/d`.
    pub density_base: f64,
    /// `4(‖z*‖ + r)/√(2πdt_n)·exp(−(‖z*‖ + r)²/(2dt_n)) − 1`, before clamping.
    pub reflection_base: f64,
    pub p1: f64,
}

/// Lower bound `p₁(r, ρ₀, t_n, z*)` on the probability that a Brownian path run
/// for time `t_n` ends within `r` of `z*` without leaving the ball of radius
/// `‖z*‖ + r`. The reflection base is clamped at 0 before raising to the `d`-th
/// power; the result is clamped into `[0, 1]`.
pub fn brownian_p1(r: f64, rho0: f64, t_n: f64, z_star: &[f64]) -> ReachabilityBound {
    let d = z_star.len().max(1) as f64;
    let zn = norm(z_star);
    let (density_base, reflection_base) = if t_n > 0.0 {
        let density = z_star
            .iter()
            .map(|&z| {
                let y = z + r / d;
                (2.0 / (PI * t_n)).sqrt() * (-(z * z + y * y) / (2.0 * t_n)).exp() * r / d
            })
            .fold(f64::INFINITY, f64::min);
        let reach = zn + r;
        let refl = 4.0 * reach / (2.0 * PI * d * t_n).sqrt() * (-(reach * reach) / (2.0 * d * t_n)).exp() - 1.0;
        (density, refl)
    } else {
        (0.0, -1.0)
    };
    let p1 = if r == 0.0 || rho0 == 0.0 || t_n <= 0.0 {
        0.0
    } else {
        (density_base.powf(d) * reflection_base.max(0.0).powf(d)).clamp(0.0, 1.0)
    };
    ReachabilityBound {
        r,
        rho0,
        t_n,
        z_star: z_star.to_vec(),
        density_base,
        reflection_base,
        p1,
    }
}

/// Largest value of the reflection base over all `(r, t_n, z*)`: the map
/// `c ↦ 4c/√(2π)·e^{−c²/2} − 1` peaks at `c = 1`.
pub fn max_reflection_base() -> f64 {
    4.0 / (2.0 * PI).sqrt() * (-0.5f64).exp() - 1.0
}

/// Effective target radius `ε + δC21 + 2δ√C22` for the reachability estimate.
/// `C21` defaults to `d·L` when not given.
pub fn reachability_radius(eps: f64, delta: f64, c21: Option<f64>, c22: f64, dim: usize, lipschitz: f64) -> f64 {
    let c21 = c21.unwrap_or(dim as f64 * lipschitz);
    eps + delta * c21 + 2.0 * delta * c22.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftNoise {
    /// `ξⱼ ≡ 0`.
    Zero,
    /// `ξⱼ ~ N(0, (C₂/d)·I)`, so `E‖ξⱼ‖² = C₂`.
    Gaussian,
    /// Each coordinate uniform on `±√(3C₂/d)`, so `E‖ξⱼ‖² = C₂`.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftWeights {
    /// Uniform random weights rescaled to sum to `2ν`.
    UniformNormalized,
    /// Equal weights `2ν/k`.
    Equal,
    /// `aⱼ ≡ 0`.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSetup {
    pub c2: f64,
    pub nu_sum: f64,
    pub dim: usize,
    pub length: usize,
    pub noise: DriftNoise,
    pub weights: DriftWeights,
}

impl DriftSetup {
    pub fn new(c2: f64, nu_sum: f64) -> Self {
        DriftSetup {
            c2,
            nu_sum,
            dim: 5,
            length: 20,
            noise: DriftNoise::Gaussian,
            weights: DriftWeights::UniformNormalized,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCheck {
    pub n_trials: usize,
    pub radius: f64,
    pub fraction: f64,
    pub std_error: f64,
}

/// Monte Carlo frequency of `‖Σⱼ aⱼξⱼ‖ ≤ 4ν√C₂` for weights with `Σaⱼ ≤ 2ν`
/// and zero-mean `ξⱼ` with `E‖ξⱼ‖² = C₂`.
pub fn drift_bound_check(setup: &DriftSetup, n_trials: usize, seed: u64) -> Result<DriftCheck, TheoryError> {
    if n_trials < 100 {
        return Err(TheoryError::TooFewTrials(n_trials));
    }
    if !(setup.c2 > 0.0 && setup.nu_sum > 0.0) || setup.dim == 0 || setup.length == 0 {
        return Err(TheoryError::InvalidInput(
            "drift check needs C2 > 0, nu_sum > 0, dim >= 1, length >= 1".into(),
        ));
    }
    let radius = 4.0 * setup.nu_sum * setup.c2.sqrt();
    let d = setup.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = vec![0.0; d];
    let mut a = vec![0.0; setup.length];
    let sd = (setup.c2 / d as f64).sqrt();
    let half = (3.0 * setup.c2 / d as f64).sqrt();
    let mut inside = 0usize;
    for _ in 0..n_trials {
        match setup.weights {
            DriftWeights::UniformNormalized => {
                a.iter_mut().for_each(|w| *w = rng.random::<f64>());
                let s: f64 = a.iter().sum();
                a.iter_mut().for_each(|w| *w *= 2.0 * setup.nu_sum / s);
            }
            DriftWeights::Equal => a.fill(2.0 * setup.nu_sum / setup.length as f64),
            DriftWeights::Zero => a.fill(0.0),
        }
        y.fill(0.0);
        for &aj in &a {
            for yi in y.iter_mut() {
                let xi = match setup.noise {
                    DriftNoise::Zero => 0.0,
                    DriftNoise::Gaussian => {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sd * z
                    }
                    DriftNoise::Uniform => rng.random_range(-half..=half),
                };
                *yi += aj * xi;
            }
        }
        if norm(&y) <= radius {
            inside += 1;
        }
    }
    let p = inside as f64 / n_trials as f64;
    Ok(DriftCheck {
        n_trials,
        radius,
        fraction: p,
        std_error: (p * (1.0 - p) / n_trials as f64).sqrt(),
    })
}

/// Inputs of [`ergodicity_horizon`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonInputs {
    pub lipschitz: f64,
    pub eta0: f64,
    pub rho0: f64,
    pub epoch_length: usize,
    pub eps_tilde: f64,
    pub p_fail: f64,
    pub target: Vec<f64>,
    pub f_x0: f64,
}

/// Horizon after which `x_t` has visited the `ε̃`-ball around the target with
/// probability at least `1 − p`, with the unnamed constant set to 1:
///
/// ```text
/// (1 + ln f(x₀) + (d‖s‖ + ε̃)^d / (ε̃ (c ε̃)^d))
///   / (ε̃ p μ₁ (ψ₁ + 2η₀L³(μ₂f(x₀) + 2ψ₂)/B_e + ρ₀²Ld/η₀)),   c = (4/√(2π) − 1)e^{−1/2}
/// ```
pub fn ergodicity_horizon(reg: &Regularization, inp: &HorizonInputs) -> f64 {
    let d = inp.target.len() as f64;
    let e = inp.eps_tilde;
    let reach = (d * norm(&inp.target) + e) / (REFLECTION_CONSTANT * e);
    let numerator = 1.0 + inp.f_x0.ln() + reach.powf(d) / e;
    let l = inp.lipschitz;
    let drift = reg.psi1
        + 2.0 * inp.eta0 * l.powi(3) * (reg.mu2 * inp.f_x0 + 2.0 * reg.psi2) / inp.epoch_length as f64
        + inp.rho0 * inp.rho0 * l * d / inp.eta0;
    numerator / (e * inp.p_fail * reg.mu1 * drift)
}
