//! Saddle-escape quantities `ζ, r, Q, T_i, P_i`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::TheoryError;
use crate::dynamics::Schedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleQuantities {
    pub epsilon: f64,
    /// Required function decrease `5ε²/(2L)`.
    pub zeta: f64,
    /// `max{ε/L, √(3/(Lq))·ε}`.
    pub radius: f64,
    /// `(ζ + Lr²)/(L + q)`.
    pub q_threshold: f64,
    /// Batch noise scales `T_i`, one per requested batch index.
    pub escape_times: Vec<f64>,
    /// `P_i` for `d ≥ 3`; `None` (not applicable) for `d ≤ 2`.
    pub constrained_probs: Option<Vec<f64>>,
    /// `ε^{d−1}/(Γ((d−2)/2)·L^{d−1}q^{d−1})` with unit constant, for `d ≥ 3`.
    pub success_probability: Option<f64>,
}

/// `ζ`, `r` and `Q` for accuracy `ε`.
pub fn saddle_thresholds(eps: f64, l: f64, q: f64) -> Result<(f64, f64, f64), TheoryError> {
    if !(eps > 0.0 && l > 0.0 && q > 0.0) {
        return Err(TheoryError::InvalidInput(format!(
            "need eps, L, q > 0 (got {eps}, {l}, {q})"
        )));
    }
    let zeta = 5.0 * eps * eps / (2.0 * l);
    let r = (eps / l).max((3.0 / (l * q)).sqrt() * eps);
    let big_q = (zeta + l * r * r) / (l + q);
    if !(r * r > big_q) {
        return Err(TheoryError::InconsistentConstants(format!(
            "r^2 = {} does not exceed Q = {big_q}",
            r * r
        )));
    }
    Ok((zeta, r, big_q))
}

/// `T_i = 2√(η₀e^{iδ})(e^{δ/2} − 1)` for the `ν = 1` schedule.
pub fn escape_time_nu1(eta0: f64, delta: f64, i: u64) -> f64 {
    2.0 * (eta0 * (i as f64 * delta).exp()).sqrt() * (0.5 * delta).exp_m1()
}

/// `Σ_{l=n_i}^{n_{i+1}−1} √η_l` for each consecutive pair of partition indices.
pub fn escape_times_by_summation<S: Schedule + ?Sized>(sch: &S, partition: &[u64]) -> Vec<f64> {
    partition
        .windows(2)
        .map(|w| (w[0]..w[1]).map(|l| sch.eta(l).sqrt()).sum())
        .collect()
}

/// `min(1, T^{−(d−1)/2}(r² − Q)^{(d−1)/2}/Γ((d−2)/2))`, or `None` when `d ≤ 2`.
pub fn constrained_probability(t_i: f64, r: f64, big_q: f64, d: usize) -> Option<f64> {
    if d < 3 {
        return None;
    }
    let h = 0.5 * (d as f64 - 1.0);
    let p = t_i.powf(-h) * (r * r - big_q).powf(h) / gamma(0.5 * (d as f64 - 2.0));
    Some(p.min(1.0))
}

/// Success probability `ε^{d−1}/(Γ((d−2)/2)L^{d−1}q^{d−1})` with unit constant.
pub fn success_probability(eps: f64, l: f64, q: f64, d: usize) -> Option<f64> {
    if d < 3 {
        return None;
    }
    let k = d as f64 - 1.0;
    Some(eps.powf(k) / (gamma(0.5 * (d as f64 - 2.0)) * l.powf(k) * q.powf(k)))
}

/// Inputs of [`saddle_quantities`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleInputs {
    pub eps: f64,
    pub lipschitz: f64,
    pub q: f64,
    pub dim: usize,
    pub eta0: f64,
    pub delta: f64,
    pub batches: std::ops::Range<u64>,
}

/// All saddle quantities, with `T_i` from the `ν = 1` closed form.
pub fn saddle_quantities(inp: &SaddleInputs) -> Result<SaddleQuantities, TheoryError> {
    let (zeta, r, big_q) = saddle_thresholds(inp.eps, inp.lipschitz, inp.q)?;
    let escape_times: Vec<f64> = inp
        .batches
        .clone()
        .map(|i| escape_time_nu1(inp.eta0, inp.delta, i))
        .collect();
    let constrained_probs = (inp.dim >= 3).then(|| {
        escape_times
            .iter()
            .map(|&t| constrained_probability(t, r, big_q, inp.dim).expect("d >= 3"))
            .collect()
    });
    Ok(SaddleQuantities {
        epsilon: inp.eps,
        zeta,
        radius: r,
        q_threshold: big_q,
        escape_times,
        constrained_probs,
        success_probability: success_probability(inp.eps, inp.lipschitz, inp.q, inp.dim),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DecaySchedule;
    use crate::theory::stepsize_batch_partition;

    #[test]
    fn hand_example() {
        let (zeta, r, q) = saddle_thresholds(0.1, 1.0, 1.0).unwrap();
        assert!((zeta - 0.025).abs() < 1e-15);
        assert!((r - 0.173_205_080_756_887_7).abs() < 1e-12);
        assert!((q - 0.0275).abs() < 1e-15);
        assert!((r * r - q - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn d3_uses_sqrt_pi() {
        let (_, r, q) = saddle_thresholds(0.1, 1.0, 1.0).unwrap();
        let t = 2.0;
        let p = constrained_probability(t, r, q, 3).unwrap();
        assert!((p - (r * r - q) / (t * std::f64::consts::PI.sqrt())).abs() < 1e-15);
        assert_eq!(constrained_probability(t, r, q, 2), None);
    }

    #[test]
    fn summation_tracks_closed_form_for_unit_eta0() {
        // With η₀ = 1 the partition grows like e^{iδ}, matching the closed form
        // asymptotically.
        let s = DecaySchedule::new(1.0, 0.0, 1.0, 1).unwrap();
        let delta = 0.5;
        let p = stepsize_batch_partition(&s, delta, 2_000_000).unwrap();
        let sums = escape_times_by_summation(&s, &p);
        let k = sums.len() - 1;
        let ratio_sum = sums[k] / sums[k - 1];
        let ratio_closed = escape_time_nu1(1.0, delta, 2) / escape_time_nu1(1.0, delta, 1);
        assert!((ratio_sum / ratio_closed - 1.0).abs() < 0.05, "{ratio_sum} vs {ratio_closed}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(saddle_thresholds(0.0, 1.0, 1.0).is_err());
        assert!(saddle_thresholds(0.1, 1.0, 0.0).is_err());
    }
}
