use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ConstantSource, FiniteSumObjective, ObjectiveError, ObjectiveMetadata, Regularization};
use crate::linalg::{dot, norm_sq};

/// Numerically stable logistic function.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `max |σ''|`, attained at `σ = ½ ± 1/(2√3)`.
const SIGMOID_CURVATURE_MAX: f64 = 0.096_225_044_864_937_63;

/// `f(x) = Σᵣ σ(aᵣ·x) + γ‖x‖² + C` split across the rows of `A`:
/// `fᵣ(x) = m·σ(aᵣ·x) + γ‖x‖² + C`.
#[derive(Clone, Debug)]
pub struct SigmoidNet {
    rows: Vec<Vec<f64>>,
    gamma: f64,
    offset: f64,
}

pub(crate) fn random_matrix(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| (0..cols).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

pub fn make_sigmoid_net(
    a: Vec<Vec<f64>>,
    gamma: f64,
    offset: f64,
) -> Result<(SigmoidNet, ObjectiveMetadata), ObjectiveError> {
    if !(gamma > 0.0) {
        return Err(ObjectiveError::InvalidRegularizer(gamma));
    }
    let d = a.first().map_or(0, |r| r.len());
    if d == 0 || a.iter().any(|r| r.len() != d) {
        return Err(ObjectiveError::BadMatrix);
    }
    let m = a.len() as f64;
    let max_row_sq = a.iter().map(|r| norm_sq(r)).fold(0.0, f64::max);
    let frob_sq: f64 = a.iter().map(|r| norm_sq(r)).sum();

    // ∇f = Σ σ'(aᵣ·x)aᵣ + 2γx, and ‖Σ σ'aᵣ‖ ≤ ¼‖A‖_F√m. Writing G for that
    // bound, ‖∇f‖² ≥ 2γ²‖x‖² − G² and γ‖x‖² ≥ f − m − C give the first pair.
    let g_sq = frob_sq * m / 16.0;
    let regularization = Regularization {
        mu1: 2.0 * gamma,
        psi1: (2.0 * gamma * (m + offset) + g_sq).max(0.0),
        mu2: 1.0 / gamma,
        psi2: (-offset / gamma).max(0.0),
    };
    let meta = ObjectiveMetadata {
        grad_lipschitz: m * SIGMOID_CURVATURE_MAX * max_row_sq + 2.0 * gamma,
        lipschitz_source: ConstantSource::Analytic,
        hessian_lipschitz: None,
        strict_saddle_q: None,
        regularization: Some(regularization),
        known_min_value: None,
        known_fsps: Vec::new(),
        check_box: 5.0,
    };
    Ok((
        SigmoidNet {
            rows: a,
            gamma,
            offset,
        },
        meta,
    ))
}

impl FiniteSumObjective for SigmoidNet {
    fn num_components(&self) -> usize {
        self.rows.len()
    }

    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let m = self.rows.len() as f64;
        m * sigmoid(dot(&self.rows[i], x)) + self.gamma * norm_sq(x) + self.offset
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let m = self.rows.len() as f64;
        let s = sigmoid(dot(&self.rows[i], x));
        let c = weight * m * s * (1.0 - s);
        for ((o, a), xj) in out.iter_mut().zip(&self.rows[i]).zip(x) {
            *o += c * a + weight * 2.0 * self.gamma * xj;
        }
    }

    fn full_value(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| sigmoid(dot(r, x))).sum::<f64>()
            + self.gamma * norm_sq(x)
            + self.offset
    }

    fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let mut out: Vec<f64> = v.iter().map(|vi| 2.0 * self.gamma * vi).collect();
        for r in &self.rows {
            let s = sigmoid(dot(r, x));
            let c = s * (1.0 - s) * (1.0 - 2.0 * s) * dot(r, v);
            crate::linalg::axpy(c, r, &mut out);
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::finite_difference_gradient;

    #[test]
    fn zero_matrix_examples() {
        let (f, _) = make_sigmoid_net(vec![vec![0.0, 0.0]], 1.0, 0.0).unwrap();
        assert_eq!(f.full_value(&[0.0, 0.0]), 0.5);
        assert_eq!(f.full_value(&[1.0, 0.0]), 1.5);
        assert_eq!(f.full_gradient(&[1.0, 0.0]), vec![2.0, 0.0]);
    }

    #[test]
    fn rejects_bad_gamma() {
        assert_eq!(
            make_sigmoid_net(vec![vec![1.0]], 0.0, 0.0).unwrap_err(),
            ObjectiveError::InvalidRegularizer(0.0)
        );
        assert_eq!(
            make_sigmoid_net(vec![vec![1.0]], -1.0, 0.0).unwrap_err(),
            ObjectiveError::InvalidRegularizer(-1.0)
        );
        assert_eq!(
            make_sigmoid_net(vec![vec![1.0], vec![1.0, 2.0]], 1.0, 0.0).unwrap_err(),
            ObjectiveError::BadMatrix
        );
    }

    #[test]
    fn curvature_constant() {
        let s = 0.5 - 0.5 / 3f64.sqrt();
        let v = s * (1.0 - s) * (1.0 - 2.0 * s);
        assert!((v - SIGMOID_CURVATURE_MAX).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (f, _) = make_sigmoid_net(random_matrix(4, 3, 11), 0.1, 0.0).unwrap();
        let x = [0.4, -0.2, 0.9];
        let g = f.full_gradient(&x);
        let fd = finite_difference_gradient(&f, &x, 1e-5);
        let err = crate::linalg::dist_sq(&g, &fd).sqrt() / crate::linalg::norm(&g);
        assert!(err <= 1e-6, "rel err {err}");
    }

    #[test]
    fn hessian_vec_matches_gradient_differences() {
        let (f, _) = make_sigmoid_net(random_matrix(5, 3, 2), 0.3, 1.0).unwrap();
        let x = [0.1, 0.5, -0.7];
        let v = [1.0, -2.0, 0.5];
        let h = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let gp = f.full_gradient(&xp);
        let gm = f.full_gradient(&xm);
        let hv = f.hessian_vec(&x, &v).unwrap();
        for j in 0..3 {
            let fd = (gp[j] - gm[j]) / (2.0 * h);
            assert!((fd - hv[j]).abs() < 1e-6, "{fd} vs {}", hv[j]);
        }
    }
}
