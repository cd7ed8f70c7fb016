//! Randomized spot checks of declared objective constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finite_difference_gradient, FiniteSumObjective, Regularization};
use crate::linalg::{dist_sq, norm, norm_sq};

/// Outcome of a randomized check: how many samples were drawn, how many
/// violated the inequality, and the worst observed `lhs / rhs` (or error).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpotCheck {
    pub samples: usize,
    pub violations: usize,
    pub worst: f64,
}

impl SpotCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, d: usize, half_width: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-half_width..=half_width)).collect()
}

/// Largest relative discrepancy between `full_value`/`full_gradient` and the
/// averages of their components, over `n_points` points in the box. The scale
/// is the mean absolute size of the summands.
pub fn decomposition_error<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    half_width: f64,
    n_points: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = obj.num_components();
    let d = obj.dim();
    let mut worst = 0.0f64;
    for _ in 0..n_points {
        let x = uniform_point(&mut rng, d, half_width);
        let mut avg_v = 0.0;
        let mut scale_v = 0.0;
        let mut avg_g = vec![0.0; d];
        let mut scale_g = 0.0;
        for i in 0..n {
            let v = obj.component_value(i, &x);
            avg_v += v;
            scale_v += v.abs();
            let g = obj.component_gradient(i, &x);
            scale_g += norm(&g);
            crate::linalg::axpy(1.0, &g, &mut avg_g);
        }
        avg_v /= n as f64;
        scale_v /= n as f64;
        scale_g /= n as f64;
        avg_g.iter_mut().for_each(|g| *g /= n as f64);
        let full_v = obj.full_value(&x);
        let full_g = obj.full_gradient(&x);
        if scale_v > 0.0 {
            worst = worst.max((full_v - avg_v).abs() / scale_v);
        }
        if scale_g > 0.0 {
            worst = worst.max(dist_sq(&full_g, &avg_g).sqrt() / scale_g);
        }
    }
    worst
}

/// Checks `‖∇f(x) − ∇f(y)‖ ≤ L‖x − y‖` on random pairs in the box.
pub fn check_grad_lipschitz<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    lipschitz: f64,
    half_width: f64,
    n_pairs: usize,
    seed: u64,
) -> SpotCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = obj.dim();
    let mut out = SpotCheck {
        samples: n_pairs,
        violations: 0,
        worst: 0.0,
    };
    for _ in 0..n_pairs {
        let x = uniform_point(&mut rng, d, half_width);
        let y = uniform_point(&mut rng, d, half_width);
        let lhs = dist_sq(&obj.full_gradient(&x), &obj.full_gradient(&y)).sqrt();
        let rhs = lipschitz * dist_sq(&x, &y).sqrt();
        out.worst = out.worst.max(lhs / rhs);
        // one ulp-scale allowance for the products above
        if lhs > rhs * (1.0 + 1e-12) {
            out.violations += 1;
        }
    }
    out
}

/// Checks `‖∇f(x)‖² ≥ μ₁f(x) − ψ₁` and `‖x‖² ≤ μ₂f(x) + ψ₂` on random points.
/// `worst` is the largest of `(μ₁f − ψ₁)/‖∇f‖²` and `‖x‖²/(μ₂f + ψ₂)`.
pub fn check_regularization<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    reg: &Regularization,
    half_width: f64,
    n_points: usize,
    seed: u64,
) -> SpotCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = obj.dim();
    let mut out = SpotCheck {
        samples: n_points,
        violations: 0,
        worst: 0.0,
    };
    for _ in 0..n_points {
        let x = uniform_point(&mut rng, d, half_width);
        let f = obj.full_value(&x);
        let g2 = norm_sq(&obj.full_gradient(&x));
        let x2 = norm_sq(&x);
        let lower = reg.mu1 * f - reg.psi1;
        let upper = reg.mu2 * f + reg.psi2;
        let tol = 1e-12 * (reg.mu1 * f.abs() + reg.psi1 + g2 + x2 + reg.mu2 * f.abs() + reg.psi2);
        if g2 + tol < lower || x2 > upper + tol {
            out.violations += 1;
        }
        if g2 > 0.0 {
            out.worst = out.worst.max(lower / g2);
        }
        if upper > 0.0 {
            out.worst = out.worst.max(x2 / upper);
        }
    }
    out
}

/// Largest `‖∇f − ∇_h f‖ / ‖∇f‖` between analytic and central-difference
/// gradients over random points in the box.
pub fn finite_difference_error<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    half_width: f64,
    n_points: usize,
    h: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = obj.dim();
    let mut worst = 0.0f64;
    for _ in 0..n_points {
        let x = uniform_point(&mut rng, d, half_width);
        let g = obj.full_gradient(&x);
        let fd = finite_difference_gradient(obj, &x, h);
        let gn = norm(&g);
        if gn > 0.0 {
            worst = worst.max(dist_sq(&g, &fd).sqrt() / gn);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::make_quadratic;

    #[test]
    fn quadratic_passes_everything() {
        let (q, meta) = make_quadratic(5, 0.7).unwrap();
        assert!(decomposition_error(&q, 10.0, 50, 1) <= 1e-12);
        assert!(check_grad_lipschitz(&q, meta.grad_lipschitz, 10.0, 50, 2).passed());
        assert!(check_regularization(&q, &meta.regularization.unwrap(), 10.0, 50, 3).passed());
    }

    #[test]
    fn too_small_lipschitz_is_caught() {
        let (q, _) = make_quadratic(3, 1.0).unwrap();
        let c = check_grad_lipschitz(&q, 1.0, 1.0, 20, 4);
        assert_eq!(c.violations, 20);
        assert!((c.worst - 2.0).abs() < 1e-12);
    }
}
