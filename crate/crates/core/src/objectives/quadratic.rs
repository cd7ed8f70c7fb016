use super::{
    ConstantSource, FiniteSumObjective, ObjectiveError, ObjectiveMetadata, Regularization,
    StationaryPoint,
};

/// `f(x) = scale·‖x‖²`, split by coordinate into `fᵢ(x) = scale·d·xᵢ²`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    d: usize,
    scale: f64,
}

impl Quadratic {
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

pub fn make_quadratic(
    d: usize,
    scale: f64,
) -> Result<(Quadratic, ObjectiveMetadata), ObjectiveError> {
    if d == 0 {
        return Err(ObjectiveError::InvalidDimension {
            d,
            reason: "quadratic needs d >= 1",
        });
    }
    let meta = ObjectiveMetadata {
        // each component has curvature 2·scale·d along its coordinate
        grad_lipschitz: 2.0 * scale * d as f64,
        lipschitz_source: ConstantSource::Analytic,
        hessian_lipschitz: Some(0.0),
        strict_saddle_q: Some(2.0 * scale),
        regularization: Some(Regularization {
            mu1: 4.0 * scale,
            psi1: 0.0,
            mu2: 1.0 / scale,
            psi2: 0.0,
        }),
        known_min_value: Some(0.0),
        known_fsps: vec![StationaryPoint {
            point: vec![0.0; d],
            min_hessian_eig: 2.0 * scale,
        }],
        check_box: 10.0,
    };
    Ok((Quadratic { d, scale }, meta))
}

impl FiniteSumObjective for Quadratic {
    fn num_components(&self) -> usize {
        self.d
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        self.scale * self.d as f64 * x[i] * x[i]
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        out[i] += weight * 2.0 * self.scale * self.d as f64 * x[i];
    }

    fn full_value(&self, x: &[f64]) -> f64 {
        self.scale * crate::linalg::norm_sq(x)
    }

    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = 2.0 * self.scale * xi;
        }
    }

    fn hessian_vec(&self, _x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(v.iter().map(|vi| 2.0 * self.scale * vi).collect())
    }
}

/// `f(x) = ½(−neg_eig·x₁² + pos_eig·Σ_{j≥2} xⱼ²)`: a strict saddle at the origin.
#[derive(Clone, Debug)]
pub struct SaddleQuadratic {
    /// Diagonal of the Hessian.
    coeffs: Vec<f64>,
}

impl SaddleQuadratic {
    pub fn hessian_diagonal(&self) -> &[f64] {
        &self.coeffs
    }
}

pub fn make_saddle_quadratic(
    d: usize,
    neg_eig: f64,
    pos_eig: f64,
) -> Result<(SaddleQuadratic, ObjectiveMetadata), ObjectiveError> {
    if d < 2 {
        return Err(ObjectiveError::InvalidDimension {
            d,
            reason: "saddle quadratic needs d >= 2",
        });
    }
    if !(neg_eig > 0.0 && pos_eig > 0.0) {
        return Err(ObjectiveError::InvalidSpectrum { neg_eig, pos_eig });
    }
    let mut coeffs = vec![pos_eig; d];
    coeffs[0] = -neg_eig;
    let meta = ObjectiveMetadata {
        grad_lipschitz: neg_eig.max(pos_eig),
        lipschitz_source: ConstantSource::Analytic,
        hessian_lipschitz: Some(0.0),
        strict_saddle_q: Some(neg_eig.min(pos_eig)),
        regularization: None,
        known_min_value: None,
        known_fsps: vec![StationaryPoint {
            point: vec![0.0; d],
            min_hessian_eig: -neg_eig,
        }],
        check_box: 10.0,
    };
    Ok((SaddleQuadratic { coeffs }, meta))
}

impl FiniteSumObjective for SaddleQuadratic {
    fn num_components(&self) -> usize {
        self.coeffs.len()
    }

    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        0.5 * self.coeffs.len() as f64 * self.coeffs[i] * x[i] * x[i]
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        out[i] += weight * self.coeffs.len() as f64 * self.coeffs[i] * x[i];
    }

    fn full_value(&self, x: &[f64]) -> f64 {
        0.5 * self.coeffs.iter().zip(x).map(|(c, xi)| c * xi * xi).sum::<f64>()
    }

    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, c), xi) in out.iter_mut().zip(&self.coeffs).zip(x) {
            *o = c * xi;
        }
    }

    fn hessian_vec(&self, _x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(self.coeffs.iter().zip(v).map(|(c, vi)| c * vi).collect())
    }
}
