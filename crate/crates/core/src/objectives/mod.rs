//! Finite-sum objectives `f(x) = (1/n) Σᵢ fᵢ(x)` and a zoo of analytically
//! characterized instances.
//!
//! Every zoo member ships an [`ObjectiveMetadata`] with the constants the theory
//! layer needs (gradient Lipschitz constant, strict-saddle constant, the
//! regularization pairs `(μ₁, ψ₁)`, `(μ₂, ψ₂)`). The spot-check helpers in
//! [`checks`] confront those declarations with random sampling.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod checks;
mod classifier;
mod quadratic;
mod sigmoid;

pub use classifier::{
    make_binary_classifier, make_binary_classifier_with, BinaryClassifier, ClassifierOptions,
    Dataset, Split,
};
pub use quadratic::{make_quadratic, make_saddle_quadratic, Quadratic, SaddleQuadratic};
pub use sigmoid::{make_sigmoid_net, SigmoidNet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("invalid dimension d={d}: {reason}")]
    InvalidDimension { d: usize, reason: &'static str },
    #[error("invalid spectrum: neg_eig={neg_eig} and pos_eig={pos_eig} must both be positive")]
    InvalidSpectrum { neg_eig: f64, pos_eig: f64 },
    #[error("invalid regularizer: tikhonov gamma must be positive, got {0}")]
    InvalidRegularizer(f64),
    #[error("dataset too small: {0} samples, need at least 10")]
    DatasetTooSmall(usize),
    #[error("matrix must be non-empty with rows of equal length")]
    BadMatrix,
    #[error("dataset csv error at line {line}: {message}")]
    DatasetCsv { line: u64, message: String },
    #[error("io error: {0}")]
    Io(String),
}

/// A finite-sum objective. Implementations are immutable after construction and
/// safe to evaluate from many threads at once.
pub trait FiniteSumObjective: Send + Sync {
    /// Number of components `n`.
    fn num_components(&self) -> usize;

    /// Ambient dimension `d`.
    fn dim(&self) -> usize;

    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    /// Accumulates `weight · ∇fᵢ(x)` into `out`.
    fn add_component_gradient(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]);

    fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.add_component_gradient(i, x, 1.0, &mut g);
        g
    }

    fn full_value(&self, x: &[f64]) -> f64 {
        let n = self.num_components();
        (0..n).map(|i| self.component_value(i, x)).sum::<f64>() / n as f64
    }

    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let n = self.num_components();
        let w = 1.0 / n as f64;
        for i in 0..n {
            self.add_component_gradient(i, x, w, out);
        }
    }

    fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.full_gradient_into(x, &mut g);
        g
    }

    /// Hessian-vector product `∇²f(x)·v`, when available in closed form.
    fn hessian_vec(&self, _x: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Where a declared constant comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    Analytic,
    Empirical,
}

/// Constants of `‖∇f(x)‖² ≥ μ₁f(x) − ψ₁` and `‖x‖² ≤ μ₂f(x) + ψ₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub mu1: f64,
    pub psi1: f64,
    pub mu2: f64,
    pub psi2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub point: Vec<f64>,
    pub min_hessian_eig: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveMetadata {
    /// Gradient Lipschitz constant `L` (componentwise worst case for finite sums).
    pub grad_lipschitz: f64,
    pub lipschitz_source: ConstantSource,
    pub hessian_lipschitz: Option<f64>,
    pub strict_saddle_q: Option<f64>,
    pub regularization: Option<Regularization>,
    pub known_min_value: Option<f64>,
    pub known_fsps: Vec<StationaryPoint>,
    /// Half-width of the box `[-b, b]^d` used for randomized spot checks.
    pub check_box: f64,
}

/// Objective selection by identifier in experiment config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Quadratic {
        d: usize,
        scale: f64,
    },
    SaddleQuadratic {
        d: usize,
        neg_eig: f64,
        pos_eig: f64,
    },
    /// `σ(Ax)·1 + γ‖x‖² + C`; `A` is given explicitly or drawn with i.i.d.
    /// standard normal entries from `matrix_seed`.
    SigmoidNet {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        rows: usize,
        #[serde(default)]
        cols: usize,
        #[serde(default)]
        matrix_seed: u64,
        gamma: f64,
        #[serde(default)]
        offset: f64,
    },
    BinaryClassifier {
        n_samples: usize,
        hidden: [usize; 2],
        data_seed: u64,
        #[serde(default)]
        lipschitz_pairs: Option<usize>,
    },
}

/// A built objective together with its metadata.
#[derive(Clone)]
pub struct Problem {
    pub objective: Arc<dyn FiniteSumObjective>,
    pub metadata: ObjectiveMetadata,
    pub classifier: Option<Arc<BinaryClassifier>>,
}

impl ObjectiveSpec {
    /// Short identifier recorded in trace and verdict sidecars.
    pub fn id(&self) -> String {
        match self {
            ObjectiveSpec::Quadratic { d, scale } => format!("quadratic(d={d},scale={scale})"),
            ObjectiveSpec::SaddleQuadratic { d, neg_eig, pos_eig } => {
                format!("saddle_quadratic(d={d},neg_eig={neg_eig},pos_eig={pos_eig})")
            }
            ObjectiveSpec::SigmoidNet {
                matrix,
                rows,
                cols,
                matrix_seed,
                gamma,
                offset,
            } => match matrix {
                Some(m) => format!(
                    "sigmoid_net(explicit {}x{},gamma={gamma},offset={offset})",
                    m.len(),
                    m.first().map_or(0, |r| r.len())
                ),
                None => format!(
                    "sigmoid_net({rows}x{cols},seed={matrix_seed},gamma={gamma},offset={offset})"
                ),
            },
            ObjectiveSpec::BinaryClassifier {
                n_samples,
                hidden,
                data_seed,
                ..
            } => format!(
                "binary_classifier(n={n_samples},hidden={}x{},data_seed={data_seed})",
                hidden[0], hidden[1]
            ),
        }
    }

    pub fn build(&self) -> Result<Problem, ObjectiveError> {
        match self {
            ObjectiveSpec::Quadratic { d, scale } => {
                let (obj, meta) = make_quadratic(*d, *scale)?;
                Ok(Problem {
                    objective: Arc::new(obj),
                    metadata: meta,
                    classifier: None,
                })
            }
            ObjectiveSpec::SaddleQuadratic { d, neg_eig, pos_eig } => {
                let (obj, meta) = make_saddle_quadratic(*d, *neg_eig, *pos_eig)?;
                Ok(Problem {
                    objective: Arc::new(obj),
                    metadata: meta,
                    classifier: None,
                })
            }
            ObjectiveSpec::SigmoidNet {
                matrix,
                rows,
                cols,
                matrix_seed,
                gamma,
                offset,
            } => {
                let a = match matrix {
                    Some(m) => m.clone(),
                    None => sigmoid::random_matrix(*rows, *cols, *matrix_seed),
                };
                let (obj, meta) = make_sigmoid_net(a, *gamma, *offset)?;
                Ok(Problem {
                    objective: Arc::new(obj),
                    metadata: meta,
                    classifier: None,
                })
            }
            ObjectiveSpec::BinaryClassifier {
                n_samples,
                hidden,
                data_seed,
                lipschitz_pairs,
            } => {
                let mut opts = ClassifierOptions::new(*n_samples, (hidden[0], hidden[1]), *data_seed);
                if let Some(p) = lipschitz_pairs {
                    opts.lipschitz_pairs = *p;
                }
                let (obj, meta, _) = make_binary_classifier_with(&opts)?;
                let obj = Arc::new(obj);
                Ok(Problem {
                    objective: obj.clone(),
                    metadata: meta,
                    classifier: Some(obj),
                })
            }
        }
    }
}

/// Central-difference gradient `(f(x+h·eⱼ) − f(x−h·eⱼ)) / 2h`, coordinate by coordinate.
pub fn finite_difference_gradient<O: FiniteSumObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + h;
            let up = obj.full_value(&probe);
            probe[j] = x[j] - h;
            let down = obj.full_value(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant;
    impl FiniteSumObjective for Constant {
        fn num_components(&self) -> usize {
            3
        }
        fn dim(&self) -> usize {
            2
        }
        fn component_value(&self, _i: usize, _x: &[f64]) -> f64 {
            4.2
        }
        fn add_component_gradient(&self, _i: usize, _x: &[f64], _w: f64, _out: &mut [f64]) {}
    }

    #[test]
    fn fd_of_constant_is_zero() {
        let g = finite_difference_gradient(&Constant, &[0.3, -1.0], 1e-5);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn fd_on_quadratic() {
        let (q, _) = make_quadratic(2, 1.0).unwrap();
        let g = finite_difference_gradient(&q, &[1.0, 1.0], 1e-5);
        for gi in g {
            assert!((gi - 2.0).abs() < 1e-8, "{gi}");
        }
    }

    #[test]
    fn spec_roundtrip_and_build() {
        let spec = ObjectiveSpec::Quadratic { d: 3, scale: 0.5 };
        let js = serde_json::to_string(&spec).unwrap();
        assert!(js.contains("\"kind\":\"quadratic\""));
        let back: ObjectiveSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, spec);
        let p = back.build().unwrap();
        assert_eq!(p.objective.dim(), 3);
        assert_eq!(p.objective.full_value(&[0.0; 3]), 0.0);
    }

    #[test]
    fn sigmoid_spec_from_json() {
        let js = r#"{"kind":"sigmoid_net","rows":4,"cols":3,"matrix_seed":9,"gamma":0.1}"#;
        let spec: ObjectiveSpec = serde_json::from_str(js).unwrap();
        let p = spec.build().unwrap();
        assert_eq!(p.objective.dim(), 3);
        assert_eq!(p.objective.num_components(), 4);
    }
}
