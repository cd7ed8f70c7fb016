use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sigmoid::sigmoid;
use super::{ConstantSource, FiniteSumObjective, ObjectiveError, ObjectiveMetadata};
use crate::linalg::dist_sq;

const INPUT_DIM: usize = 2;
const FLIP_FRACTION: f64 = 0.05;
/// Class means are `±BLOB_OFFSET·(1, 1)` with unit isotropic noise.
const BLOB_OFFSET: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Labelled 2-D samples; the first `n_train` rows form the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<[f64; INPUT_DIM]>,
    pub labels: Vec<f64>,
    pub n_train: usize,
}

#[derive(Serialize, Deserialize)]
struct DatasetRow {
    x0: f64,
    x1: f64,
    label: i8,
}

impl Dataset {
    /// Two Gaussian blobs with alternating labels and a fixed fraction of flips.
    pub fn two_blobs(n_train: usize, n_test: usize, seed: u64) -> Dataset {
        let total = n_train + n_test;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::with_capacity(total);
        let mut labels = Vec::with_capacity(total);
        for i in 0..total {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            let n0: f64 = StandardNormal.sample(&mut rng);
            let n1: f64 = StandardNormal.sample(&mut rng);
            features.push([y * BLOB_OFFSET + n0, y * BLOB_OFFSET + n1]);
            labels.push(y);
        }
        let flips = (FLIP_FRACTION * total as f64).round() as usize;
        for i in sample(&mut rng, total, flips) {
            labels[i] = -labels[i];
        }
        Dataset {
            features,
            labels,
            n_train,
        }
    }

    pub fn split(&self, split: Split) -> (&[[f64; INPUT_DIM]], &[f64]) {
        match split {
            Split::Train => (&self.features[..self.n_train], &self.labels[..self.n_train]),
            Split::Test => (&self.features[self.n_train..], &self.labels[self.n_train..]),
        }
    }

    /// Writes `x0,x1,label` rows. The split is not stored; pass `n_train` back on import.
    pub fn write_csv(&self, path: &Path) -> Result<(), ObjectiveError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| ObjectiveError::Io(e.to_string()))?;
        for (f, &y) in self.features.iter().zip(&self.labels) {
            w.serialize(DatasetRow {
                x0: f[0],
                x1: f[1],
                label: if y > 0.0 { 1 } else { -1 },
            })
            .map_err(|e| ObjectiveError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| ObjectiveError::Io(e.to_string()))
    }

    pub fn read_csv(path: &Path, n_train: usize) -> Result<Dataset, ObjectiveError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| ObjectiveError::Io(e.to_string()))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for row in r.deserialize::<DatasetRow>() {
            let row = row.map_err(|e| ObjectiveError::DatasetCsv {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            if row.label != 1 && row.label != -1 {
                return Err(ObjectiveError::DatasetCsv {
                    line: features.len() as u64 + 2,
                    message: format!("label must be -1 or +1, got {}", row.label),
                });
            }
            features.push([row.x0, row.x1]);
            labels.push(row.label as f64);
        }
        if n_train > features.len() {
            return Err(ObjectiveError::DatasetCsv {
                line: 0,
                message: format!("n_train={n_train} exceeds {} rows", features.len()),
            });
        }
        Ok(Dataset {
            features,
            labels,
            n_train,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOptions {
    pub n_samples: usize,
    pub hidden: (usize, usize),
    pub data_seed: u64,
    /// Random pairs used for the empirical gradient Lipschitz estimate.
    pub lipschitz_pairs: usize,
    /// Half-width of the initialization box.
    pub init_box: f64,
}

impl ClassifierOptions {
    pub fn new(n_samples: usize, hidden: (usize, usize), data_seed: u64) -> Self {
        ClassifierOptions {
            n_samples,
            hidden,
            data_seed,
            lipschitz_pairs: 10_000,
            init_box: 0.5,
        }
    }
}

/// Two-hidden-layer sigmoid network `2 → h1 → h2 → 1` with per-sample squared
/// loss `(out − y)²` on the training split.
///
/// Parameter layout: `W1 (h1×2), b1, W2 (h2×h1), b2, w3 (h2), b3`, row-major.
#[derive(Clone, Debug)]
pub struct BinaryClassifier {
    data: Dataset,
    h1: usize,
    h2: usize,
}

struct Forward {
    a1: Vec<f64>,
    a2: Vec<f64>,
    out: f64,
}

impl BinaryClassifier {
    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn hidden(&self) -> (usize, usize) {
        (self.h1, self.h2)
    }

    fn offsets(&self) -> [usize; 6] {
        let (h1, h2) = (self.h1, self.h2);
        let w1 = 0;
        let b1 = w1 + h1 * INPUT_DIM;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + h2;
        [w1, b1, w2, b2, w3, b3]
    }

    fn forward(&self, p: &[f64], u: &[f64; INPUT_DIM]) -> Forward {
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let a1: Vec<f64> = (0..self.h1)
            .map(|j| {
                let row = &p[w1 + j * INPUT_DIM..w1 + (j + 1) * INPUT_DIM];
                sigmoid(row[0] * u[0] + row[1] * u[1] + p[b1 + j])
            })
            .collect();
        let a2: Vec<f64> = (0..self.h2)
            .map(|k| {
                let row = &p[w2 + k * self.h1..w2 + (k + 1) * self.h1];
                sigmoid(crate::linalg::dot(row, &a1) + p[b2 + k])
            })
            .collect();
        let out = crate::linalg::dot(&p[w3..w3 + self.h2], &a2) + p[b3];
        Forward { a1, a2, out }
    }

    /// Network output for one input.
    pub fn predict_raw(&self, p: &[f64], u: &[f64; INPUT_DIM]) -> f64 {
        self.forward(p, u).out
    }

    /// Fraction of samples in `split` whose sign prediction (`out ≥ 0 → +1`) is wrong.
    pub fn misclassification_rate(&self, p: &[f64], split: Split) -> f64 {
        let (xs, ys) = self.data.split(split);
        if xs.is_empty() {
            return 0.0;
        }
        let wrong = xs
            .iter()
            .zip(ys)
            .filter(|(u, &y)| {
                let pred = if self.forward(p, u).out >= 0.0 { 1.0 } else { -1.0 };
                pred != y
            })
            .count();
        wrong as f64 / xs.len() as f64
    }

    /// Empirical gradient Lipschitz constant: max of `‖∇f(x)−∇f(y)‖/‖x−y‖` over
    /// random pairs in `[-half_width, half_width]^d`.
    pub fn estimate_grad_lipschitz(&self, pairs: usize, half_width: f64, seed: u64) -> f64 {
        let d = self.dim();
        (0..pairs)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-half_width..=half_width)).collect();
                let y: Vec<f64> = (0..d).map(|_| rng.random_range(-half_width..=half_width)).collect();
                let gx = self.full_gradient(&x);
                let gy = self.full_gradient(&y);
                (dist_sq(&gx, &gy) / dist_sq(&x, &y)).sqrt()
            })
            .reduce(|| 0.0, f64::max)
    }
}

pub fn make_binary_classifier(
    n_samples: usize,
    hidden: (usize, usize),
    data_seed: u64,
) -> Result<(BinaryClassifier, ObjectiveMetadata, Dataset), ObjectiveError> {
    make_binary_classifier_with(&ClassifierOptions::new(n_samples, hidden, data_seed))
}

pub fn make_binary_classifier_with(
    opts: &ClassifierOptions,
) -> Result<(BinaryClassifier, ObjectiveMetadata, Dataset), ObjectiveError> {
    if opts.n_samples < 10 {
        return Err(ObjectiveError::DatasetTooSmall(opts.n_samples));
    }
    if opts.hidden.0 == 0 || opts.hidden.1 == 0 {
        return Err(ObjectiveError::InvalidDimension {
            d: 0,
            reason: "hidden widths must be positive",
        });
    }
    // n_samples train rows plus a quarter as many held out: an 80/20 split.
    let data = Dataset::two_blobs(opts.n_samples, opts.n_samples / 4, opts.data_seed);
    let net = BinaryClassifier {
        data: data.clone(),
        h1: opts.hidden.0,
        h2: opts.hidden.1,
    };
    let l = net.estimate_grad_lipschitz(opts.lipschitz_pairs, opts.init_box, opts.data_seed ^ 0x9e37);
    let meta = ObjectiveMetadata {
        grad_lipschitz: l,
        lipschitz_source: ConstantSource::Empirical,
        hessian_lipschitz: None,
        strict_saddle_q: None,
        regularization: None,
        known_min_value: None,
        known_fsps: Vec::new(),
        check_box: opts.init_box,
    };
    Ok((net, meta, data))
}

impl FiniteSumObjective for BinaryClassifier {
    fn num_components(&self) -> usize {
        self.data.n_train
    }

    fn dim(&self) -> usize {
        self.offsets()[5] + 1
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let r = self.forward(x, &self.data.features[i]).out - self.data.labels[i];
        r * r
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let u = &self.data.features[i];
        let fw = self.forward(x, u);
        let dout = weight * 2.0 * (fw.out - self.data.labels[i]);
        out[b3] += dout;
        let mut dz2 = vec![0.0; self.h2];
        for k in 0..self.h2 {
            out[w3 + k] += dout * fw.a2[k];
            dz2[k] = dout * x[w3 + k] * fw.a2[k] * (1.0 - fw.a2[k]);
            out[b2 + k] += dz2[k];
        }
        let mut da1 = vec![0.0; self.h1];
        for k in 0..self.h2 {
            let row = w2 + k * self.h1;
            for j in 0..self.h1 {
                out[row + j] += dz2[k] * fw.a1[j];
                da1[j] += dz2[k] * x[row + j];
            }
        }
        for j in 0..self.h1 {
            let dz1 = da1[j] * fw.a1[j] * (1.0 - fw.a1[j]);
            out[b1 + j] += dz1;
            out[w1 + j * INPUT_DIM] += dz1 * u[0];
            out[w1 + j * INPUT_DIM + 1] += dz1 * u[1];
        }
    }
}

impl BinaryClassifier {
    /// Seeded uniform initialization in the initialization box.
    pub fn random_init(&self, half_width: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.dim()).map(|_| rng.random_range(-half_width..=half_width)).collect()
    }
}
