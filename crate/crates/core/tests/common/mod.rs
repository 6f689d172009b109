#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use playbook::acquisition::{uniform_points, AcqMaxBudget};
use playbook::gp::{matern52_ard, GpModel, KernelHyperparams};
use rand::Rng;

/// Posterior and marginal likelihood from an explicitly inverted covariance matrix.
pub struct DenseOracle {
    inputs: Vec<Vec<f64>>,
    hp: KernelHyperparams,
    k_inv: DMatrix<f64>,
    alpha: DVector<f64>,
    pub lml: f64,
}

impl DenseOracle {
    /// `diag` is added to the kernel diagonal (noise plus any jitter).
    pub fn new(inputs: &[Vec<f64>], targets: &[f64], hp: &KernelHyperparams, diag: f64) -> Self {
        let n = inputs.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            matern52_ard(&inputs[i], &inputs[j], hp).unwrap() + if i == j { diag } else { 0.0 }
        });
        let det = k.clone().lu().determinant();
        let k_inv = k.try_inverse().expect("invertible covariance");
        let y = DVector::from_column_slice(targets);
        let alpha = &k_inv * &y;
        let lml = -0.5 * y.dot(&alpha)
            - 0.5 * det.ln()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Self {
            inputs: inputs.to_vec(),
            hp: hp.clone(),
            k_inv,
            alpha,
            lml,
        }
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|xi| matern52_ard(x, xi, &self.hp).unwrap()),
        )
    }

    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let kx = self.cross(x);
        let mean = kx.dot(&self.alpha);
        let var = self.hp.signal_variance() - kx.dot(&(&self.k_inv * &kx));
        (mean, var)
    }

    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        matern52_ard(a, b, &self.hp).unwrap() - self.cross(a).dot(&(&self.k_inv * self.cross(b)))
    }
}

pub fn random_point<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    uniform_points(d, 1, rng).pop().unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// 1-D model that is flat near both ends of the domain and oscillates in the middle.
///
/// Busy locations sit in the unexplored flat stretches at -1 and 1.
pub fn flat_boundary_model() -> (GpModel, Vec<Vec<f64>>) {
    let data = [
        (-0.55, 0.0),
        (-0.2, 0.0),
        (-0.07, 1.0),
        (0.07, 0.0),
        (0.2, 1.0),
        (0.55, 0.0),
    ];
    let hp = KernelHyperparams::new(1.0, vec![0.15]).unwrap();
    let model = GpModel::new(
        data.iter().map(|d| vec![d.0]).collect(),
        data.iter().map(|d| d.1).collect(),
        hp,
        1e-6,
    )
    .unwrap();
    (model, vec![vec![-1.0], vec![1.0]])
}

/// 1-D model with a single clear acquisition peak.
pub fn single_peak_model() -> GpModel {
    let data = [
        (-0.8, 0.5),
        (-0.4, 0.2),
        (0.0, -0.6),
        (0.5, 0.4),
        (0.9, 0.8),
    ];
    let hp = KernelHyperparams::new(1.0, vec![0.3]).unwrap();
    GpModel::new(
        data.iter().map(|d| vec![d.0]).collect(),
        data.iter().map(|d| d.1).collect(),
        hp,
        1e-6,
    )
    .unwrap()
}

pub fn small_budget() -> AcqMaxBudget {
    AcqMaxBudget {
        n_random: 500,
        ..AcqMaxBudget::default()
    }
}
