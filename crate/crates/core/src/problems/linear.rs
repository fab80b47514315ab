use super::data::Dataset;
use super::FiniteSumProblem;
use crate::error::{Error, Result};

/// `log(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn accuracy(ds: &Dataset, x: &[f64]) -> f64 {
    let hits = (0..ds.len())
        .filter(|&i| {
            let score = ds.features.row_dot(i, x);
            (score >= 0.0) == (ds.labels[i] > 0.0)
        })
        .count();
    hits as f64 / ds.len() as f64
}

/// `fᵢ(x) = log(1 + exp(−bᵢ aᵢᵀx)) + (l2/2)‖x‖²`
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    data: Dataset,
    l2: f64,
    validation: Option<Dataset>,
    lipschitz: f64,
}

impl LogisticRegression {
    pub fn new(data: Dataset, l2: f64) -> Result<Self> {
        data.require_binary()?;
        if data.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::InvalidInput(format!("l2 must be finite and >= 0, got {l2}")));
        }
        // σ'(z) ≤ 1/4
        let lipschitz = 0.25 * data.gram_spectral_norm() + l2;
        Ok(Self { data, l2, validation: None, lipschitz })
    }

    pub fn with_validation(mut self, validation: Dataset) -> Result<Self> {
        validation.require_binary()?;
        if validation.dim() > self.data.dim() {
            return Err(Error::DimensionMismatch { expected: self.data.dim(), got: validation.dim() });
        }
        self.validation = Some(validation);
        Ok(self)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }
}

impl FiniteSumProblem for LogisticRegression {
    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn sample_loss(&self, i: usize, x: &[f64]) -> f64 {
        let margin = self.data.labels[i] * self.data.features.row_dot(i, x);
        softplus(-margin) + 0.5 * self.l2 * crate::linalg::dot(x, x)
    }

    fn add_sample_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let b = self.data.labels[i];
        let margin = b * self.data.features.row_dot(i, x);
        self.data.features.row_axpy(i, -weight * b * sigmoid(-margin), out);
        if self.l2 != 0.0 {
            crate::linalg::axpy(weight * self.l2, x, out);
        }
    }

    fn validation_metric(&self, x: &[f64]) -> Option<f64> {
        self.validation.as_ref().map(|v| accuracy(v, x))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }
}

/// Nonconvex sigmoid-loss SVM, `fᵢ(x) = 1 − tanh(bᵢ aᵢᵀx)`.
#[derive(Debug, Clone)]
pub struct SigmoidSvm {
    data: Dataset,
    validation: Option<Dataset>,
    lipschitz: f64,
}

impl SigmoidSvm {
    pub fn new(data: Dataset) -> Result<Self> {
        data.require_binary()?;
        if data.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        // |d²/dz² tanh z| ≤ 4/(3√3)
        let lipschitz = 4.0 / (3.0 * 3f64.sqrt()) * data.gram_spectral_norm();
        Ok(Self { data, validation: None, lipschitz })
    }

    pub fn with_validation(mut self, validation: Dataset) -> Result<Self> {
        validation.require_binary()?;
        self.validation = Some(validation);
        Ok(self)
    }
}

impl FiniteSumProblem for SigmoidSvm {
    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn sample_loss(&self, i: usize, x: &[f64]) -> f64 {
        1.0 - (self.data.labels[i] * self.data.features.row_dot(i, x)).tanh()
    }

    fn add_sample_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let b = self.data.labels[i];
        let t = (b * self.data.features.row_dot(i, x)).tanh();
        self.data.features.row_axpy(i, -weight * b * (1.0 - t * t), out);
    }

    fn validation_metric(&self, x: &[f64]) -> Option<f64> {
        self.validation.as_ref().map(|v| accuracy(v, x))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }
}
