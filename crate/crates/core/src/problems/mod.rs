//! Finite-sum objectives `f(x) = (1/N) Σᵢ fᵢ(x)`.

mod data;
mod io;
mod linear;
mod synthetic;

pub use data::{Dataset, Features};
pub use io::{ReadError, parse_csv, parse_libsvm, read_dataset, DataFormat, ParseError};
pub use linear::{LogisticRegression, SigmoidSvm};
pub use synthetic::{Quadratic, SyntheticIllConditioned};

/// A differentiable finite sum. Implementations are immutable and every
/// per-sample evaluation is a pure function of `(i, x)`.
pub trait FiniteSumProblem: Send + Sync {
    fn num_samples(&self) -> usize;

    fn dim(&self) -> usize;

    fn sample_loss(&self, i: usize, x: &[f64]) -> f64;

    /// `out += weight · ∇fᵢ(x)`
    fn add_sample_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]);

    /// Held-out metric, e.g. validation accuracy.
    fn validation_metric(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Known Lipschitz constant of `∇f`, if the problem can bound it.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// A constant `f` never goes below.
    fn lower_bound(&self) -> f64;

    /// Mean loss over `batch`, summed in index order.
    fn batch_loss(&self, x: &[f64], batch: &[usize]) -> f64 {
        let w = 1.0 / batch.len() as f64;
        batch.iter().map(|&i| w * self.sample_loss(i, x)).sum()
    }

    /// Mean gradient over `batch`, accumulated in index order.
    fn batch_grad(&self, x: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        let w = 1.0 / batch.len() as f64;
        for &i in batch {
            self.add_sample_grad(i, x, w, &mut g);
        }
        g
    }

    fn full_loss(&self, x: &[f64]) -> f64 {
        let w = 1.0 / self.num_samples() as f64;
        (0..self.num_samples()).map(|i| w * self.sample_loss(i, x)).sum()
    }

    fn full_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        let w = 1.0 / self.num_samples() as f64;
        for i in 0..self.num_samples() {
            self.add_sample_grad(i, x, w, &mut g);
        }
        g
    }
}

impl<P: FiniteSumProblem + ?Sized> FiniteSumProblem for Box<P> {
    fn num_samples(&self) -> usize {
        (**self).num_samples()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn sample_loss(&self, i: usize, x: &[f64]) -> f64 {
        (**self).sample_loss(i, x)
    }
    fn add_sample_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        (**self).add_sample_grad(i, x, weight, out)
    }
    fn validation_metric(&self, x: &[f64]) -> Option<f64> {
        (**self).validation_metric(x)
    }
    fn lipschitz(&self) -> Option<f64> {
        (**self).lipschitz()
    }
    fn lower_bound(&self) -> f64 {
        (**self).lower_bound()
    }
}
