//! SVRG-style gradient correction and minibatch sampling.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::problems::FiniteSumProblem;
use crate::rng::SplitMix64;

/// Epoch snapshot `x̃` with its exact full gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochAnchor {
    pub x_anchor: Vec<f64>,
    pub full_grad: Vec<f64>,
    pub full_loss: f64,
    /// Samples drawn since the anchor was taken.
    pub samples_consumed: usize,
}

/// Takes a new anchor at `x`.
pub fn begin_epoch<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> Result<EpochAnchor> {
    if x.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: x.len() });
    }
    ensure_finite("x", x)?;
    let full_grad = problem.full_grad(x);
    let full_loss = problem.full_loss(x);
    ensure_finite("full gradient", &full_grad)?;
    if !full_loss.is_finite() {
        return Err(Error::InvalidInput(format!("full loss is {full_loss}")));
    }
    Ok(EpochAnchor { x_anchor: x.to_vec(), full_grad, full_loss, samples_consumed: 0 })
}

/// Assembles `g̃ = g(x, ξ) − g(x̃, ξ) + ∇f(x̃)` from a precomputed `g(x, ξ)`.
pub fn assemble_corrected<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    g_x: &[f64],
    anchor: &EpochAnchor,
    batch: &[usize],
) -> Vec<f64> {
    let g_anchor = problem.batch_grad(&anchor.x_anchor, batch);
    g_x.iter()
        .zip(&g_anchor)
        .zip(&anchor.full_grad)
        .map(|((a, b), c)| a - b + c)
        .collect()
}

/// `g̃ = g(x, ξ) − g(x̃, ξ) + ∇f(x̃)`, both minibatch terms over the same `ξ`.
pub fn corrected_gradient<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    anchor: &EpochAnchor,
    batch: &[usize],
) -> Result<Vec<f64>> {
    check_batch(batch, problem.num_samples())?;
    if x.len() != anchor.x_anchor.len() {
        return Err(Error::DimensionMismatch { expected: anchor.x_anchor.len(), got: x.len() });
    }
    let g_x = problem.batch_grad(x, batch);
    Ok(assemble_corrected(problem, &g_x, anchor, batch))
}

pub(crate) fn check_batch(batch: &[usize], n: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty minibatch".into()));
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidInput(format!("sample index {i} out of range for N = {n}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    WithReplacement,
    /// A fresh permutation each epoch, cut into consecutive batches.
    #[default]
    WithoutReplacement,
}

/// Seeded minibatch source. Batches have size `m` except the last one of
/// an epoch, which is truncated to `N − M`.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: SplitMix64,
    batch_size: usize,
    sampling: Sampling,
}

impl BatchSampler {
    pub fn new(seed: u64, batch_size: usize, sampling: Sampling) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(Self { rng: SplitMix64::derive(seed, 1), batch_size, sampling })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// All batches of one epoch over `n` samples; sizes sum to `n`.
    pub fn epoch(&mut self, n: usize) -> Vec<Vec<usize>> {
        let m = self.batch_size;
        match self.sampling {
            Sampling::WithoutReplacement => {
                let mut perm: Vec<usize> = (0..n).collect();
                self.rng.shuffle(&mut perm);
                perm.chunks(m).map(<[usize]>::to_vec).collect()
            }
            Sampling::WithReplacement => {
                let mut out = Vec::with_capacity(n.div_ceil(m));
                let mut consumed = 0;
                while consumed < n {
                    let size = m.min(n - consumed);
                    out.push((0..size).map(|_| self.rng.below(n)).collect());
                    consumed += size;
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_err;
    use crate::problems::{Dataset, LogisticRegression, Quadratic};

    fn small_problem() -> LogisticRegression {
        LogisticRegression::new(Dataset::synthetic_binary(6, 3, 1.0, 5), 0.1).unwrap()
    }

    #[test]
    fn anchor_of_quadratic() {
        let q = Quadratic::diagonal(vec![1.0, 1.0]);
        let a = begin_epoch(&q, &[1.0, 2.0]).unwrap();
        assert_eq!(a.full_grad, vec![1.0, 2.0]);
        assert_eq!(a.samples_consumed, 0);
    }

    #[test]
    fn correction_cancels_at_anchor() {
        let p = small_problem();
        let x = [0.3, -0.2, 0.9];
        let a = begin_epoch(&p, &x).unwrap();
        let g = corrected_gradient(&p, &x, &a, &[1, 4]).unwrap();
        assert_eq!(g, a.full_grad);
    }

    #[test]
    fn full_batch_gives_exact_gradient() {
        let p = small_problem();
        let a = begin_epoch(&p, &[0.1, 0.1, 0.1]).unwrap();
        let x = [1.0, -1.0, 0.5];
        let g = corrected_gradient(&p, &x, &a, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert!(rel_err(&g, &p.full_grad(&x)) < 1e-14);
    }

    #[test]
    fn batch_errors() {
        let p = small_problem();
        let a = begin_epoch(&p, &[0.0; 3]).unwrap();
        assert!(corrected_gradient(&p, &[0.0; 3], &a, &[]).is_err());
        assert!(corrected_gradient(&p, &[0.0; 3], &a, &[6]).is_err());
        assert!(begin_epoch(&p, &[0.0; 2]).is_err());
        assert!(begin_epoch(&p, &[f64::NAN; 3]).is_err());
    }

    #[test]
    fn without_replacement_covers_each_sample_once() {
        let mut s = BatchSampler::new(4, 3, Sampling::WithoutReplacement).unwrap();
        for _ in 0..5 {
            let ep = s.epoch(10);
            assert_eq!(ep.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
            let mut all: Vec<usize> = ep.concat();
            all.sort_unstable();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn with_replacement_budget() {
        let mut s = BatchSampler::new(4, 4, Sampling::WithReplacement).unwrap();
        let ep = s.epoch(10);
        assert_eq!(ep.iter().map(Vec::len).sum::<usize>(), 10);
        assert!(ep.iter().flatten().all(|&i| i < 10));
    }

    #[test]
    fn sampler_is_deterministic() {
        let a: Vec<_> = {
            let mut s = BatchSampler::new(77, 2, Sampling::WithoutReplacement).unwrap();
            (0..3).map(|_| s.epoch(9)).collect()
        };
        let b: Vec<_> = {
            let mut s = BatchSampler::new(77, 2, Sampling::WithoutReplacement).unwrap();
            (0..3).map(|_| s.epoch(9)).collect()
        };
        assert_eq!(a, b);
    }
}
