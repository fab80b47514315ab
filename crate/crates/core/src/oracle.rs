//! Brute-force reference computations used to check the fast paths.
//!
//! Nothing in here is called by the optimizers. Dense products are
//! `O(n³)` per update and the eigensolver is plain cyclic Jacobi.

use crate::error::{Error, Result};
use crate::memory::{CurvaturePair, LbfgsMemory};
use crate::problems::FiniteSumProblem;

/// Largest dimension the oracle accepts.
pub const MAX_ORACLE_DIM: usize = 200;

/// Dense symmetric `n × n` matrix, row major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn scaled_identity(n: usize, tau: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = tau;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// From row-major data; checks shape and symmetry.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: data.len() });
        }
        let m = Self { n, data };
        let asym = m.max_asymmetry();
        if asym > 1e-12 * (1.0 + m.max_abs()) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        self.data.chunks(self.n).map(|row| crate::linalg::dot(row, x)).collect()
    }

    /// General product `self · other`.
    pub fn matmul(&self, other: &DenseOperator) -> DenseOperator {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseOperator {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    fn symmetrize(&mut self) {
        for i in 0..self.n {
            for j in i + 1..self.n {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for DenseOperator {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseOperator {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Explicit `V̂ H V̂ᵀ + ρ̂ s sᵀ` with `V̂ = I − ρ̂ s ŷᵀ`.
pub fn dense_damped_update(h: &DenseOperator, pair: &CurvaturePair) -> Result<DenseOperator> {
    let n = h.dim();
    if pair.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: pair.dim() });
    }
    let rho = pair.rho_hat;
    let mut v = DenseOperator::scaled_identity(n, 1.0);
    for i in 0..n {
        for j in 0..n {
            v[(i, j)] -= rho * pair.s[i] * pair.y_hat[j];
        }
    }
    let mut out = v.matmul(h).matmul(&v.transpose());
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] += rho * pair.s[i] * pair.s[j];
        }
    }
    out.symmetrize();
    Ok(out)
}

/// Dense reconstruction of the operator held by `pairs` over `τ I`,
/// applying the oldest pair first.
pub fn dense_lbfgs<'a, I>(n: usize, tau: f64, pairs: I) -> Result<DenseOperator>
where
    I: IntoIterator<Item = &'a CurvaturePair>,
{
    if n > MAX_ORACLE_DIM {
        return Err(Error::InvalidInput(format!("oracle is capped at n = {MAX_ORACLE_DIM}, got {n}")));
    }
    pairs
        .into_iter()
        .try_fold(DenseOperator::scaled_identity(n, tau), |h, p| dense_damped_update(&h, p))
}

pub fn dense_from_memory(memory: &LbfgsMemory, n: usize) -> Result<DenseOperator> {
    dense_lbfgs(n, memory.tau(), memory.pairs())
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// `vectors[i]` pairs with `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops to
/// `1e-12 · ‖H‖_F`.
pub fn sym_eigen(h: &DenseOperator) -> Result<SymEigen> {
    let n = h.dim();
    let asym = h.max_asymmetry();
    if asym > 1e-12 * (1.0 + h.max_abs()) {
        return Err(Error::NotSymmetric(asym));
    }
    let mut a = h.clone();
    a.symmetrize();
    let mut v = DenseOperator::scaled_identity(n, 1.0);
    let target = 1e-12 * h.frobenius();
    let off = |a: &DenseOperator| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > target && sweeps < 100 {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    Ok(SymEigen {
        values: order.iter().map(|&i| a[(i, i)]).collect(),
        vectors: order.iter().map(|&i| (0..n).map(|k| v[(k, i)]).collect()).collect(),
        sweeps,
    })
}

/// Ascending eigenvalues.
pub fn sym_eigenvalues(h: &DenseOperator) -> Result<Vec<f64>> {
    sym_eigen(h).map(|e| e.values)
}

/// Central differences of the full objective, one coordinate at a time.
pub fn finite_diff_gradient<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = x[i];
            xp[i] = xi + h;
            let fp = problem.full_loss(&xp);
            xp[i] = xi - h;
            let fm = problem.full_loss(&xp);
            xp[i] = xi;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
