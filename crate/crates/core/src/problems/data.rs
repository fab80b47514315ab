use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Feature storage: dense row-major or compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense { dim: usize, values: Vec<f64> },
    Sparse { dim: usize, indptr: Vec<usize>, indices: Vec<usize>, values: Vec<f64> },
}

impl Features {
    pub fn dim(&self) -> usize {
        match self {
            Features::Dense { dim, .. } | Features::Sparse { dim, .. } => *dim,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Features::Dense { dim, values } => {
                if *dim == 0 {
                    0
                } else {
                    values.len() / dim
                }
            }
            Features::Sparse { indptr, .. } => indptr.len() - 1,
        }
    }

    /// Row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match self {
            Features::Dense { dim, values } => {
                Box::new(values[i * dim..(i + 1) * dim].iter().copied().enumerate())
            }
            Features::Sparse { indptr, indices, values, .. } => {
                let r = indptr[i]..indptr[i + 1];
                Box::new(indices[r.clone()].iter().copied().zip(values[r].iter().copied()))
            }
        }
    }

    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        match self {
            Features::Dense { dim, values } => crate::linalg::dot(&values[i * dim..(i + 1) * dim], x),
            Features::Sparse { indptr, indices, values, .. } => {
                let r = indptr[i]..indptr[i + 1];
                indices[r.clone()].iter().zip(&values[r]).map(|(&j, v)| v * x[j]).sum()
            }
        }
    }

    /// `out += w · aᵢ`
    #[inline]
    pub fn row_axpy(&self, i: usize, w: f64, out: &mut [f64]) {
        match self {
            Features::Dense { dim, values } => crate::linalg::axpy(w, &values[i * dim..(i + 1) * dim], out),
            Features::Sparse { indptr, indices, values, .. } => {
                let r = indptr[i]..indptr[i + 1];
                for (&j, v) in indices[r.clone()].iter().zip(&values[r]) {
                    out[j] += w * v;
                }
            }
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v * v).sum()
    }

    fn values(&self) -> &[f64] {
        match self {
            Features::Dense { values, .. } | Features::Sparse { values, .. } => values,
        }
    }

    fn select(&self, rows: &[usize]) -> Features {
        match self {
            Features::Dense { dim, values } => Features::Dense {
                dim: *dim,
                values: rows.iter().flat_map(|&i| values[i * dim..(i + 1) * dim].iter().copied()).collect(),
            },
            Features::Sparse { dim, .. } => {
                let mut indptr = vec![0];
                let mut indices = Vec::new();
                let mut vals = Vec::new();
                for &i in rows {
                    for (j, v) in self.row(i) {
                        indices.push(j);
                        vals.push(v);
                    }
                    indptr.push(indices.len());
                }
                Features::Sparse { dim: *dim, indptr, indices, values: vals }
            }
        }
    }
}

/// Labelled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Features,
    pub labels: Vec<f64>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(features: Features, labels: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: features.rows(), got: labels.len() });
        }
        if let Some(i) = features.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite feature value at storage index {i}")));
        }
        if let Some(i) = labels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite label for sample {i}")));
        }
        Ok(Self { features, labels, provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// Errors unless every label is −1 or +1.
    pub fn require_binary(&self) -> Result<()> {
        match self.labels.iter().position(|&b| b != 1.0 && b != -1.0) {
            Some(i) => Err(Error::InvalidInput(format!(
                "{}: label {} of sample {} is outside {{-1, +1}}",
                self.provenance, self.labels[i], i
            ))),
            None => Ok(()),
        }
    }

    /// `+1` for `class`, `−1` for everything else.
    pub fn one_vs_rest(&self, class: f64) -> Dataset {
        Dataset {
            features: self.features.clone(),
            labels: self.labels.iter().map(|&b| if b == class { 1.0 } else { -1.0 }).collect(),
            provenance: format!("{} (class {class} vs rest)", self.provenance),
        }
    }

    /// Maps `{0, 1}` labels to `{−1, +1}`; other labels are left alone.
    pub fn zero_one_to_signed(mut self) -> Dataset {
        for b in &mut self.labels {
            if *b == 0.0 {
                *b = -1.0;
            }
        }
        self
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Shuffled `(train, held_out)` split with `fraction` of the rows held out.
    pub fn split(&self, fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        SplitMix64::new(seed).shuffle(&mut idx);
        let held = ((self.len() as f64) * fraction).round() as usize;
        let (v, t) = idx.split_at(held.min(self.len()));
        (self.subset(t), self.subset(v))
    }

    /// Largest eigenvalue of `(1/N) Aᵀ A`, by power iteration.
    pub fn gram_spectral_norm(&self) -> f64 {
        let n = self.dim();
        if n == 0 || self.is_empty() {
            return 0.0;
        }
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut est = 0.0;
        for _ in 0..2000 {
            let mut w = vec![0.0; n];
            for i in 0..self.len() {
                let a = self.features.row_dot(i, &v);
                self.features.row_axpy(i, a / self.len() as f64, &mut w);
            }
            let nw = crate::linalg::norm(&w);
            if nw == 0.0 {
                return 0.0;
            }
            w.iter_mut().for_each(|x| *x /= nw);
            let done = (nw - est).abs() <= 1e-13 * nw;
            est = nw;
            v = w;
            if done {
                break;
            }
        }
        est
    }

    /// Gaussian features `scale · N(0, I)` with labels from a random linear
    /// classifier; 5% of labels are flipped so the data is not separable.
    pub fn synthetic_binary(samples: usize, dim: usize, scale: f64, seed: u64) -> Dataset {
        let mut rng = SplitMix64::new(seed);
        let w = rng.normal_vec(dim);
        let mut values = Vec::with_capacity(samples * dim);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let a: Vec<f64> = rng.normal_vec(dim).into_iter().map(|v| scale * v).collect();
            let mut b = if crate::linalg::dot(&a, &w) >= 0.0 { 1.0 } else { -1.0 };
            if rng.next_f64() < 0.05 {
                b = -b;
            }
            values.extend_from_slice(&a);
            labels.push(b);
        }
        Dataset {
            features: Features::Dense { dim, values },
            labels,
            provenance: format!("synthetic-binary(samples={samples}, dim={dim}, scale={scale}, seed={seed})"),
        }
    }

    /// Sparse analogue of [`Dataset::synthetic_binary`]; each entry is
    /// present with probability `density`.
    pub fn synthetic_sparse_binary(samples: usize, dim: usize, density: f64, seed: u64) -> Dataset {
        let mut rng = SplitMix64::new(seed);
        let w = rng.normal_vec(dim);
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let mut score = 0.0;
            for (j, wj) in w.iter().enumerate() {
                if rng.next_f64() < density {
                    let v = rng.normal();
                    score += v * wj;
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
            labels.push(if score >= 0.0 { 1.0 } else { -1.0 });
        }
        Dataset {
            features: Features::Sparse { dim, indptr, indices, values },
            labels,
            provenance: format!("synthetic-sparse(samples={samples}, dim={dim}, density={density}, seed={seed})"),
        }
    }
}
