use super::FiniteSumProblem;
use crate::linalg::{axpy, dot, norm};
use crate::rng::SplitMix64;

/// `fᵢ(x) = ½ (x − cᵢ)ᵀ diag(a) (x − cᵢ)`
#[derive(Debug, Clone)]
pub struct Quadratic {
    diag: Vec<f64>,
    centers: Vec<Vec<f64>>,
}

impl Quadratic {
    /// A single sample centred at the origin: `f(x) = ½ xᵀ diag(a) x`.
    pub fn diagonal(diag: Vec<f64>) -> Self {
        let n = diag.len();
        Self { diag, centers: vec![vec![0.0; n]] }
    }

    pub fn with_centers(diag: Vec<f64>, centers: Vec<Vec<f64>>) -> Self {
        assert!(!centers.is_empty());
        assert!(centers.iter().all(|c| c.len() == diag.len()));
        Self { diag, centers }
    }

    /// Minimizer of the full objective: the mean of the centres.
    pub fn minimizer(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.diag.len()];
        for c in &self.centers {
            axpy(1.0 / self.centers.len() as f64, c, &mut m);
        }
        m
    }
}

impl FiniteSumProblem for Quadratic {
    fn num_samples(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn sample_loss(&self, i: usize, x: &[f64]) -> f64 {
        let c = &self.centers[i];
        0.5 * x.iter().zip(c).zip(&self.diag).map(|((xi, ci), a)| a * (xi - ci) * (xi - ci)).sum::<f64>()
    }

    fn add_sample_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let c = &self.centers[i];
        for j in 0..x.len() {
            out[j] += weight * self.diag[j] * (x[j] - c[j]);
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.diag.iter().fold(0.0, |m: f64, a| m.max(a.abs())))
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }
}

/// Rotated ill-conditioned quadratics blended with periodic nonconvex terms:
///
/// ```text
/// fᵢ(x) = (1 − m) · ½ (x − cᵢ)ᵀ A (x − cᵢ) + m · κ · (1 − cos(wᵢᵀx + φᵢ))
/// ```
///
/// `A = Q diag(d) Qᵀ` with a random rotation `Q` and `d` log-spaced on
/// `[1, cond]`, `‖wᵢ‖ = 1`. Every `∇fᵢ` is Lipschitz with constant
/// `(1 − m)·cond + m·κ` and `f ≥ 0`.
#[derive(Debug, Clone)]
pub struct SyntheticIllConditioned {
    n: usize,
    /// Row-major `A`.
    a: Vec<f64>,
    spectrum: Vec<f64>,
    centers: Vec<Vec<f64>>,
    dirs: Vec<Vec<f64>>,
    phases: Vec<f64>,
    mix: f64,
    amplitude: f64,
}

pub const DEFAULT_AMPLITUDE: f64 = 10.0;

impl SyntheticIllConditioned {
    pub fn new(n: usize, samples: usize, cond: f64, mix: f64, seed: u64) -> Self {
        Self::with_amplitude(n, samples, cond, mix, DEFAULT_AMPLITUDE, seed)
    }

    pub fn with_amplitude(n: usize, samples: usize, cond: f64, mix: f64, amplitude: f64, seed: u64) -> Self {
        assert!(n >= 2, "synthetic problem needs n >= 2");
        assert!(samples >= 1);
        assert!(cond >= 1.0, "cond must be >= 1");
        assert!((0.0..=1.0).contains(&mix), "mix must lie in [0, 1]");
        let mut rng = SplitMix64::new(seed);
        let spectrum: Vec<f64> = (0..n).map(|i| cond.powf(i as f64 / (n - 1) as f64)).collect();
        let q = random_rotation(n, &mut rng);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| q[k][i] * spectrum[k] * q[k][j]).sum();
            }
        }
        // exact symmetry
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (a[i * n + j] + a[j * n + i]);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let centers = (0..samples).map(|_| rng.normal_vec(n)).collect();
        let dirs = (0..samples)
            .map(|_| {
                let w = rng.normal_vec(n);
                let nw = norm(&w);
                w.into_iter().map(|v| v / nw).collect()
            })
            .collect();
        let phases = (0..samples).map(|_| rng.uniform(0.0, std::f64::consts::TAU)).collect();
        Self { n, a, spectrum, centers, dirs, phases, mix, amplitude }
    }

    /// Eigenvalues of the quadratic part before the `(1 − m)` weight.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Lipschitz constant of each `∇fᵢ`, hence of `∇f`.
    pub fn lipschitz_bound(&self) -> f64 {
        (1.0 - self.mix) * self.spectrum[self.n - 1] + self.mix * self.amplitude
    }

    fn a_times(&self, v: &[f64], weight: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o += weight * dot(&self.a[i * self.n..(i + 1) * self.n], v);
        }
    }
}

fn random_rotation(n: usize, rng: &mut SplitMix64) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v = rng.normal_vec(n);
        for r in &rows {
            let d = dot(r, &v);
            axpy(-d, r, &mut v);
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            rows.push(v);
        }
    }
    rows
}

impl FiniteSumProblem for SyntheticIllConditioned {
    fn num_samples(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn sample_loss(&self, i: usize, x: &[f64]) -> f64 {
        let r: Vec<f64> = x.iter().zip(&self.centers[i]).map(|(a, b)| a - b).collect();
        let mut ar = vec![0.0; self.n];
        self.a_times(&r, 1.0, &mut ar);
        let quad = 0.5 * dot(&r, &ar);
        let wave = 1.0 - (dot(&self.dirs[i], x) + self.phases[i]).cos();
        (1.0 - self.mix) * quad + self.mix * self.amplitude * wave
    }

    fn add_sample_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let r: Vec<f64> = x.iter().zip(&self.centers[i]).map(|(a, b)| a - b).collect();
        self.a_times(&r, weight * (1.0 - self.mix), out);
        if self.mix != 0.0 {
            let s = (dot(&self.dirs[i], x) + self.phases[i]).sin();
            axpy(weight * self.mix * self.amplitude * s, &self.dirs[i], out);
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz_bound())
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }
}
