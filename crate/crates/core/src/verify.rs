//! Randomized property suites checked against the dense oracle.
//!
//! Each suite draws its cases from a [`SplitMix64`] stream derived from
//! [`VerifyOptions::seed`], so a report is reproducible from its seed.
//!
//! | suite           | property                                                         | tolerance        |
//! |-----------------|------------------------------------------------------------------|------------------|
//! | `containment`   | chained bounds contain the dense spectrum, `n ≤ 20`, `p ≤ 8`     | `1e-8` absolute  |
//! | `single-update` | single-update bounds contain the spectrum of `μ V Vᵀ + ρ s sᵀ`   | `1e-8` absolute  |
//! | `equivalence`   | two-loop direction equals `−H g` from the dense operator         | `1e-10` relative |
//! | `curvature`     | damped pairs satisfy `sᵀŷ ≥ η‖s‖²/τ`; undamped pairs keep `y`    | `1e-12` absolute |
//! | `gradient`      | analytic gradients match central differences                     | `1e-6` relative  |

use std::time::{Duration, Instant};

use crate::linalg::{dot, norm, rel_err};
use crate::memory::{damp_pair, ClampMode, CurvaturePair, LbfgsMemory, ScalingRule, DEFAULT_ETA};
use crate::oracle::{dense_damped_update, dense_lbfgs, finite_diff_gradient, sym_eigenvalues, DenseOperator};
use crate::problems::{
    Dataset, FiniteSumProblem, LogisticRegression, Quadratic, SigmoidSvm, SyntheticIllConditioned,
};
use crate::rng::SplitMix64;
use crate::spectrum::{chained_step, single_update_bounds, chained_bounds, LgMode};

pub const CONTAINMENT_TOL: f64 = 1e-8;
pub const EQUIVALENCE_TOL: f64 = 1e-10;
pub const CURVATURE_TOL: f64 = 1e-12;
pub const GRADIENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub containment_cases: usize,
    pub single_update_cases: usize,
    pub equivalence_cases: usize,
    pub curvature_cases: usize,
    /// Random points per shipped problem.
    pub gradient_points: usize,
    /// Range `τᵢ` is drawn from (log-uniform) in the bound and equivalence suites.
    pub tau_range: (f64, f64),
    /// Shrinks the checked interval to `[λ_k·f, Λ_k/f]`. Values above 1 are
    /// a deliberate fault used to confirm the containment suite can fail.
    pub bound_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            containment_cases: 1000,
            single_update_cases: 1000,
            equivalence_cases: 500,
            curvature_cases: 10_000,
            gradient_points: 100,
            tau_range: (1e-2, 1e2),
            bound_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest amount by which a case exceeded its tolerance, in the
    /// suite's own units. Negative when every case passed, giving the margin.
    pub worst_excess: f64,
    pub first_failure: Option<String>,
    pub elapsed: Duration,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self { name, cases: 0, failures: 0, worst_excess: f64::NEG_INFINITY, first_failure: None, elapsed: Duration::ZERO }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }

    fn record(&mut self, excess: f64, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if excess.is_nan() || excess > 0.0 {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
        if excess > self.worst_excess || excess.is_nan() {
            self.worst_excess = excess;
        }
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<14} {} {:>6}/{:<6} worst excess {:+.3e}  ({:.2?})",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.cases - self.failures,
            self.cases,
            self.worst_excess,
            self.elapsed
        )?;
        if let Some(msg) = &self.first_failure {
            write!(f, "\n    first failure: {msg}")?;
        }
        Ok(())
    }
}

fn timed(mut report: SuiteReport, start: Instant) -> SuiteReport {
    report.elapsed = start.elapsed();
    report
}

/// Raw pair with a random linear gradient map, so `sᵀy` takes either sign.
fn random_raw_pair(n: usize, rng: &mut SplitMix64) -> (Vec<f64>, Vec<f64>) {
    let s_scale = rng.log_uniform(1e-2, 1e2);
    let s: Vec<f64> = rng.normal_vec(n).into_iter().map(|v| s_scale * v).collect();
    let a_scale = rng.log_uniform(1e-2, 1e2) / (n as f64).sqrt();
    let y = (0..n)
        .map(|_| {
            let row = rng.normal_vec(n);
            a_scale * dot(&row, &s)
        })
        .collect();
    (s, y)
}

/// A random damped memory: `(pairs, τ_now, η)`.
pub fn random_memory(
    n: usize,
    p: usize,
    tau_range: (f64, f64),
    rng: &mut SplitMix64,
) -> (Vec<CurvaturePair>, f64, f64) {
    let eta = rng.uniform(0.05, 0.95);
    let mut pairs = Vec::with_capacity(p);
    while pairs.len() < p {
        let (s, y) = random_raw_pair(n, rng);
        let tau = rng.log_uniform(tau_range.0, tau_range.1);
        if let Ok(pair) = damp_pair(&s, &y, tau, eta) {
            pairs.push(pair);
        }
    }
    let tau_now = rng.log_uniform(tau_range.0, tau_range.1);
    (pairs, tau_now, eta)
}

fn spectrum_excess(lo: f64, hi: f64, eig_lo: f64, eig_hi: f64, tol: f64) -> f64 {
    ((lo - tol) - eig_lo).max(eig_hi - (hi + tol))
}

/// Chained bounds with `L_g` fixed at the true largest `‖yᵢ‖/‖sᵢ‖`.
pub fn containment_suite(opts: &VerifyOptions) -> SuiteReport {
    let start = Instant::now();
    let mut rng = SplitMix64::derive(opts.seed, 10);
    let mut report = SuiteReport::new("containment");
    for case in 0..opts.containment_cases {
        let n = 2 + rng.below(19);
        let p = 1 + rng.below(8);
        let (pairs, tau_now, eta) = random_memory(n, p, opts.tau_range, &mut rng);
        let lg = pairs.iter().map(|q| q.lg_local).fold(0.0, f64::max);
        let b = chained_bounds(&pairs, tau_now, eta, LgMode::Fixed(lg));
        let (lo, hi) = (b.lambda_lo * opts.bound_scale, b.lambda_hi / opts.bound_scale);
        let eig = dense_lbfgs(n, tau_now, &pairs).and_then(|h| sym_eigenvalues(&h));
        let Ok(eig) = eig else {
            report.record(f64::NAN, || format!("case {case}: oracle failed"));
            continue;
        };
        let (e_lo, e_hi) = (eig[0], eig[n - 1]);
        report.record(spectrum_excess(lo, hi, e_lo, e_hi, CONTAINMENT_TOL), || {
            format!("case {case}: n={n} p={p} spectrum [{e_lo:e}, {e_hi:e}] not in [{lo:e}, {hi:e}]")
        });
    }
    timed(report, start)
}

/// Random symmetric matrix with spectrum in `[lo, hi]`, both ends attained.
fn random_spd(n: usize, lo: f64, hi: f64, rng: &mut SplitMix64) -> DenseOperator {
    let mut d: Vec<f64> = (0..n).map(|_| rng.log_uniform(lo, hi)).collect();
    d[0] = lo;
    d[n - 1] = hi;
    let mut h = DenseOperator::from_diag(&d);
    // random reflections keep the spectrum exactly
    for _ in 0..3 {
        let u = rng.normal_vec(n);
        let uu = dot(&u, &u);
        let mut r = DenseOperator::scaled_identity(n, 1.0);
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] -= 2.0 * u[i] * u[j] / uu;
            }
        }
        h = r.matmul(&h).matmul(&r);
    }
    let sym: Vec<f64> = (0..n * n).map(|k| 0.5 * (h.as_slice()[k] + h.as_slice()[(k % n) * n + k / n])).collect();
    DenseOperator::from_rows(n, sym).expect("symmetrized")
}

/// Single-update bounds for `A = μ V Vᵀ + ρ s sᵀ` at `μ₁` and at `μ₂`, and
/// the chained step for a general `H` with spectrum in `[μ₁, μ₂]`.
pub fn single_update_suite(opts: &VerifyOptions) -> SuiteReport {
    let start = Instant::now();
    let mut rng = SplitMix64::derive(opts.seed, 11);
    let mut report = SuiteReport::new("single-update");

    // hand value: γ = L_y = μ = 1 gives (0.5, 1.5)
    let hand = single_update_bounds(1.0, 1.0, 1.0);
    let hand_ok = matches!(hand, Ok((lo, hi)) if lo == 0.5 && hi == 1.5);
    report.record(if hand_ok { f64::NEG_INFINITY } else { f64::INFINITY }, || format!("hand value (1, 1, 1) gave {hand:?}"));

    for case in 0..opts.single_update_cases {
        let n = 2 + rng.below(19);
        let (pairs, _, _) = random_memory(n, 1, opts.tau_range, &mut rng);
        let pair = &pairs[0];
        let ss = dot(&pair.s, &pair.s);
        let gamma = dot(&pair.s, &pair.y_hat) / ss * rng.uniform(0.5, 1.0);
        let l_y = norm(&pair.y_hat) / ss.sqrt() * rng.uniform(1.0, 2.0);
        let mu1 = rng.log_uniform(opts.tau_range.0, opts.tau_range.1);
        let mu2 = mu1 * rng.log_uniform(1.0, 1e2);
        for (which, mu) in [("A1", mu1), ("A2", mu2)] {
            let a = DenseOperator::scaled_identity(n, mu);
            let eig = dense_damped_update(&a, pair).and_then(|h| sym_eigenvalues(&h));
            let bounds = single_update_bounds(gamma, l_y, mu);
            let (Ok(eig), Ok((lo, hi))) = (eig, bounds) else {
                report.record(f64::NAN, || format!("case {case} {which}: evaluation failed"));
                continue;
            };
            let (lo, hi) = (lo * opts.bound_scale, hi / opts.bound_scale);
            report.record(spectrum_excess(lo, hi, eig[0], eig[n - 1], CONTAINMENT_TOL), || {
                format!("case {case} {which}: n={n} μ={mu:e} spectrum [{:e}, {:e}] not in [{lo:e}, {hi:e}]", eig[0], eig[n - 1])
            });
        }
        let h = random_spd(n, mu1, mu2, &mut rng);
        let eig = dense_damped_update(&h, pair).and_then(|h| sym_eigenvalues(&h));
        let Ok(eig) = eig else {
            report.record(f64::NAN, || format!("case {case} chained: oracle failed"));
            continue;
        };
        let (lo, hi) = chained_step(gamma, l_y, mu1, mu2);
        let (lo, hi) = (lo * opts.bound_scale, hi / opts.bound_scale);
        report.record(spectrum_excess(lo, hi, eig[0], eig[n - 1], CONTAINMENT_TOL), || {
            format!("case {case} chained: n={n} spectrum [{:e}, {:e}] not in [{lo:e}, {hi:e}]", eig[0], eig[n - 1])
        });
    }
    timed(report, start)
}

/// Two-loop direction against the dense operator, `n ≤ 50`, `p ≤ 10`.
pub fn equivalence_suite(opts: &VerifyOptions) -> SuiteReport {
    let start = Instant::now();
    let mut rng = SplitMix64::derive(opts.seed, 12);
    let mut report = SuiteReport::new("equivalence");
    let (lo, hi) = opts.tau_range;
    for case in 0..opts.equivalence_cases {
        let n = 2 + rng.below(49);
        let p = 1 + rng.below(10);
        let (pairs, tau_now, eta) = random_memory(n, p, opts.tau_range, &mut rng);
        let rule = ScalingRule::Clamped { lo, hi, mode: ClampMode::H0Scalar };
        let mut memory = LbfgsMemory::new(p, eta, rule).expect("valid memory");
        for pair in pairs {
            memory.push(pair);
        }
        memory.set_tau(tau_now);
        let g = rng.normal_vec(n);
        let err = memory.direction(&g).and_then(|d| {
            let hg = dense_lbfgs(n, tau_now, memory.pairs())?.matvec(&g);
            let neg: Vec<f64> = hg.iter().map(|v| -v).collect();
            Ok(rel_err(&d, &neg))
        });
        let err = err.unwrap_or(f64::NAN);
        report.record(err - EQUIVALENCE_TOL, || format!("case {case}: n={n} p={p} relative error {err:e}"));
    }
    timed(report, start)
}

/// Damping over random `(s, y)`, a third of them with `sᵀy < 0`.
pub fn curvature_suite(opts: &VerifyOptions) -> SuiteReport {
    let start = Instant::now();
    let mut rng = SplitMix64::derive(opts.seed, 13);
    let mut report = SuiteReport::new("curvature");
    for case in 0..opts.curvature_cases {
        let n = 1 + rng.below(20);
        let s = rng.normal_vec(n);
        let mut y = rng.normal_vec(n);
        let sy = dot(&s, &y);
        if case % 3 == 0 && sy > 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
        let tau = rng.log_uniform(opts.tau_range.0, opts.tau_range.1);
        let eta = if case % 2 == 0 { DEFAULT_ETA } else { rng.uniform(0.01, 0.99) };
        let Ok(pair) = damp_pair(&s, &y, tau, eta) else {
            report.record(f64::NAN, || format!("case {case}: damping failed"));
            continue;
        };
        let threshold = eta * dot(&s, &s) / tau;
        let deficit = threshold - CURVATURE_TOL - dot(&s, &pair.y_hat);
        let undamped_ok = dot(&s, &y) < threshold || (pair.theta == 1.0 && pair.y_hat == y);
        report.record(if undamped_ok { deficit } else { f64::INFINITY }, || {
            format!("case {case}: n={n} τ={tau:e} η={eta} sᵀŷ short by {:e} (θ={})", deficit + CURVATURE_TOL, pair.theta)
        });
    }
    timed(report, start)
}

/// One instance of every shipped problem family, used by the gradient suite.
pub fn shipped_problems() -> Vec<(&'static str, Box<dyn FiniteSumProblem>)> {
    let dense = Dataset::synthetic_binary(60, 8, 0.5, 11);
    let sparse = Dataset::synthetic_sparse_binary(60, 30, 0.2, 12);
    vec![
        ("logistic", Box::new(LogisticRegression::new(dense.clone(), 1e-2).expect("binary labels"))),
        ("logistic-sparse", Box::new(LogisticRegression::new(sparse.clone(), 0.0).expect("binary labels"))),
        ("sigmoid-svm", Box::new(SigmoidSvm::new(dense).expect("binary labels"))),
        ("sigmoid-svm-sparse", Box::new(SigmoidSvm::new(sparse).expect("binary labels"))),
        ("synthetic", Box::new(SyntheticIllConditioned::new(6, 40, 1e4, 0.3, 4))),
        ("quadratic", Box::new(Quadratic::diagonal(vec![1.0, 10.0, 3.0]))),
    ]
}

/// Central differences with `h = 1e-6 (1 + ‖x‖)` at random points.
pub fn gradient_suite(opts: &VerifyOptions) -> SuiteReport {
    let start = Instant::now();
    let mut rng = SplitMix64::derive(opts.seed, 14);
    let mut report = SuiteReport::new("gradient");
    for (name, problem) in shipped_problems() {
        for point in 0..opts.gradient_points {
            let x = rng.normal_vec(problem.dim());
            let h = 1e-6 * (1.0 + norm(&x));
            let err = rel_err(&problem.full_grad(&x), &finite_diff_gradient(&problem, &x, h));
            report.record(err - GRADIENT_TOL, || format!("{name} point {point}: relative error {err:e}"));
        }
    }
    timed(report, start)
}

pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteReport> {
    vec![
        containment_suite(opts),
        single_update_suite(opts),
        equivalence_suite(opts),
        curvature_suite(opts),
        gradient_suite(opts),
    ]
}
