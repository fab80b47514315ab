//! The VARCHEN loop and its baselines.
//!
//! Every method shares one loop: an epoch anchor with an exact full
//! gradient, a pass over the data in minibatches, and an update
//! `x ← x + α_k d_k`. They differ only in how `d_k` is formed:
//!
//! | method       | gradient estimate | operator                                  |
//! |--------------|-------------------|-------------------------------------------|
//! | `varchen`    | SVRG-corrected    | damped L-BFGS, clamped `τ`, monitored     |
//! | `sdlbfgs-vr` | SVRG-corrected    | damped L-BFGS, `τ = 1/max(yᵀy/sᵀy, δ)`    |
//! | `svrg`       | SVRG-corrected    | identity                                  |
//! | `sgd`        | plain minibatch   | identity                                  |
//!
//! `sdlbfgs-vr` still computes the eigenvalue bounds so they can be
//! logged, but never acts on them.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::memory::{ClampMode, LbfgsMemory, ScalingRule, DEFAULT_ETA, DEFAULT_GAMMA_HI, DEFAULT_GAMMA_LO};
use crate::problems::FiniteSumProblem;
use crate::spectrum::{
    gate, memory_bounds, LgMode, MonitorConfig, SpectrumBounds, DEFAULT_LAMBDA_MAX, DEFAULT_LAMBDA_MIN,
};
use crate::trace::{EpochRecord, IterRecord, RunTrace};
use crate::vr::{begin_epoch, BatchSampler, Sampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Varchen,
    SdlbfgsVr,
    Svrg,
    Sgd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Varchen => "varchen",
            Method::SdlbfgsVr => "sdlbfgs-vr",
            Method::Svrg => "svrg",
            Method::Sgd => "sgd",
        }
    }

    fn quasi_newton(self) -> bool {
        matches!(self, Method::Varchen | Method::SdlbfgsVr)
    }

    fn variance_reduced(self) -> bool {
        !matches!(self, Method::Sgd)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Step-size sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    Constant { alpha: f64 },
    /// `α_k = c / (k + 1)`; `c` defaults to the cap `λ_min / (L λ_max)`.
    Harmonic { c: Option<f64> },
    /// `α_k = λ_min / (L λ_max²) · k^(−β)`, with `k = 0` using the `k = 1` value.
    Power { beta: f64 },
}

/// Constants the schedules read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConstants {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lipschitz: f64,
}

impl ScheduleConstants {
    /// `λ_min / (L λ_max)`
    pub fn harmonic_cap(&self) -> f64 {
        self.lambda_min / (self.lipschitz * self.lambda_max)
    }
}

/// `α_k` for iteration `k` (0-based).
pub fn step_size(schedule: &Schedule, k: u64, constants: &ScheduleConstants) -> f64 {
    match *schedule {
        Schedule::Constant { alpha } => alpha,
        Schedule::Harmonic { c } => {
            let cap = constants.harmonic_cap();
            c.map_or(cap, |c| c.min(cap)) / (k as f64 + 1.0)
        }
        Schedule::Power { beta } => {
            let k = k.max(1) as f64;
            constants.lambda_min / (constants.lipschitz * constants.lambda_max * constants.lambda_max)
                * k.powf(-beta)
        }
    }
}

/// Which gradient difference feeds the curvature pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureGradient {
    /// `y = g(x_{k+1}, ξ_k) − g(x_k, ξ_k)`.
    #[default]
    Raw,
    /// `y = g̃(x_{k+1}, ξ_k) − g̃(x_k, ξ_k)`.
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Memory parameter `p`.
    pub memory: usize,
    pub eta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub clamp_mode: ClampMode,
    /// Positivity floor `δ` of the unclamped `sdlbfgs-vr` scaling.
    pub sdlbfgs_delta: f64,
    pub lg_mode: LgMode,
    pub schedule: Schedule,
    /// `L` in the schedule constants. Estimated when absent.
    pub lipschitz: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub sampling: Sampling,
    pub seed: u64,
    pub curvature_gradient: CurvatureGradient,
    /// Stop once the full gradient norm at an epoch boundary drops below this.
    pub grad_tol: Option<f64>,
    /// Record wall-clock time in the trace.
    pub timing: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Varchen,
            memory: 5,
            eta: DEFAULT_ETA,
            lambda_min: DEFAULT_LAMBDA_MIN,
            lambda_max: DEFAULT_LAMBDA_MAX,
            gamma_lo: DEFAULT_GAMMA_LO,
            gamma_hi: DEFAULT_GAMMA_HI,
            clamp_mode: ClampMode::H0Scalar,
            sdlbfgs_delta: 1e-4,
            lg_mode: LgMode::RunningMax,
            schedule: Schedule::Constant { alpha: 0.1 },
            lipschitz: None,
            epochs: 10,
            batch_size: 10,
            sampling: Sampling::WithoutReplacement,
            seed: 0,
            curvature_gradient: CurvatureGradient::Raw,
            grad_tol: None,
            timing: true,
        }
    }
}

impl OptimizerConfig {
    pub fn new(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn scaling_rule(&self) -> ScalingRule {
        match self.method {
            Method::SdlbfgsVr => ScalingRule::Unclamped { delta: self.sdlbfgs_delta },
            _ => ScalingRule::Clamped { lo: self.gamma_lo, hi: self.gamma_hi, mode: self.clamp_mode },
        }
    }

    pub fn monitor(&self) -> MonitorConfig {
        MonitorConfig { lambda_min_limit: self.lambda_min, lambda_max_limit: self.lambda_max, lg_mode: self.lg_mode }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.memory == 0 {
            return bad("memory must be at least 1".into());
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        self.monitor().validate()?;
        self.scaling_rule().validate()?;
        if self.method == Method::Varchen {
            let (lo, hi) = self.scaling_rule().tau_range().expect("clamped");
            if !(self.lambda_min < lo && hi < self.lambda_max) {
                return bad(format!(
                    "need lambda_min < initial-scaling range < lambda_max, got {} < [{lo}, {hi}] < {}",
                    self.lambda_min, self.lambda_max
                ));
            }
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lipschitz must be positive, got {l}"));
            }
        }
        match self.schedule {
            Schedule::Constant { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                return bad(format!("constant step must be positive, got {alpha}"));
            }
            Schedule::Harmonic { c: Some(c) } => {
                if !(c > 0.0 && c.is_finite()) {
                    return bad(format!("harmonic c must be positive, got {c}"));
                }
                if let Some(l) = self.lipschitz {
                    let cap = self.lambda_min / (l * self.lambda_max);
                    if c > cap * (1.0 + 1e-12) {
                        return bad(format!("harmonic c = {c} exceeds lambda_min/(L lambda_max) = {cap}"));
                    }
                }
            }
            Schedule::Power { beta } if !(beta > 0.5 && beta < 1.0) => {
                return bad(format!("power schedule needs beta in (0.5, 1), got {beta}"));
            }
            _ => {}
        }
        if let Some(t) = self.grad_tol {
            if !(t > 0.0) {
                return bad(format!("grad_tol must be positive, got {t}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] Error),
    #[error("run diverged at iteration {k} (epoch {epoch}): {reason}")]
    Diverged { k: u64, epoch: usize, reason: String, trace: Box<RunTrace> },
}

impl RunError {
    /// The records gathered before the failure, if execution started.
    pub fn partial_trace(&self) -> Option<&RunTrace> {
        match self {
            RunError::Config(_) => None,
            RunError::Diverged { trace, .. } => Some(trace),
        }
    }
}

/// Starting estimate of `L` when none is configured: the problem's own
/// bound, else a finite-difference probe of the full gradient at `x0`.
fn initial_lipschitz<P: FiniteSumProblem + ?Sized>(problem: &P, x0: &[f64], seed: u64) -> f64 {
    if let Some(l) = problem.lipschitz() {
        return l;
    }
    let mut rng = crate::rng::SplitMix64::derive(seed, 2);
    let dir = rng.normal_vec(x0.len());
    let h = 1e-4 * (1.0 + norm(x0)) / norm(&dir);
    let xp: Vec<f64> = x0.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
    let diff = crate::linalg::sub(&problem.full_grad(&xp), &problem.full_grad(x0));
    let l = norm(&diff) / (h * norm(&dir));
    if l > 0.0 && l.is_finite() {
        l
    } else {
        1.0
    }
}

/// Runs from the origin.
pub fn run<P: FiniteSumProblem + ?Sized>(problem: &P, config: &OptimizerConfig) -> Result<RunTrace, RunError> {
    run_from(problem, config, &vec![0.0; problem.dim()])
}

pub fn run_from<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    config: &OptimizerConfig,
    x0: &[f64],
) -> Result<RunTrace, RunError> {
    config.validate()?;
    if x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: x0.len() }.into());
    }
    crate::error::ensure_finite("x0", x0)?;
    Runner::new(problem, config, x0)?.execute()
}

struct Runner<'a, P: ?Sized> {
    problem: &'a P,
    config: &'a OptimizerConfig,
    memory: LbfgsMemory,
    monitor: MonitorConfig,
    sampler: BatchSampler,
    x: Vec<f64>,
    k: u64,
    lg_seen: f64,
    lipschitz: f64,
    trace: RunTrace,
    started: Instant,
}

impl<'a, P: FiniteSumProblem + ?Sized> Runner<'a, P> {
    fn new(problem: &'a P, config: &'a OptimizerConfig, x0: &[f64]) -> Result<Self> {
        Ok(Self {
            problem,
            config,
            memory: LbfgsMemory::new(config.memory, config.eta, config.scaling_rule())?,
            monitor: config.monitor(),
            sampler: BatchSampler::new(config.seed, config.batch_size, config.sampling)?,
            x: x0.to_vec(),
            k: 0,
            lg_seen: 0.0,
            lipschitz: config.lipschitz.unwrap_or_else(|| initial_lipschitz(problem, x0, config.seed)),
            trace: RunTrace::new(config.method),
            started: Instant::now(),
        })
    }

    fn diverged(&mut self, epoch: usize, reason: String) -> RunError {
        let mut trace = std::mem::replace(&mut self.trace, RunTrace::new(self.config.method));
        trace.final_x = self.x.clone();
        RunError::Diverged { k: self.k, epoch, reason, trace: Box::new(trace) }
    }

    fn epoch_record(&self, epoch: usize, loss: f64, grad: &[f64]) -> EpochRecord {
        EpochRecord {
            epoch,
            full_loss: loss,
            full_grad_norm: norm(grad),
            val_metric: self.problem.validation_metric(&self.x),
        }
    }

    fn execute(mut self) -> Result<RunTrace, RunError> {
        let method = self.config.method;
        let n_samples = self.problem.num_samples();
        let mut anchor = match begin_epoch(self.problem, &self.x) {
            Ok(a) => a,
            Err(e) => return Err(self.diverged(0, e.to_string())),
        };
        self.trace.epochs.push(self.epoch_record(0, anchor.full_loss, &anchor.full_grad));

        for epoch in 1..=self.config.epochs {
            if self.config.lipschitz.is_none() {
                self.lipschitz = self.lipschitz.max(self.lg_seen);
            }
            let constants = ScheduleConstants {
                lambda_min: self.config.lambda_min,
                lambda_max: self.config.lambda_max,
                lipschitz: self.lipschitz,
            };
            for batch in self.sampler.epoch(n_samples) {
                self.step(&batch, epoch, &anchor, &constants)?;
                anchor.samples_consumed += batch.len();
            }
            anchor = match begin_epoch(self.problem, &self.x) {
                Ok(a) => a,
                Err(e) => return Err(self.diverged(epoch, e.to_string())),
            };
            let rec = self.epoch_record(epoch, anchor.full_loss, &anchor.full_grad);
            let done = self.config.grad_tol.is_some_and(|t| rec.full_grad_norm < t);
            self.trace.epochs.push(rec);
            if done {
                break;
            }
        }
        let _ = method;
        self.trace.final_x = self.x;
        Ok(self.trace)
    }

    fn step(
        &mut self,
        batch: &[usize],
        epoch: usize,
        anchor: &crate::vr::EpochAnchor,
        constants: &ScheduleConstants,
    ) -> Result<(), RunError> {
        let method = self.config.method;
        let problem = self.problem;
        let g_x = problem.batch_grad(&self.x, batch);
        let loss = problem.batch_loss(&self.x, batch);
        let g_anchor = method.variance_reduced().then(|| problem.batch_grad(&anchor.x_anchor, batch));
        let g_est: Vec<f64> = match &g_anchor {
            Some(ga) => g_x.iter().zip(ga).zip(&anchor.full_grad).map(|((a, b), c)| a - b + c).collect(),
            None => g_x.clone(),
        };
        if !loss.is_finite() || g_est.iter().any(|v| !v.is_finite()) {
            return Err(self.diverged(epoch, format!("non-finite minibatch loss or gradient (loss = {loss})")));
        }

        let (bounds, flushed) = match method {
            Method::Varchen => {
                let out = gate(&mut self.memory, &self.monitor);
                (out.applied, out.flushed)
            }
            Method::SdlbfgsVr => (memory_bounds(&self.memory, self.monitor.lg_mode), false),
            Method::Svrg | Method::Sgd => (SpectrumBounds::exact(1.0), false),
        };
        let memory_len = if method.quasi_newton() { self.memory.len() } else { 0 };

        let d = if method.quasi_newton() {
            self.memory.direction(&g_est).map_err(|e| self.diverged(epoch, e.to_string()))?
        } else {
            g_est.iter().map(|v| -v).collect()
        };
        let gd = dot(&g_est, &d);
        let g_norm = norm(&g_est);
        if g_norm > 0.0 && !(gd < 0.0) {
            return Err(self.diverged(epoch, format!("not a descent direction: g̃ᵀd = {gd:e}")));
        }

        let alpha = step_size(&self.config.schedule, self.k, constants);
        let x_new: Vec<f64> = self.x.iter().zip(&d).map(|(x, d)| x + alpha * d).collect();

        if method.quasi_newton() {
            let g_new = problem.batch_grad(&x_new, batch);
            let y: Vec<f64> = match (self.config.curvature_gradient, &g_anchor) {
                (CurvatureGradient::Corrected, Some(ga)) => g_new
                    .iter()
                    .zip(ga)
                    .zip(&anchor.full_grad)
                    .zip(&g_est)
                    .map(|(((a, b), c), e)| (a - b + c) - e)
                    .collect(),
                _ => g_new.iter().zip(&g_x).map(|(a, b)| a - b).collect(),
            };
            let s: Vec<f64> = x_new.iter().zip(&self.x).map(|(a, b)| a - b).collect();
            let s_norm = norm(&s);
            if s.iter().chain(&y).all(|v| v.is_finite()) && s_norm >= 1e-12 * norm(&self.x).max(1.0) {
                self.memory.update_initial_scaling(&s, &y);
                let pair = self.memory.damp(&s, &y).map_err(|e| self.diverged(epoch, e.to_string()))?;
                self.lg_seen = self.lg_seen.max(pair.lg_local);
                self.memory.push(pair);
            }
        }

        self.trace.iters.push(IterRecord {
            k: self.k,
            epoch,
            minibatch_loss: loss,
            grad_norm: g_norm,
            alpha,
            lambda_lo: bounds.lambda_lo,
            lambda_hi: bounds.lambda_hi,
            flush: flushed,
            memory_len,
            wall_ms: if self.config.timing { self.started.elapsed().as_secs_f64() * 1e3 } else { 0.0 },
        });
        self.x = x_new;
        self.k += 1;
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(self.diverged(epoch, "iterate became non-finite".into()));
        }
        Ok(())
    }
}
