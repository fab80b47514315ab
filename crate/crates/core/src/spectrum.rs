//! Cheap bounds on the extreme eigenvalues of the damped L-BFGS operator.
//!
//! A single damped update `A = μ V Vᵀ + ρ s sᵀ` (with `V = I − ρ s yᵀ`,
//! `sᵀy ≥ γ‖s‖²`, `‖y‖ ≤ L‖s‖`) has its spectrum inside
//!
//! ```text
//! [ min(1/L, μ / (1 + (μ/γ) L²)) ,  1/γ + max(0, (μ/γ²) L² − μ / (1 + (μ/γ) L²)) ]
//! ```
//!
//! For a stored pair damped against `H⁰ = τᵢ I`, the pair satisfies these
//! hypotheses with `γ = η/τᵢ` and `L = L_g + 1/τᵢ`, where `L_g` bounds the
//! raw ratio `‖y‖/‖s‖`. Chaining the single-update bound through every
//! stored pair, oldest first, starting from `μ₁ = μ₂ = τ` gives `(λ_k, Λ_k)`.
//! The upper chain subtracts the *lower* running bound, which is looser
//! than the one-step bound but makes the recursion well defined.
//!
//! Everything here is `O(p)` scalar work; no vectors are touched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{CurvaturePair, LbfgsMemory};

pub const DEFAULT_LAMBDA_MIN: f64 = 1e-6;
pub const DEFAULT_LAMBDA_MAX: f64 = 1e6;

/// Policy for the gradient Lipschitz estimate `L_g` used in the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum LgMode {
    /// Each pair uses its own `‖yᵢ‖/‖sᵢ‖`.
    PerPair,
    /// Every pair uses the maximum ratio over the stored pairs.
    #[default]
    RunningMax,
    /// A known constant.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub lambda_min_limit: f64,
    pub lambda_max_limit: f64,
    pub lg_mode: LgMode,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            lambda_min_limit: DEFAULT_LAMBDA_MIN,
            lambda_max_limit: DEFAULT_LAMBDA_MAX,
            lg_mode: LgMode::default(),
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.lambda_min_limit, self.lambda_max_limit);
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::Config(format!(
                "eigenvalue limits need 0 < lambda_min < lambda_max < inf, got [{lo}, {hi}]"
            )));
        }
        if let LgMode::Fixed(l) = self.lg_mode {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("fixed L_g must be finite and >= 0, got {l}")));
            }
        }
        Ok(())
    }
}

/// One step of the recursion: the pair's constants and the bounds after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundStep {
    pub gamma: f64,
    pub lipschitz: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `(λ_k, Λ_k)` with the per-pair trace, oldest pair first.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumBounds {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub trace: Vec<BoundStep>,
}

impl SpectrumBounds {
    pub fn exact(tau: f64) -> Self {
        Self { lambda_lo: tau, lambda_hi: tau, trace: Vec::new() }
    }

    pub fn contains(&self, lo: f64, hi: f64, tol: f64) -> bool {
        self.lambda_lo - tol <= lo && hi <= self.lambda_hi + tol
    }
}

/// Single-update bounds for `A = μ V Vᵀ + ρ s sᵀ`.
pub fn single_update_bounds(gamma: f64, l_y: f64, mu: f64) -> Result<(f64, f64)> {
    for (name, v) in [("gamma", gamma), ("L_y", l_y), ("mu", mu)] {
        if !(v > 0.0) || v.is_nan() {
            return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
        }
    }
    let shrink = mu / (1.0 + (mu / gamma) * l_y * l_y);
    let lower = (1.0 / l_y).min(shrink);
    let upper = 1.0 / gamma + (mu / (gamma * gamma) * l_y * l_y - shrink).max(0.0);
    Ok((lower, upper))
}

/// Relaxed chained step: lower from `μ₁`, upper from `μ₂` with `μ₁` in the
/// subtracted term.
pub fn chained_step(gamma: f64, l: f64, mu_lo: f64, mu_hi: f64) -> (f64, f64) {
    let l2 = l * l;
    let lower = (1.0 / l).min(mu_lo / (1.0 + (mu_lo / gamma) * l2));
    let upper =
        1.0 / gamma + (mu_hi / (gamma * gamma) * l2 - mu_lo / (1.0 + (mu_hi / gamma) * l2)).max(0.0);
    (lower, upper)
}

/// `L_g` per stored pair under `mode`, oldest first.
pub fn estimate_lg<'a, I>(pairs: I, mode: LgMode) -> Vec<f64>
where
    I: IntoIterator<Item = &'a CurvaturePair>,
{
    let local: Vec<f64> = pairs.into_iter().map(|p| p.lg_local).collect();
    match mode {
        LgMode::PerPair => local,
        LgMode::RunningMax => {
            let m = local.iter().copied().fold(0.0, f64::max);
            vec![m; local.len()]
        }
        LgMode::Fixed(l) => vec![l; local.len()],
    }
}

/// Chained bounds for the operator built from `pairs` (oldest first) on
/// top of `H⁰ = tau_now I`. Empty input gives the exact `(τ, τ)`.
pub fn chained_bounds<'a, I>(pairs: I, tau_now: f64, eta: f64, lg_mode: LgMode) -> SpectrumBounds
where
    I: IntoIterator<Item = &'a CurvaturePair>,
    I::IntoIter: Clone,
{
    let it = pairs.into_iter();
    let lgs = estimate_lg(it.clone(), lg_mode);
    let (mut lo, mut hi) = (tau_now, tau_now);
    let mut trace = Vec::with_capacity(lgs.len());
    for (pair, lg) in it.zip(lgs) {
        let gamma = eta / pair.tau;
        let l = lg + 1.0 / pair.tau;
        (lo, hi) = chained_step(gamma, l, lo, hi);
        trace.push(BoundStep { gamma, lipschitz: l, lower: lo, upper: hi });
    }
    SpectrumBounds { lambda_lo: lo, lambda_hi: hi, trace }
}

/// Bounds for the operator currently held by `memory`.
pub fn memory_bounds(memory: &LbfgsMemory, lg_mode: LgMode) -> SpectrumBounds {
    chained_bounds(memory.pairs(), memory.tau(), memory.eta(), lg_mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlushDecision {
    Keep,
    Flush,
}

/// Flush iff `Λ_k > λ_max` or `λ_k < λ_min`.
pub fn check_and_flush(bounds: &SpectrumBounds, config: &MonitorConfig) -> FlushDecision {
    if bounds.lambda_hi > config.lambda_max_limit || bounds.lambda_lo < config.lambda_min_limit {
        FlushDecision::Flush
    } else {
        FlushDecision::Keep
    }
}

/// What the monitor did before a direction was computed.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    /// Bounds for the operator as it stood.
    pub before: SpectrumBounds,
    /// Bounds for the operator actually applied (equal to `before` unless flushed).
    pub applied: SpectrumBounds,
    pub flushed: bool,
}

/// Estimates the bounds, flushes to the newest pair when they leave the
/// admissible interval, and recomputes them for the operator that remains.
pub fn gate(memory: &mut LbfgsMemory, config: &MonitorConfig) -> GateOutcome {
    let before = memory_bounds(memory, config.lg_mode);
    if check_and_flush(&before, config) == FlushDecision::Flush && memory.len() > 1 {
        memory.flush_to_most_recent();
        let applied = memory_bounds(memory, config.lg_mode);
        GateOutcome { before, applied, flushed: true }
    } else {
        GateOutcome { applied: before.clone(), before, flushed: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{damp_pair, ScalingRule};

    #[test]
    fn single_update_hand_value() {
        assert_eq!(single_update_bounds(1.0, 1.0, 1.0).unwrap(), (0.5, 1.5));
    }

    #[test]
    fn single_update_rejects_nonpositive() {
        assert!(single_update_bounds(0.0, 1.0, 1.0).is_err());
        assert!(single_update_bounds(1.0, -1.0, 1.0).is_err());
        assert!(single_update_bounds(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn empty_is_exact() {
        let b = chained_bounds(std::iter::empty(), 0.5, 0.25, LgMode::RunningMax);
        assert_eq!((b.lambda_lo, b.lambda_hi), (0.5, 0.5));
        assert!(b.trace.is_empty());
    }

    #[test]
    fn single_pair_hand_value() {
        // γ = η/τ = 1/4, L = L_g + 1/τ = 2, μ₁ = μ₂ = 1
        let p = damp_pair(&[1.0, 0.0], &[1.0, 0.0], 1.0, 0.25).unwrap();
        let b = chained_bounds([&p], 1.0, 0.25, LgMode::Fixed(1.0));
        assert!((b.lambda_lo - 1.0 / 17.0).abs() < 1e-15);
        let expect_hi = 4.0 + (64.0 - 1.0 / 17.0);
        assert!((b.lambda_hi - expect_hi).abs() < 1e-12, "{}", b.lambda_hi);
        assert_eq!(b.trace.len(), 1);
    }

    #[test]
    fn lg_modes() {
        let mk = |r: f64| damp_pair(&[1.0, 0.0], &[r, 0.0], 1.0, 0.25).unwrap();
        assert_eq!(estimate_lg([&mk(2.0)], LgMode::PerPair), vec![2.0]);
        let ps = [mk(1.0), mk(3.0), mk(2.0)];
        assert_eq!(estimate_lg(&ps, LgMode::RunningMax), vec![3.0; 3]);
        assert_eq!(estimate_lg(&ps, LgMode::PerPair), vec![1.0, 3.0, 2.0]);
        assert_eq!(estimate_lg(&ps, LgMode::Fixed(10.0)), vec![10.0; 3]);
    }

    #[test]
    fn flush_thresholds() {
        let cfg = MonitorConfig { lambda_min_limit: 1e-3, lambda_max_limit: 1e3, lg_mode: LgMode::PerPair };
        let b = |lo, hi| SpectrumBounds { lambda_lo: lo, lambda_hi: hi, trace: vec![] };
        assert_eq!(check_and_flush(&b(0.01, 50.0), &cfg), FlushDecision::Keep);
        assert_eq!(check_and_flush(&b(0.01, 2e3), &cfg), FlushDecision::Flush);
        assert_eq!(check_and_flush(&b(5e-4, 50.0), &cfg), FlushDecision::Flush);
        assert_eq!(check_and_flush(&b(1e-3, 1e3), &cfg), FlushDecision::Keep);
    }

    #[test]
    fn bounds_bracket_tau_once_pairs_exist() {
        let mut rng = crate::rng::SplitMix64::new(3);
        for _ in 0..500 {
            let n = 2 + rng.below(6);
            let mut m = LbfgsMemory::new(1 + rng.below(6), 0.25, ScalingRule::default()).unwrap();
            for _ in 0..1 + rng.below(8) {
                let s = rng.normal_vec(n);
                let y = rng.normal_vec(n);
                m.set_tau(rng.log_uniform(1e-2, 1e2));
                m.push(m.damp(&s, &y).unwrap());
            }
            m.set_tau(rng.log_uniform(1e-2, 1e2));
            for mode in [LgMode::PerPair, LgMode::RunningMax] {
                let b = memory_bounds(&m, mode);
                assert!(b.lambda_lo > 0.0);
                assert!(b.lambda_lo <= m.tau() && m.tau() <= b.lambda_hi);
                assert_eq!(b.trace.len(), m.len());
            }
        }
    }

    #[test]
    fn gate_leaves_single_pair_alone() {
        let cfg = MonitorConfig { lambda_min_limit: 0.9, lambda_max_limit: 1.1, lg_mode: LgMode::PerPair };
        let mut m = LbfgsMemory::new(4, 0.25, ScalingRule::default()).unwrap();
        m.push(damp_pair(&[1.0, 0.0], &[1.0, 0.0], 1.0, 0.25).unwrap());
        let out = gate(&mut m, &cfg);
        assert!(!out.flushed);
        assert_eq!(m.len(), 1);
        m.push(damp_pair(&[0.0, 1.0], &[0.0, 1.0], 1.0, 0.25).unwrap());
        let out = gate(&mut m, &cfg);
        assert!(out.flushed);
        assert_eq!(m.len(), 1);
        assert_eq!(out.applied.trace.len(), 1);
        assert_eq!(out.before.trace.len(), 2);
    }
}
