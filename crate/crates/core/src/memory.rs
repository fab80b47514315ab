//! Damped curvature pairs and the limited-memory inverse-Hessian operator.
//!
//! The operator applied by [`LbfgsMemory::direction`] is
//!
//! ```text
//! H = V̂ₖ₋₁ᵀ ⋯ V̂ₖ₋ₚᵀ (τ I) V̂ₖ₋ₚ ⋯ V̂ₖ₋₁ + (rank-one terms ρ̂ᵢ sᵢ sᵢᵀ)
//! ```
//!
//! with `V̂ᵢ = I − ρ̂ᵢ ŷᵢ sᵢᵀ` and `ρ̂ᵢ = 1 / sᵢᵀŷᵢ`: the classical L-BFGS
//! matrix with every gradient difference replaced by its damped version.
//! Each stored `ŷᵢ` satisfies `sᵢᵀŷᵢ ≥ η ‖sᵢ‖² / τᵢ`, where `τᵢ` is the
//! initial scaling that was in force when the pair was damped, so the
//! operator stays symmetric positive definite without a line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{axpy, dot, norm};

/// Default damping threshold η.
pub const DEFAULT_ETA: f64 = 0.25;
/// Default lower clamp bound for the initial scaling.
pub const DEFAULT_GAMMA_LO: f64 = 1e-4;
/// Default upper clamp bound for the initial scaling.
pub const DEFAULT_GAMMA_HI: f64 = 1e4;

/// One stored update `(s, y, ŷ, ρ̂, θ, τ, ‖y‖/‖s‖)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    pub s: Vec<f64>,
    /// Raw gradient difference.
    pub y: Vec<f64>,
    /// Damped gradient difference `θ y + (1 − θ) s / τ`.
    pub y_hat: Vec<f64>,
    pub rho_hat: f64,
    pub theta: f64,
    /// Scalar of `H⁰ = τ I` at damping time. Frozen for the life of the pair.
    pub tau: f64,
    /// Local Lipschitz estimate `‖y‖ / ‖s‖`.
    pub lg_local: f64,
}

impl CurvaturePair {
    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// `sᵀŷ − η ‖s‖² / τ`, nonnegative up to rounding for a valid pair.
    pub fn curvature_margin(&self, eta: f64) -> f64 {
        dot(&self.s, &self.y_hat) - eta * dot(&self.s, &self.s) / self.tau
    }
}

fn check_pair_inputs(s: &[f64], y: &[f64], tau: f64, eta: f64) -> Result<f64> {
    if s.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), got: y.len() });
    }
    ensure_finite("s", s)?;
    ensure_finite("y", y)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive and finite, got {tau}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidInput(format!("eta must lie in (0, 1), got {eta}")));
    }
    let ss = dot(s, s);
    if ss == 0.0 {
        return Err(Error::DegenerateStep { norm: 0.0 });
    }
    Ok(ss)
}

/// Damping coefficient for `B⁰ = τ⁻¹ I`.
///
/// Returns 1 when `sᵀy ≥ η sᵀB⁰s`, otherwise
/// `(1 − η) sᵀB⁰s / (sᵀB⁰s − sᵀy)`, which lies in `(0, 1)`.
pub fn compute_theta(s: &[f64], y: &[f64], tau: f64, eta: f64) -> Result<f64> {
    let ss = check_pair_inputs(s, y, tau, eta)?;
    let sbs = ss / tau;
    let sy = dot(s, y);
    if sy >= eta * sbs {
        Ok(1.0)
    } else {
        Ok((1.0 - eta) * sbs / (sbs - sy))
    }
}

/// Builds the damped pair `ŷ = θ y + (1 − θ) τ⁻¹ s`.
pub fn damp_pair(s: &[f64], y: &[f64], tau: f64, eta: f64) -> Result<CurvaturePair> {
    let theta = compute_theta(s, y, tau, eta)?;
    let y_hat: Vec<f64> = if theta == 1.0 {
        y.to_vec()
    } else {
        let w = (1.0 - theta) / tau;
        s.iter().zip(y).map(|(si, yi)| theta * yi + w * si).collect()
    };
    let sy_hat = dot(s, &y_hat);
    if !(sy_hat > 0.0 && sy_hat.is_finite()) {
        return Err(Error::InvalidInput(format!("damped curvature sᵀŷ = {sy_hat:e}")));
    }
    Ok(CurvaturePair {
        lg_local: norm(y) / norm(s),
        s: s.to_vec(),
        y: y.to_vec(),
        y_hat,
        rho_hat: 1.0 / sy_hat,
        theta,
        tau,
    })
}

/// Which scalar the clamp `max(γ̲, min(·, γ̄))` acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClampMode {
    /// Clamp the `H⁰` scalar itself: `τ = clamp(sᵀy / yᵀy)`.
    #[default]
    H0Scalar,
    /// Clamp the `B⁰` scalar `γ = yᵀy / sᵀy` and invert: `τ = 1 / clamp(γ)`.
    /// The bounds then act on `1/τ`, so `τ ∈ [1/γ̄, 1/γ̲]`.
    B0Scalar,
}

/// How the initial scaling `τ` is refreshed after each accepted pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ScalingRule {
    /// Clamped scaling.
    Clamped { lo: f64, hi: f64, mode: ClampMode },
    /// `τ = 1 / max(yᵀy / sᵀy, δ)`; nonpositive curvature yields `τ = 1/δ`.
    Unclamped { delta: f64 },
}

impl Default for ScalingRule {
    fn default() -> Self {
        ScalingRule::Clamped {
            lo: DEFAULT_GAMMA_LO,
            hi: DEFAULT_GAMMA_HI,
            mode: ClampMode::H0Scalar,
        }
    }
}

impl ScalingRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalingRule::Clamped { lo, hi, .. } => {
                if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                    return Err(Error::Config(format!(
                        "scaling clamp needs 0 < gamma_lo < gamma_hi < inf, got [{lo}, {hi}]"
                    )));
                }
            }
            ScalingRule::Unclamped { delta } => {
                if !(delta > 0.0 && delta.is_finite()) {
                    return Err(Error::Config(format!("scaling delta must be positive, got {delta}")));
                }
            }
        }
        Ok(())
    }

    /// Interval `τ` is guaranteed to lie in, if any.
    pub fn tau_range(&self) -> Option<(f64, f64)> {
        match *self {
            ScalingRule::Clamped { lo, hi, mode: ClampMode::H0Scalar } => Some((lo, hi)),
            ScalingRule::Clamped { lo, hi, mode: ClampMode::B0Scalar } => Some((1.0 / hi, 1.0 / lo)),
            ScalingRule::Unclamped { .. } => None,
        }
    }

    /// Brings an arbitrary starting scalar into the admissible range.
    pub fn admit(&self, tau: f64) -> f64 {
        match self.tau_range() {
            Some((lo, hi)) => tau.clamp(lo, hi),
            None => tau,
        }
    }

    /// New `H⁰` scalar from the latest raw pair.
    pub fn tau_from(&self, s: &[f64], y: &[f64]) -> f64 {
        let sy = dot(s, y);
        let yy = dot(y, y);
        match *self {
            ScalingRule::Clamped { lo, hi, mode: ClampMode::H0Scalar } => {
                let raw = if sy > 0.0 { sy / yy } else { f64::NEG_INFINITY };
                clamp_scaling(raw, lo, hi)
            }
            ScalingRule::Clamped { lo, hi, mode: ClampMode::B0Scalar } => {
                1.0 / clamp_scaling(raw_gamma(sy, yy), lo, hi)
            }
            ScalingRule::Unclamped { delta } => {
                let g = raw_gamma(sy, yy);
                1.0 / if g.is_nan() { delta } else { g.max(delta) }
            }
        }
    }
}

/// `yᵀy / sᵀy` with the sign conventions of IEEE division; negative for
/// negative curvature, `+∞` for `sᵀy = 0 < yᵀy`, NaN when both vanish.
pub fn raw_gamma(sy: f64, yy: f64) -> f64 {
    yy / sy
}

/// `max(lo, min(raw, hi))`; NaN maps to `lo`.
pub fn clamp_scaling(raw: f64, lo: f64, hi: f64) -> f64 {
    if raw.is_nan() {
        lo
    } else {
        lo.max(raw.min(hi))
    }
}

/// Bounded store of damped pairs, oldest first, plus the current `τ`.
#[derive(Debug, Clone)]
pub struct LbfgsMemory {
    pairs: VecDeque<CurvaturePair>,
    capacity: usize,
    eta: f64,
    scaling: ScalingRule,
    tau: f64,
}

impl LbfgsMemory {
    /// Empty memory with `τ` set to 1 brought into the admissible range.
    pub fn new(capacity: usize, eta: f64, scaling: ScalingRule) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("memory parameter p must be at least 1".into()));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1), got {eta}")));
        }
        scaling.validate()?;
        Ok(Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity,
            eta,
            tau: scaling.admit(1.0),
            scaling,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn scaling(&self) -> ScalingRule {
        self.scaling
    }

    /// Overrides `τ`, clamped into the admissible range.
    pub fn set_tau(&mut self, tau: f64) {
        self.tau = self.scaling.admit(tau);
    }

    /// Pairs, oldest first.
    pub fn pairs(&self) -> std::collections::vec_deque::Iter<'_, CurvaturePair> {
        self.pairs.iter()
    }

    pub fn newest(&self) -> Option<&CurvaturePair> {
        self.pairs.back()
    }

    /// Refreshes `τ` from a raw pair and returns it.
    pub fn update_initial_scaling(&mut self, s: &[f64], y: &[f64]) -> f64 {
        self.tau = self.scaling.tau_from(s, y);
        self.tau
    }

    /// Damps `(s, y)` against the current `τ`.
    pub fn damp(&self, s: &[f64], y: &[f64]) -> Result<CurvaturePair> {
        damp_pair(s, y, self.tau, self.eta)
    }

    /// Appends a pair, evicting the oldest once `p` pairs are stored.
    pub fn push(&mut self, pair: CurvaturePair) {
        if let Some(first) = self.pairs.front() {
            assert_eq!(first.dim(), pair.dim(), "pair dimension changed");
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(pair);
    }

    /// Keeps only the most recent pair. No-op on empty memory.
    pub fn flush_to_most_recent(&mut self) {
        let keep = self.pairs.len().saturating_sub(1);
        self.pairs.drain(..keep);
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// `d = −H g` by the two-loop recursion.
    pub fn direction(&self, g: &[f64]) -> Result<Vec<f64>> {
        let mut d = self.apply_inverse_hessian(g)?;
        d.iter_mut().for_each(|v| *v = -*v);
        Ok(d)
    }

    /// `H g` by the two-loop recursion.
    pub fn apply_inverse_hessian(&self, g: &[f64]) -> Result<Vec<f64>> {
        ensure_finite("g", g)?;
        if let Some(p) = self.pairs.front() {
            if p.dim() != g.len() {
                return Err(Error::DimensionMismatch { expected: p.dim(), got: g.len() });
            }
        }
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for p in self.pairs.iter().rev() {
            let a = p.rho_hat * dot(&p.s, &q);
            axpy(-a, &p.y_hat, &mut q);
            alphas.push(a);
        }
        q.iter_mut().for_each(|v| *v *= self.tau);
        for (p, a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = p.rho_hat * dot(&p.y_hat, &q);
            axpy(a - b, &p.s, &mut q);
        }
        Ok(q)
    }
}
