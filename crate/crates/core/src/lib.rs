//! Variance-reduced stochastic damped L-BFGS with monitored eigenvalue bounds.
//!
//! The crate is organized around one loop ([`optimizer::run`]) and the
//! pieces it is built from:
//!
//! * [`memory`]: curvature pairs, damping, initial scaling and the two-loop recursion
//! * [`spectrum`]: recursive eigenvalue bounds for the implicit inverse Hessian and the flush rule
//! * [`vr`]: epoch anchors, corrected gradients and minibatch sampling
//! * [`problems`]: finite-sum objectives and dataset readers
//! * [`oracle`]: dense reference implementations used for checking
//! * [`verify`]: randomized property suites built on the oracle
//! * [`trace`]: run records and their CSV form

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod memory;
pub mod optimizer;
pub mod oracle;
pub mod problems;
pub mod rng;
pub mod spectrum;
pub mod trace;
pub mod verify;
pub mod vr;

pub use error::{Error, Result};
pub use memory::{ClampMode, CurvaturePair, LbfgsMemory, ScalingRule};
pub use optimizer::{run, run_from, Method, OptimizerConfig, RunError, Schedule};
pub use problems::FiniteSumProblem;
pub use spectrum::{LgMode, MonitorConfig, SpectrumBounds};
pub use trace::RunTrace;

// The guide's snippets run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/damping.md")]
    mod damping {}
    #[doc = include_str!("../../../book/src/two-loop.md")]
    mod two_loop {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/variance-reduction.md")]
    mod variance_reduction {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    mod optimizer {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
