//! Super-twisting (first-order robust exact) differentiator toolkit.
//!
//! The crate bundles the differentiator itself ([`differentiator`]), closed-form
//! worst-case error bounds and gain conditions ([`params`]), a piecewise
//! Lyapunov function with a sampled decrease certifier ([`lyapunov`]),
//! admissible test signals including worst-case constructions ([`signals`]),
//! and a simulation harness with CSV export ([`harness`]). The [`cli`] module
//! drives everything from the `stwdiff` binary.

pub mod cli;
mod dd;
pub mod differentiator;
mod error;
pub mod harness;
pub mod lyapunov;
pub mod params;
pub mod signals;

pub use differentiator::{DiffState, SchemeKind, StepScheme};
pub use error::{Error, Result};
pub use lyapunov::{ErrorState, GammaReport, GridSpec, Region, RegionIndex};
pub use params::{GainInterval, NoiseLevel, Params};
pub use signals::{SignalPair, WorstCaseSpec};

/// `sign` with `sign(0) = 0`, unlike [`f64::signum`].
#[inline]
pub fn sign(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else if y < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Signed square root `⌊y⌉^{1/2} = |y|^{1/2} sign(y)`.
#[inline]
pub fn ssqrt(y: f64) -> f64 {
    y.abs().sqrt().copysign(y)
}
