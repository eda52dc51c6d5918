//! Super-twisting differentiator
//!
//! ```text
//! ẏ₁ = λ₁√L ⌊u − y₁⌉^{1/2} + y₂,   y₁(0) = u(0)
//! ẏ₂ = λ₂L ⌊u − y₁⌉⁰,              y₂(0) = 0
//! ```
//!
//! in continuous time, plus forward-Euler and backward-Euler fixed-step
//! discretizations. The backward-Euler step is solved in closed form.

use crate::params::Params;
use crate::{sign, ssqrt, Error, Result};

/// Differentiator state: `y1` estimates `f`, `y2` estimates `ḟ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiffState {
    pub y1: f64,
    pub y2: f64,
}

impl DiffState {
    pub fn new(y1: f64, y2: f64) -> Self {
        Self { y1, y2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Explicit,
    Implicit,
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(SchemeKind::Explicit),
            "implicit" => Ok(SchemeKind::Implicit),
            other => Err(Error::spec(other, "expected `explicit` or `implicit`")),
        }
    }
}

/// Fixed-step scheme. The input is sampled at the start of the step for the
/// explicit scheme and at the end of the step for the implicit one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepScheme {
    kind: SchemeKind,
    dt: f64,
}

impl StepScheme {
    pub fn new(kind: SchemeKind, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::domain("dt", dt, "step must be finite and positive"));
        }
        Ok(Self { kind, dt })
    }

    pub fn explicit(dt: f64) -> Result<Self> {
        Self::new(SchemeKind::Explicit, dt)
    }

    pub fn implicit(dt: f64) -> Result<Self> {
        Self::new(SchemeKind::Implicit, dt)
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time at which the input is sampled for the step `[t, t + dt]`.
    pub fn input_time(&self, t: f64) -> f64 {
        match self.kind {
            SchemeKind::Explicit => t,
            SchemeKind::Implicit => t + self.dt,
        }
    }

    pub fn step(&self, s: DiffState, u: f64, p: &Params) -> DiffState {
        match self.kind {
            SchemeKind::Explicit => step_explicit(s, u, self.dt, p),
            SchemeKind::Implicit => step_implicit(s, u, self.dt, p),
        }
    }
}

pub fn init(u0: f64) -> DiffState {
    DiffState { y1: u0, y2: 0.0 }
}

/// Right-hand side. `selection ∈ [−1, 1]` stands in for `sign(0)` when `u = y₁`.
pub fn rhs(s: DiffState, u: f64, p: &Params, selection: f64) -> Result<(f64, f64)> {
    if !(-1.0..=1.0).contains(&selection) {
        return Err(Error::domain("selection", selection, "must lie in [-1, 1]"));
    }
    let e = u - s.y1;
    let sg = if e != 0.0 { sign(e) } else { selection };
    Ok((p.lambda1() * p.l().sqrt() * ssqrt(e) + s.y2, p.lambda2() * p.l() * sg))
}

/// Forward Euler with `sign(0) = 0`.
pub fn step_explicit(s: DiffState, u: f64, dt: f64, p: &Params) -> DiffState {
    let e = u - s.y1;
    DiffState {
        y1: s.y1 + dt * (p.lambda1() * p.l().sqrt() * ssqrt(e) + s.y2),
        y2: s.y2 + dt * p.lambda2() * p.l() * sign(e),
    }
}

/// Solution of the scalar generalized equation behind one implicit step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitSolution {
    /// `σ = u − y₁⁺`.
    pub sigma: f64,
    /// Selection `ξ ∈ ⌊σ⌉⁰`; equals `sign(σ)` unless `σ = 0`.
    pub selection: f64,
}

/// Solves `σ + a⌊σ⌉^{1/2} + b ξ = r`, `ξ ∈ ⌊σ⌉⁰`, for `a ≥ 0, b > 0`.
///
/// For `|r| ≤ b` the solution is `σ = 0, ξ = r/b`. Otherwise `sign(σ) = sign(r)`
/// and `√|σ|` is the positive root of `w² + a w − (|r| − b) = 0`, taken in the
/// cancellation-free form `2c/(a + √(a² + 4c))`.
pub fn solve_generalized_equation(r: f64, a: f64, b: f64) -> ImplicitSolution {
    let ar = r.abs();
    if ar <= b {
        return ImplicitSolution {
            sigma: 0.0,
            selection: r / b,
        };
    }
    let c = ar - b;
    let w = 2.0 * c / (a + (a * a + 4.0 * c).sqrt());
    ImplicitSolution {
        sigma: (w * w).copysign(r),
        selection: sign(r),
    }
}

/// Backward Euler resolved exactly, returning the generalized-equation solution too.
pub fn step_implicit_detailed(s: DiffState, u: f64, dt: f64, p: &Params) -> (DiffState, ImplicitSolution) {
    let a = dt * p.lambda1() * p.l().sqrt();
    let k2 = p.lambda2() * p.l();
    let b = dt * dt * k2;
    let r = u - s.y1 - dt * s.y2;
    let sol = solve_generalized_equation(r, a, b);
    let y2 = if sol.sigma == 0.0 {
        s.y2 + r / dt
    } else {
        s.y2 + dt * k2 * sol.selection
    };
    let y1 = if sol.sigma == 0.0 { u } else { u - sol.sigma };
    (DiffState { y1, y2 }, sol)
}

pub fn step_implicit(s: DiffState, u: f64, dt: f64, p: &Params) -> DiffState {
    step_implicit_detailed(s, u, dt, p).0
}
