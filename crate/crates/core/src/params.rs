//! Differentiator gains, the admissible-gain condition and the closed-form
//! worst-case error bounds.
//!
//! Closed forms are evaluated in double-double arithmetic and rounded once at
//! the end, so the returned `f64` is within an ulp or two of the exact value
//! of the expression at the given inputs even where the expression cancels.

use twofloat::TwoFloat;

use crate::{Error, Result};

/// Gains `λ₁, λ₂`, second-derivative bound `L` and tightness parameter `α`.
///
/// A value may exist without satisfying [`validate_condition`]; experiments
/// with deliberately bad gains (e.g. `λ₂ < 1`) need to be expressible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    lambda1: f64,
    lambda2: f64,
    l: f64,
    alpha: f64,
}

impl Params {
    pub fn new(lambda1: f64, lambda2: f64, l: f64, alpha: f64) -> Result<Self> {
        positive("lambda1", lambda1)?;
        positive("lambda2", lambda2)?;
        positive("L", l)?;
        check_alpha(alpha)?;
        Ok(Self {
            lambda1,
            lambda2,
            l,
            alpha,
        })
    }

    /// The gain set used for the noisy quadratic reproduction run:
    /// `λ₁ = 4.1, λ₂ = 1.1, L = 1, α = 4`.
    pub fn reference() -> Self {
        Self {
            lambda1: 4.1,
            lambda2: 1.1,
            l: 1.0,
            alpha: 4.0,
        }
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_lambda1(self, lambda1: f64) -> Result<Self> {
        Self::new(lambda1, self.lambda2, self.l, self.alpha)
    }

    pub fn with_lambda2(self, lambda2: f64) -> Result<Self> {
        Self::new(self.lambda1, lambda2, self.l, self.alpha)
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        Self::new(self.lambda1, self.lambda2, self.l, alpha)
    }
}

/// Uniform bound `N ≥ 0` on the measurement noise amplitude.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    pub fn new(n: f64) -> Result<Self> {
        if n.is_finite() && n >= 0.0 {
            Ok(Self(n))
        } else {
            Err(Error::domain("N", n, "noise bound must be finite and nonnegative"))
        }
    }

    pub const ZERO: NoiseLevel = NoiseLevel(0.0);

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Open interval of admissible `λ₁` for fixed `(λ₂, α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainInterval {
    pub lo: f64,
    pub hi: f64,
    pub empty: bool,
}

impl GainInterval {
    /// Strict containment; endpoints are never admissible.
    pub fn contains(&self, lambda1: f64) -> bool {
        !self.empty && lambda1 > self.lo && lambda1 < self.hi
    }

    pub fn midpoint(&self) -> Option<f64> {
        (!self.empty).then_some(0.5 * (self.lo + self.hi))
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(name, v, "must be finite and positive"))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha <= 4.0 {
        Ok(())
    } else {
        Err(Error::domain("alpha", alpha, "must lie in (1, 4]"))
    }
}

#[inline]
fn dd(x: f64) -> TwoFloat {
    TwoFloat::from(x)
}

/// `(lo, hi)` of the admissible `λ₁` interval in double-double.
///
/// `lo = √(8(λ₂+1))`, `hi = ((α+1)λ₂ + α − 1)·√(2(λ₂+1)/α)/(λ₂+1)`.
fn lambda1_bounds_dd(lambda2: f64, alpha: f64) -> (TwoFloat, TwoFloat) {
    let s = dd(lambda2) + 1.0;
    let lo = (s * 8.0).sqrt();
    let num = (dd(alpha) + 1.0) * lambda2 + (dd(alpha) - 1.0);
    let hi = crate::dd::div(num * crate::dd::div(s * 2.0, dd(alpha)).sqrt(), s);
    (lo, hi)
}

/// True iff `1 < λ₁/√(8(λ₂+1)) < ((α+1)λ₂+α−1)/(2√α(λ₂+1))`, both strict.
/// A λ₁ that rounds onto an endpoint is rejected.
pub fn validate_condition(p: &Params) -> bool {
    let (lo, hi) = lambda1_bounds_dd(p.lambda2, p.alpha);
    let l1 = dd(p.lambda1);
    l1 > lo && l1 < hi
}

/// Strict lower bound `(1 + 2√α − α)/(1 − 2√α + α)` on λ₂ for which an
/// admissible λ₁ exists. Equals 1 at `α = 4` and grows without bound as `α → 1⁺`.
pub fn lambda2_min(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let r = dd(alpha).sqrt();
    let num = r * 2.0 + 1.0 - alpha;
    let den = (r - 1.0) * (r - 1.0);
    Ok(f64::from(crate::dd::div(num, den)))
}

pub fn lambda1_range(lambda2: f64, alpha: f64) -> Result<GainInterval> {
    positive("lambda2", lambda2)?;
    check_alpha(alpha)?;
    let (lo, hi) = lambda1_bounds_dd(lambda2, alpha);
    Ok(GainInterval {
        lo: f64::from(lo),
        hi: f64::from(hi),
        empty: hi <= lo,
    })
}

/// Worst-case error after convergence, `2√(α(λ₂+1)NL)`.
pub fn error_upper_bound(p: &Params, n: NoiseLevel) -> f64 {
    let prod = dd(p.alpha) * (dd(p.lambda2) + 1.0) * n.0 * p.l;
    f64::from(prod.sqrt() * 2.0)
}

/// Error level some admissible input always attains, `2√((λ₂+1)NL)`.
pub fn error_lower_bound(lambda2: f64, n: NoiseLevel, l: f64) -> f64 {
    let prod = (dd(lambda2) + 1.0) * n.0 * l;
    f64::from(prod.sqrt() * 2.0)
}

/// Ratio of the upper to the lower bound, `√α ∈ (1, 2]`.
pub fn tightness_factor(p: &Params) -> f64 {
    p.alpha.sqrt()
}

/// Noise-free worst-case convergence time `|ḟ(0)|/((λ₂−1)L)`; needs `λ₂ > 1`.
pub fn convergence_time_bound(p: &Params, fdot0: f64) -> Result<f64> {
    if p.lambda2 <= 1.0 {
        return Err(Error::domain(
            "lambda2",
            p.lambda2,
            "convergence time bound requires lambda2 > 1",
        ));
    }
    let den = (dd(p.lambda2) - 1.0) * p.l;
    Ok(f64::from(crate::dd::div(dd(fdot0.abs()), den)))
}
