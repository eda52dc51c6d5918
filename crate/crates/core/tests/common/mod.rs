//! Independent oracles shared by the integration tests: exact fixed-point
//! arithmetic on big integers, and a bisection solver for the implicit step.
#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

/// Fractional bits of the fixed-point representation.
const FRAC: u32 = 320;

/// Real number `v / 2^FRAC`. Every f64 of moderate magnitude converts exactly;
/// each operation truncates at `2^-320`, far below any f64 ulp used here.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fx(BigInt);

impl Fx {
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite());
        if x == 0.0 {
            return Fx(BigInt::zero());
        }
        let bits = x.to_bits();
        let neg = bits >> 63 == 1;
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        let shift = FRAC as i64 + e;
        assert!(shift >= 0, "value {x} too small for the oracle");
        let v = BigInt::from(mant) << (shift as usize);
        Fx(if neg { -v } else { v })
    }

    pub fn int(n: i64) -> Self {
        Fx(BigInt::from(n) << FRAC as usize)
    }

    pub fn sqrt(&self) -> Self {
        assert!(!self.0.is_negative(), "sqrt of negative");
        Fx((&self.0 << FRAC as usize).sqrt())
    }

    pub fn abs(&self) -> Self {
        Fx(self.0.abs())
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn to_f64(&self) -> f64 {
        let scale = 2f64.powi(-(FRAC as i32));
        // split to keep the integer conversion in range
        let hi = &self.0 >> (FRAC as usize / 2);
        hi.to_f64().unwrap() * 2f64.powi(FRAC as i32 / 2) * scale
    }
}

impl Add for &Fx {
    type Output = Fx;
    fn add(self, o: &Fx) -> Fx {
        Fx(&self.0 + &o.0)
    }
}

impl Sub for &Fx {
    type Output = Fx;
    fn sub(self, o: &Fx) -> Fx {
        Fx(&self.0 - &o.0)
    }
}

impl Mul for &Fx {
    type Output = Fx;
    fn mul(self, o: &Fx) -> Fx {
        Fx((&self.0 * &o.0) >> FRAC as usize)
    }
}

impl Div for &Fx {
    type Output = Fx;
    fn div(self, o: &Fx) -> Fx {
        assert!(!o.0.is_zero(), "division by zero");
        Fx((&self.0 << FRAC as usize) / &o.0)
    }
}

impl Neg for &Fx {
    type Output = Fx;
    fn neg(self) -> Fx {
        Fx(-&self.0)
    }
}

macro_rules! forward_owned {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr for Fx {
            type Output = Fx;
            fn $m(self, o: Fx) -> Fx { (&self).$m(&o) }
        }
        impl $tr<&Fx> for Fx {
            type Output = Fx;
            fn $m(self, o: &Fx) -> Fx { (&self).$m(o) }
        }
        impl $tr<Fx> for &Fx {
            type Output = Fx;
            fn $m(self, o: Fx) -> Fx { self.$m(&o) }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul, Div div);

pub fn fx(x: f64) -> Fx {
    Fx::from_f64(x)
}

/// Distance of `x` from the exact value `exact`, in units of the f64 ulp at `exact`.
pub fn ulps(x: f64, exact: &Fx) -> f64 {
    let diff = (&fx(x) - exact).abs();
    if diff.0.is_zero() {
        return 0.0;
    }
    let mag = exact.0.abs().bits() as i64;
    assert!(mag > 0, "exact value is zero but x = {x}");
    // exact ∈ [2^(mag-1), 2^mag) in raw units, so ulp = 2^(mag-1-52) raw units
    let ulp_exp = mag - 53;
    diff.0.to_f64().unwrap() / 2f64.powi(ulp_exp as i32)
}

/// Exact closed forms, evaluated from the f64 inputs without rounding.
pub mod exact {
    use super::{fx, Fx};

    pub fn lambda2_min(alpha: f64) -> Fx {
        let r = fx(alpha).sqrt();
        let one = Fx::int(1);
        let num = &(&one + &(&Fx::int(2) * &r)) - &fx(alpha);
        let d = &r - &one;
        num / (&d * &d)
    }

    pub fn lambda1_lo(lambda2: f64) -> Fx {
        (Fx::int(8) * (fx(lambda2) + Fx::int(1))).sqrt()
    }

    /// Upper λ₁ endpoint straight from the unsimplified ratio form:
    /// `√(8(λ₂+1)) · ((α+1)λ₂+α−1) / (2√α(λ₂+1))`.
    pub fn lambda1_hi(lambda2: f64, alpha: f64) -> Fx {
        let s = fx(lambda2) + Fx::int(1);
        let a = fx(alpha);
        let num = (&a + &Fx::int(1)) * fx(lambda2) + (&a - &Fx::int(1));
        let ratio = num / (Fx::int(2) * a.sqrt() * &s);
        lambda1_lo(lambda2) * ratio
    }

    /// Upper endpoint in the `α = 4` form `√(8(λ₂+1))·(1 + (λ₂−1)/(4(λ₂+1)))`.
    pub fn lambda1_hi_alpha4(lambda2: f64) -> Fx {
        let s = fx(lambda2) + Fx::int(1);
        let ratio = Fx::int(1) + (fx(lambda2) - Fx::int(1)) / (Fx::int(4) * s);
        lambda1_lo(lambda2) * ratio
    }

    pub fn upper(lambda2: f64, l: f64, alpha: f64, n: f64) -> Fx {
        Fx::int(2) * (fx(alpha) * (fx(lambda2) + Fx::int(1)) * fx(n) * fx(l)).sqrt()
    }

    pub fn lower(lambda2: f64, l: f64, n: f64) -> Fx {
        Fx::int(2) * ((fx(lambda2) + Fx::int(1)) * fx(n) * fx(l)).sqrt()
    }

    pub fn convergence_time(lambda2: f64, l: f64, fdot0: f64) -> Fx {
        fx(fdot0).abs() / ((fx(lambda2) - Fx::int(1)) * fx(l))
    }

    /// The five decrease rates and the two slacks, in report order:
    /// `[r1, r2, ε₁, r3, r4, ε₂, r5]`.
    pub fn gamma_rates(l1: f64, l2: f64, l: f64, alpha: f64) -> [Fx; 7] {
        let (l1, l2, l, a) = (fx(l1), fx(l2), fx(l), fx(alpha));
        let one = Fx::int(1);
        let two = Fx::int(2);
        let s = &l2 + &one;
        let r1 = &l1 * &(&l / &two).sqrt();
        let r2 = (&a - &one) / &a * (&a * &s * &l).sqrt();
        let eps1 = ((&a + &one) * &l2 + (&a - &one)) / (&a * &s) - &l1 / (&two * &a * &s).sqrt();
        let r3 = &eps1 * &(&two * &a * &s * &l).sqrt();
        let r4 = (&l2 - &one) * l.sqrt() / (&a * &s).sqrt();
        let eps2 = &l1 - &(&two * &(&two * &s).sqrt());
        let r5 = &eps2 * &l.sqrt();
        [r1, r2, eps1, r3, r4, eps2, r5]
    }
}

/// Solves `σ + a⌊σ⌉^{1/2} + bξ = r`, `ξ ∈ ⌊σ⌉⁰` by bisection on the monotone
/// map `σ ↦ σ + a√σ`. Returns `σ`.
pub fn bisect_sigma(r: f64, a: f64, b: f64) -> f64 {
    if r.abs() <= b {
        return 0.0;
    }
    let c = r.abs() - b;
    let (mut lo, mut hi) = (0.0f64, c);
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mid + a * mid.sqrt() < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) * r.signum()
}
