//! Admissible signals and noises: a quadratic test signal, the periodic
//! switching noise, constant noise and the worst-case pair that attains the
//! error lower bound.

use std::fmt;
use std::sync::Arc;

use crate::differentiator::DiffState;
use crate::{sign, Error, Result};

/// Value and derivatives of a signal at one instant. `fddot` is `None` where
/// the second derivative is not available analytically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub f: f64,
    pub fdot: f64,
    pub fddot: Option<f64>,
}

pub trait Signal: Send + Sync {
    fn eval(&self, t: f64) -> Kinematics;
}

pub trait Noise: Send + Sync {
    fn eval(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Send + Sync> Noise for F {
    fn eval(&self, t: f64) -> f64 {
        self(t)
    }
}

/// `f(t) = f₀' t + sign·L t²/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticSignal {
    pub l: f64,
    pub sign: f64,
    pub fdot0: f64,
}

impl QuadraticSignal {
    pub fn new(l: f64, sign: f64) -> Result<Self> {
        Self::with_slope(l, sign, 0.0)
    }

    pub fn with_slope(l: f64, sign: f64, fdot0: f64) -> Result<Self> {
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::domain("L", l, "must be finite and nonnegative"));
        }
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::domain("sign", sign, "must be +1 or -1"));
        }
        if !fdot0.is_finite() {
            return Err(Error::domain("fdot0", fdot0, "must be finite"));
        }
        Ok(Self { l, sign, fdot0 })
    }
}

impl Signal for QuadraticSignal {
    fn eval(&self, t: f64) -> Kinematics {
        let a = self.sign * self.l;
        Kinematics {
            f: self.fdot0 * t + 0.5 * a * t * t,
            fdot: self.fdot0 + a * t,
            fddot: Some(a),
        }
    }
}

/// `(f, ḟ, f̈)` of `sign·L t²/2`.
pub fn quadratic_signal(t: f64, l: f64, sign: f64) -> (f64, f64, f64) {
    let a = sign * l;
    (0.5 * a * t * t, a * t, a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroSignal;

impl Signal for ZeroSignal {
    fn eval(&self, _t: f64) -> Kinematics {
        Kinematics {
            f: 0.0,
            fdot: 0.0,
            fddot: Some(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantNoise(pub f64);

impl Noise for ConstantNoise {
    fn eval(&self, _t: f64) -> f64 {
        self.0
    }
}

/// `−N` for `t < 10c₁`, then `−N·sign(s − c₂)` with `s = t mod c₁`: `+N` for
/// the first `c₂` of every period and `−N` for the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingNoise {
    n: f64,
    c1: f64,
    c2: f64,
}

impl SwitchingNoise {
    pub fn new(n: f64, c1: f64, c2: f64) -> Result<Self> {
        if !(n.is_finite() && n >= 0.0) {
            return Err(Error::domain("N", n, "must be finite and nonnegative"));
        }
        if !(c1.is_finite() && c1 > 0.0) {
            return Err(Error::domain("c1", c1, "must be finite and positive"));
        }
        if !(c2 > 0.0 && c2 < c1) {
            return Err(Error::domain("c2", c2, "must lie in (0, c1)"));
        }
        Ok(Self { n, c1, c2 })
    }

    /// Defaults of the noisy quadratic reproduction run.
    pub fn reference() -> Self {
        Self {
            n: 0.01,
            c1: 0.011,
            c2: 0.00149,
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.n
    }

    pub fn duty_cycle(&self) -> f64 {
        self.c2 / self.c1
    }

    /// Offset of `t` into its period, in `[0, c₁)`.
    fn phase(&self, t: f64) -> f64 {
        // plain multiply-subtract; a fused form breaks exact multiples of c₁
        let mut s = t - self.c1 * (t / self.c1).floor();
        if s < 0.0 {
            s += self.c1;
        }
        if s >= self.c1 {
            s -= self.c1;
        }
        s
    }
}

impl Noise for SwitchingNoise {
    fn eval(&self, t: f64) -> f64 {
        if t < 10.0 * self.c1 {
            -self.n
        } else {
            -self.n * sign(self.phase(t) - self.c2)
        }
    }
}

pub fn switching_noise(t: f64, n: f64, c1: f64, c2: f64) -> Result<f64> {
    Ok(SwitchingNoise::new(n, c1, c2)?.eval(t))
}

/// Parameters of the worst-case construction: a signal at rest until
/// `τ − θ`, then accelerating at `L`, with `θ = 2√(N/((λ₂+1)L))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseSpec {
    pub tau: f64,
    pub lambda2: f64,
    pub n: f64,
    pub l: f64,
}

impl WorstCaseSpec {
    pub fn new(tau: f64, lambda2: f64, n: f64, l: f64) -> Result<Self> {
        if !(lambda2.is_finite() && lambda2 > 0.0) {
            return Err(Error::domain("lambda2", lambda2, "must be finite and positive"));
        }
        if !(n.is_finite() && n >= 0.0) {
            return Err(Error::domain("N", n, "must be finite and nonnegative"));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::domain("L", l, "must be finite and positive"));
        }
        let spec = Self { tau, lambda2, n, l };
        if !(tau.is_finite() && tau > spec.theta()) {
            return Err(Error::domain("tau", tau, "must exceed the ramp duration theta"));
        }
        Ok(spec)
    }

    pub fn theta(&self) -> f64 {
        2.0 * (self.n / ((self.lambda2 + 1.0) * self.l)).sqrt()
    }

    fn ramp_start(&self) -> f64 {
        self.tau - self.theta()
    }

    fn ramp(&self, t: f64) -> (f64, f64, f64) {
        let d = t - self.ramp_start();
        if d < 0.0 {
            (0.0, 0.0, 0.0)
        } else {
            (0.5 * self.l * d * d, self.l * d, self.l)
        }
    }

    /// Error `−(λ₂+1)ḟ(τ)` the sliding trajectory reaches at `τ`.
    pub fn predicted_error(&self) -> f64 {
        -(self.lambda2 + 1.0) * self.l * self.theta()
    }
}

#[derive(Debug, Clone, Copy)]
struct RampSignal(WorstCaseSpec);

impl Signal for RampSignal {
    fn eval(&self, t: f64) -> Kinematics {
        let (f, fdot, fddot) = self.0.ramp(t);
        Kinematics {
            f,
            fdot,
            fddot: Some(fddot),
        }
    }
}

/// `η(t) = max{−N, N − (λ₂+1)f(t)}`.
#[derive(Debug, Clone, Copy)]
struct WorstCaseNoise(WorstCaseSpec);

impl Noise for WorstCaseNoise {
    fn eval(&self, t: f64) -> f64 {
        let s = &self.0;
        (s.n - (s.lambda2 + 1.0) * s.ramp(t).0).max(-s.n)
    }
}

/// A signal and noise with certified bounds `|f̈| ≤ l_cert`, `|η| ≤ n_cert`.
#[derive(Clone)]
pub struct SignalPair {
    pub f: Arc<dyn Signal>,
    pub eta: Arc<dyn Noise>,
    pub l_cert: f64,
    pub n_cert: f64,
    pub description: String,
    /// Set when the requested construction degenerated.
    pub warning: Option<String>,
}

impl fmt::Debug for SignalPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SignalPair")
            .field("l_cert", &self.l_cert)
            .field("n_cert", &self.n_cert)
            .field("description", &self.description)
            .field("warning", &self.warning)
            .finish()
    }
}

impl SignalPair {
    pub fn new(
        f: impl Signal + 'static,
        eta: impl Noise + 'static,
        l_cert: f64,
        n_cert: f64,
        description: impl Into<String>,
    ) -> Self {
        Self {
            f: Arc::new(f),
            eta: Arc::new(eta),
            l_cert,
            n_cert,
            description: description.into(),
            warning: None,
        }
    }

    pub fn zero() -> Self {
        Self::new(ZeroSignal, ConstantNoise(0.0), 0.0, 0.0, "zero")
    }

    /// The noisy quadratic reproduction input: `f = −t²/2` with the
    /// default switching noise.
    pub fn reference() -> Self {
        let noise = SwitchingNoise::reference();
        Self::new(
            QuadraticSignal::new(1.0, -1.0).expect("valid"),
            noise,
            1.0,
            noise.amplitude(),
            "quadratic:L=1,sign=-1 + switching:N=0.01,c1=0.011,c2=0.00149",
        )
    }

    /// Measurement `u = f + η`.
    pub fn input(&self, t: f64) -> f64 {
        self.f.eval(t).f + self.eta.eval(t)
    }
}

/// Worst-case pair for `λ₂ ≥ 1`; for `λ₂ < 1` the divergent pair
/// `f = Lt²/2, η = N` instead. Both start with `f(0) = ḟ(0) = 0`.
pub fn worst_case_pair(spec: &WorstCaseSpec) -> SignalPair {
    if spec.lambda2 < 1.0 {
        return SignalPair::new(
            QuadraticSignal::new(spec.l, 1.0).expect("validated L"),
            ConstantNoise(spec.n),
            spec.l,
            spec.n,
            format!("unbounded-error pair: f = {}t^2/2, eta = {}", spec.l, spec.n),
        );
    }
    let mut pair = SignalPair::new(
        RampSignal(*spec),
        WorstCaseNoise(*spec),
        spec.l,
        spec.n,
        format!(
            "worst-case pair: tau = {}, theta = {}, lambda2 = {}, N = {}, L = {}",
            spec.tau,
            spec.theta(),
            spec.lambda2,
            spec.n,
            spec.l
        ),
    );
    if spec.n == 0.0 {
        pair.warning = Some("N = 0: ramp duration is zero, the pair is noise-free".into());
    }
    pair
}

/// Analytic sliding trajectory `(N − λ₂f(t), −λ₂ḟ(t))`, valid up to `τ`.
pub fn sliding_reference(spec: &WorstCaseSpec, t: f64) -> Result<DiffState> {
    if spec.lambda2 < 1.0 {
        return Err(Error::domain(
            "lambda2",
            spec.lambda2,
            "sliding reference exists only for lambda2 >= 1",
        ));
    }
    if t > spec.tau {
        return Err(Error::domain("t", t, "sliding reference is valid only up to tau"));
    }
    let (f, fdot, _) = spec.ramp(t);
    Ok(DiffState {
        y1: spec.n - spec.lambda2 * f,
        y2: -spec.lambda2 * fdot,
    })
}

/// Checks `|η| ≤ N` and `|f̈| ≤ L` on `samples` uniform points of
/// `[0, horizon]`, up to `10⁻⁹·max(N, L)`. Without an analytic `f̈` a central
/// second difference is used, skipping the end points.
pub fn check_membership(pair: &SignalPair, horizon: f64, samples: usize) -> Result<bool> {
    if samples < 2 {
        return Err(Error::domain("samples", samples as f64, "need at least two samples"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::domain("horizon", horizon, "must be finite and positive"));
    }
    let tol = 1e-9 * pair.n_cert.max(pair.l_cert);
    let h = horizon / (samples - 1) as f64;
    for i in 0..samples {
        let t = i as f64 * h;
        if pair.eta.eval(t).abs() > pair.n_cert + tol {
            return Ok(false);
        }
        let fddot = match pair.f.eval(t).fddot {
            Some(a) => Some(a),
            None if i > 0 && i + 1 < samples => {
                let fm = pair.f.eval(t - h).f;
                let f0 = pair.f.eval(t).f;
                let fp = pair.f.eval(t + h).f;
                Some((fp - 2.0 * f0 + fm) / (h * h))
            }
            None => None,
        };
        if let Some(a) = fddot {
            if a.abs() > pair.l_cert + tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
