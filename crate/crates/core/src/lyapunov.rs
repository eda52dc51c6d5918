//! Piecewise Lyapunov function for the differentiation error dynamics.
//!
//! With `c = 4α(λ₂+1)L`, the function is `V(x) = W(x)` for `x₂ ≥ 0` and
//! `V(x) = W(−x)` otherwise, where
//!
//! ```text
//! W(x) = W1 = 2x₂²/c − x₁          if x₁ ≤ x₂²/c
//!        W2 = x₂²/c                if x₂²/c < x₁ ≤ (2α+1)x₂²/c
//!        W3 = x₁ − 2αx₂²/c         otherwise
//! ```
//!
//! Outside `Ω = {V ≤ N}` it decreases along every admissible error trajectory
//! at least as fast as `−γ√(V − N)`. [`verify_decrease`] certifies this on a
//! sampled grid using the analytic branch derivatives.

use std::io::Write;

use rayon::prelude::*;
use twofloat::TwoFloat;

use crate::dd::div;
use crate::params::{error_upper_bound, validate_condition, NoiseLevel, Params};
use crate::{sign, ssqrt, Error, Result};

/// Error state `x = (y₁ − f, y₂ − ḟ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorState {
    pub x1: f64,
    pub x2: f64,
}

impl ErrorState {
    pub const ORIGIN: ErrorState = ErrorState { x1: 0.0, x2: 0.0 };

    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    /// Initial error of a differentiator started at `y(0) = (u(0), 0)`.
    pub fn initial(eta0: f64, fdot0: f64) -> Self {
        Self { x1: eta0, x2: -fdot0 }
    }

    fn neg(self) -> Self {
        Self {
            x1: -self.x1,
            x2: -self.x2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionIndex {
    W1,
    W2,
    W3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub index: RegionIndex,
    /// The `x₂ < 0` branch was taken, so `index` refers to `−x`.
    pub mirrored: bool,
}

#[inline]
fn scale(p: &Params) -> f64 {
    4.0 * p.alpha() * (p.lambda2() + 1.0) * p.l()
}

/// Both region thresholds on `x₁` for a given `x₂ ≥ 0`.
#[inline]
fn thresholds(x2: f64, p: &Params) -> (f64, f64) {
    let q = x2 * x2 / scale(p);
    (q, (2.0 * p.alpha() + 1.0) * q)
}

#[inline]
fn mirror(x: ErrorState) -> (ErrorState, bool) {
    if x.x2 >= 0.0 {
        (x, false)
    } else {
        (x.neg(), true)
    }
}

fn classify(z: ErrorState, p: &Params) -> RegionIndex {
    let (t1, t2) = thresholds(z.x2, p);
    if z.x1 <= t1 {
        RegionIndex::W1
    } else if z.x1 <= t2 {
        RegionIndex::W2
    } else {
        RegionIndex::W3
    }
}

/// Value of a single branch `Wᵢ` at `z`, irrespective of the region `z` lies in.
pub fn branch_value(index: RegionIndex, z: ErrorState, p: &Params) -> f64 {
    let s = (p.lambda2() + 1.0) * p.l();
    let x2sq = z.x2 * z.x2;
    match index {
        RegionIndex::W1 => x2sq / (2.0 * p.alpha() * s) - z.x1,
        RegionIndex::W2 => x2sq / (4.0 * p.alpha() * s),
        RegionIndex::W3 => z.x1 - x2sq / (2.0 * s),
    }
}

pub fn region(x: ErrorState, p: &Params) -> Region {
    let (z, mirrored) = mirror(x);
    Region {
        index: classify(z, p),
        mirrored,
    }
}

pub fn evaluate(x: ErrorState, p: &Params) -> f64 {
    let (z, _) = mirror(x);
    branch_value(classify(z, p), z, p)
}

/// `sup_{x∈Ω} |x₂| = 2√(α(λ₂+1)NL)`, identical to the error upper bound.
pub fn sup_x2_on_omega(p: &Params, n: NoiseLevel) -> f64 {
    error_upper_bound(p, n)
}

pub fn omega_contains(x: ErrorState, p: &Params, n: NoiseLevel) -> bool {
    evaluate(x, p) <= n.value()
}

/// Right-hand side of the error dynamics for fixed disturbances, with `sign(0) = 0`.
pub fn error_rhs(x: ErrorState, eta: f64, fddot: f64, p: &Params) -> (f64, f64) {
    let e = x.x1 - eta;
    (
        -p.lambda1() * p.l().sqrt() * ssqrt(e) + x.x2,
        -p.lambda2() * p.l() * sign(e) - fddot,
    )
}

/// Gradient of branch `Wᵢ` at `z`.
fn branch_gradient(index: RegionIndex, z: ErrorState, p: &Params) -> (f64, f64) {
    let s = (p.lambda2() + 1.0) * p.l();
    match index {
        RegionIndex::W1 => (-1.0, z.x2 / (p.alpha() * s)),
        RegionIndex::W2 => (0.0, z.x2 / (2.0 * p.alpha() * s)),
        RegionIndex::W3 => (1.0, -z.x2 / s),
    }
}

/// Time derivative of branch `Wᵢ` along the error dynamics at `z` (`z₂ ≥ 0`
/// convention; callers mirror state and disturbances beforehand).
pub fn branch_rate(index: RegionIndex, z: ErrorState, eta: f64, fddot: f64, p: &Params) -> f64 {
    let (g1, g2) = branch_gradient(index, z, p);
    let (f1, f2) = error_rhs(z, eta, fddot, p);
    g1 * f1 + g2 * f2
}

/// One-sided difference quotient of `V` along a forward-Euler substep of
/// length `h` with frozen disturbances. Only meaningful away from region
/// boundaries and from `x₁ = η`.
pub fn finite_difference_rate(x: ErrorState, eta: f64, fddot: f64, p: &Params, h: f64) -> f64 {
    let (f1, f2) = error_rhs(x, eta, fddot, p);
    let next = ErrorState::new(x.x1 + h * f1, x.x2 + h * f2);
    (evaluate(next, p) - evaluate(x, p)) / h
}

/// Per-branch decrease rates of `V` outside `Ω`, as `V̇ ≤ −rate·√(V − N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaReport {
    /// Branch W1 with `x₁ ≤ η` and `x₂ ≤ √(α(λ₂+1)L(V−N))`: `λ₁√(L/2)`.
    pub region1_small_x2: f64,
    /// Branch W1 with `x₁ ≤ η` and larger `x₂`: `((α−1)/α)√(α(λ₂+1)L)`.
    pub region1_large_x2: f64,
    /// Slack `((α+1)λ₂+α−1)/(α(λ₂+1)) − λ₁/√(2α(λ₂+1))` of the upper gain bound.
    pub epsilon1: f64,
    /// Branch W1 with `x₁ > η`: `ε₁√(2α(λ₂+1)L)`.
    pub region1_positive_offset: f64,
    /// Branch W2: `(λ₂−1)√L/√(α(λ₂+1))`.
    pub region2: f64,
    /// Slack `λ₁ − 2√(2(λ₂+1))` of the lower gain bound.
    pub epsilon2: f64,
    /// Branch W3: `ε₂√L`.
    pub region3: f64,
    /// Minimum of the five rates.
    pub gamma: f64,
}

impl GammaReport {
    pub fn rates(&self) -> [f64; 5] {
        [
            self.region1_small_x2,
            self.region1_large_x2,
            self.region1_positive_offset,
            self.region2,
            self.region3,
        ]
    }
}

pub fn decay_rate_gamma(p: &Params) -> Result<GammaReport> {
    if !validate_condition(p) {
        return Err(Error::GainCondition {
            lambda1: p.lambda1(),
            lambda2: p.lambda2(),
            alpha: p.alpha(),
        });
    }
    let dd = TwoFloat::from;
    let (l1, l2, l, a) = (dd(p.lambda1()), dd(p.lambda2()), dd(p.l()), dd(p.alpha()));
    let s = l2 + 1.0;
    let sqrt_l = l.sqrt();

    let r1 = l1 * div(l, dd(2.0)).sqrt();
    let r2 = div(a - 1.0, a) * (a * s * l).sqrt();
    let eps1 = div((a + 1.0) * l2 + (a - 1.0), a * s) - div(l1, (a * s * 2.0).sqrt());
    let r3 = eps1 * (a * s * l * 2.0).sqrt();
    let r4 = div((l2 - 1.0) * sqrt_l, (a * s).sqrt());
    let eps2 = l1 - (s * 2.0).sqrt() * 2.0;
    let r5 = eps2 * sqrt_l;

    if eps1 <= TwoFloat::from(0.0) || eps2 <= TwoFloat::from(0.0) {
        return Err(Error::GainCondition {
            lambda1: p.lambda1(),
            lambda2: p.lambda2(),
            alpha: p.alpha(),
        });
    }
    let rates = [r1, r2, r3, r4, r5].map(f64::from);
    let gamma = rates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GammaReport {
        region1_small_x2: rates[0],
        region1_large_x2: rates[1],
        epsilon1: f64::from(eps1),
        region1_positive_offset: rates[2],
        region2: rates[3],
        epsilon2: f64::from(eps2),
        region3: rates[4],
        gamma,
    })
}

/// Uniform sampling grid over a box: `rows` points along `x₁`, `cols` along `x₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(bounds: [f64; 4], rows: usize, cols: usize) -> Result<Self> {
        let g = Self {
            x1_min: bounds[0],
            x1_max: bounds[1],
            x2_min: bounds[2],
            x2_max: bounds[3],
            rows,
            cols,
        };
        g.check()?;
        Ok(g)
    }

    /// Parses `x1min,x1max,x2min,x2max` and `RxC`.
    pub fn parse(bounds: &str, resolution: &str) -> Result<Self> {
        let vals: Vec<f64> = bounds
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::spec(bounds, e.to_string()))?;
        let bounds_arr: [f64; 4] = vals
            .try_into()
            .map_err(|_| Error::spec(bounds, "expected four comma-separated numbers"))?;
        let (r, c) = resolution
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::spec(resolution, "expected RxC"))?;
        let parse_count = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::spec(resolution, e.to_string()))
        };
        Self::new(bounds_arr, parse_count(r)?, parse_count(c)?)
    }

    fn check(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::domain(
                "resolution",
                self.rows.min(self.cols) as f64,
                "grid needs at least 2 points per axis",
            ));
        }
        for (name, lo, hi) in [
            ("x1 range", self.x1_min, self.x1_max),
            ("x2 range", self.x2_min, self.x2_max),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::domain(name, hi - lo, "box must have finite, positive extent"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x1(&self, i: usize) -> f64 {
        lerp(self.x1_min, self.x1_max, i, self.rows)
    }

    pub fn x2(&self, j: usize) -> f64 {
        lerp(self.x2_min, self.x2_max, j, self.cols)
    }

    pub fn x1_spacing(&self) -> f64 {
        (self.x1_max - self.x1_min) / (self.rows - 1) as f64
    }
}

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64 / (n - 1) as f64)
    }
}

/// A sampled state and disturbance at which the decrease inequality failed.
/// `eta` and `fddot` are in the coordinates of `state`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreaseViolation {
    pub state: ErrorState,
    pub eta: f64,
    pub fddot: f64,
    pub observed_rate: f64,
    pub required_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Absolute slack on `V̇ ≤ −γ√(V − N)`.
    pub tolerance: f64,
    /// States with `V ≤ N + margin` are skipped.
    pub margin: f64,
    /// Relative offset placing `η` on either side of `x₁`.
    pub delta: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            margin: 1e-9,
            delta: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecreaseReport {
    pub gamma: f64,
    pub states_checked: usize,
    pub states_skipped: usize,
    pub evaluations: usize,
    /// Sorted by grid index (`x₁` index major).
    pub violations: Vec<DecreaseViolation>,
}

impl DecreaseReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Certifies `V̇ ≤ −γ√(V − N)` on `grid` with `γ` from [`decay_rate_gamma`].
pub fn verify_decrease(p: &Params, n: NoiseLevel, grid: &GridSpec) -> Result<Vec<DecreaseViolation>> {
    let gamma = decay_rate_gamma(p)?.gamma;
    Ok(verify_decrease_with(p, n, grid, gamma, &VerifyOptions::default())?.violations)
}

/// Like [`verify_decrease`] with a caller-supplied `γ`; the gain condition is
/// not enforced, which lets mutation runs check that bad gains are caught.
///
/// For every grid state with `V > N + margin` the branch it lies in is
/// checked against the disturbance samples `(±N, ±L)` and `η` just below and
/// above `x₁` (clamped to `[−N, N]`) with the worst-case `f̈`. States within
/// half an `x₁` grid cell of a region threshold are additionally projected
/// onto the threshold and checked against both adjacent branches there.
pub fn verify_decrease_with(
    p: &Params,
    n: NoiseLevel,
    grid: &GridSpec,
    gamma: f64,
    opts: &VerifyOptions,
) -> Result<DecreaseReport> {
    grid.check()?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::domain("gamma", gamma, "must be finite and positive"));
    }
    let near = 0.5 * grid.x1_spacing();

    let rows: Vec<RowResult> = (0..grid.rows)
        .into_par_iter()
        .map(|i| {
            let x1 = grid.x1(i);
            let mut row = RowResult::default();
            for j in 0..grid.cols {
                let x = ErrorState::new(x1, grid.x2(j));
                check_state(x, p, n, gamma, opts, near, &mut row);
            }
            row
        })
        .collect();

    let mut report = DecreaseReport {
        gamma,
        states_checked: 0,
        states_skipped: 0,
        evaluations: 0,
        violations: Vec::new(),
    };
    for row in rows {
        report.states_checked += row.checked;
        report.states_skipped += row.skipped;
        report.evaluations += row.evaluations;
        report.violations.extend(row.violations);
    }
    Ok(report)
}

#[derive(Default)]
struct RowResult {
    checked: usize,
    skipped: usize,
    evaluations: usize,
    violations: Vec<DecreaseViolation>,
}

fn check_state(
    x: ErrorState,
    p: &Params,
    n: NoiseLevel,
    gamma: f64,
    opts: &VerifyOptions,
    near: f64,
    row: &mut RowResult,
) {
    let nv = n.value();
    if evaluate(x, p) <= nv + opts.margin {
        row.skipped += 1;
        return;
    }
    row.checked += 1;
    let (z, mirrored) = mirror(x);
    let idx = classify(z, p);

    let mut generators: Vec<(RegionIndex, ErrorState)> = vec![(idx, z)];
    let (t1, t2) = thresholds(z.x2, p);
    if (z.x1 - t1).abs() <= near {
        let b = ErrorState::new(t1, z.x2);
        generators.push((RegionIndex::W1, b));
        generators.push((RegionIndex::W2, b));
    }
    if (z.x1 - t2).abs() <= near {
        let b = ErrorState::new(t2, z.x2);
        generators.push((RegionIndex::W2, b));
        generators.push((RegionIndex::W3, b));
    }

    for (index, at) in generators {
        let v = branch_value(index, at, p);
        if v <= nv + opts.margin {
            continue;
        }
        let required = -gamma * (v - nv).sqrt();
        for (eta, fddot) in disturbance_samples(index, at, p, n, opts.delta) {
            row.evaluations += 1;
            let observed = branch_rate(index, at, eta, fddot, p);
            if observed > required + opts.tolerance {
                let (eta, fddot) = if mirrored { (-eta, -fddot) } else { (eta, fddot) };
                row.violations.push(DecreaseViolation {
                    state: x,
                    eta,
                    fddot,
                    observed_rate: observed,
                    required_rate: required,
                });
            }
        }
    }
}

/// The four corners of the disturbance box plus `η` straddling `x₁`, the
/// latter paired with the `f̈` that maximizes the branch derivative.
fn disturbance_samples(index: RegionIndex, z: ErrorState, p: &Params, n: NoiseLevel, delta: f64) -> [(f64, f64); 6] {
    let nv = n.value();
    let l = p.l();
    let c = z.x1.clamp(-nv, nv);
    let d = delta * c.abs().max(1.0);
    let (_, g2) = branch_gradient(index, z, p);
    let worst_fddot = if g2 > 0.0 { -l } else { l };
    [
        (-nv, -l),
        (-nv, l),
        (nv, -l),
        (nv, l),
        ((c - d).clamp(-nv, nv), worst_fddot),
        ((c + d).clamp(-nv, nv), worst_fddot),
    ]
}

pub fn write_violations_csv<W: Write + ?Sized>(out: &mut W, violations: &[DecreaseViolation]) -> std::io::Result<()> {
    writeln!(out, "x1,x2,eta,fddot,observed,required")?;
    for v in violations {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            v.state.x1, v.state.x2, v.eta, v.fddot, v.observed_rate, v.required_rate
        )?;
    }
    Ok(())
}
