//! Closed-loop simulation of the differentiator and of its error dynamics,
//! error metrics, invariance checks and CSV export.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::differentiator::{init, solve_generalized_equation, DiffState, SchemeKind, StepScheme};
use crate::lyapunov::{evaluate, ErrorState, GridSpec};
use crate::params::{error_lower_bound, error_upper_bound, NoiseLevel, Params};
use crate::signals::{Noise, SignalPair};
use crate::{sign, ssqrt, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub scheme: StepScheme,
    pub horizon: f64,
    pub params: Params,
    /// Noise bound used for the bound overlays and `V ≤ N` checks.
    pub noise_level: NoiseLevel,
}

impl SimConfig {
    pub fn new(scheme: StepScheme, horizon: f64, params: Params, noise_level: NoiseLevel) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= scheme.dt()) {
            return Err(Error::domain(
                "horizon",
                horizon,
                "must be finite and at least one step",
            ));
        }
        Ok(Self {
            scheme,
            horizon,
            params,
            noise_level,
        })
    }

    /// Implicit scheme, `Δ = 5·10⁻⁴`, `T = 2`, reference gains and `N = 0.01`.
    pub fn reference() -> Self {
        Self {
            scheme: StepScheme::implicit(5e-4).expect("valid step"),
            horizon: 2.0,
            params: Params::reference(),
            noise_level: NoiseLevel::new(0.01).expect("valid noise"),
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.scheme.dt() + 1e-9).floor() as usize
    }

    fn time(&self, k: usize) -> f64 {
        k as f64 * self.scheme.dt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub u: f64,
    pub f: f64,
    pub fdot: f64,
    pub y1: f64,
    pub y2: f64,
    /// `y2 − fdot`.
    pub error: f64,
    /// Lyapunov function at `(y1 − f, y2 − fdot)`.
    pub v: f64,
}

impl Sample {
    pub fn error_state(&self) -> ErrorState {
        ErrorState::new(self.y1 - self.f, self.y2 - self.fdot)
    }
}

pub const TRAJECTORY_HEADER: &str = "t,u,f,fdot,y1,y2,error,V";

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub samples: Vec<Sample>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Sample closest to time `t`.
    pub fn at(&self, t: f64) -> Option<&Sample> {
        let first = self.samples.first()?.t;
        let k = ((t - first) / self.dt).round().max(0.0) as usize;
        self.samples.get(k.min(self.samples.len() - 1))
    }

    /// One row per sample, 17 significant digits.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        for s in &self.samples {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t, s.u, s.f, s.fdot, s.y1, s.y2, s.error, s.v
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != TRAJECTORY_HEADER {
            return Err(Error::Csv {
                line: 1,
                reason: format!("expected header `{TRAJECTORY_HEADER}`"),
            });
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = [0.0; 8];
            let mut n = 0;
            for field in line.split(',') {
                if n == 8 {
                    n += 1;
                    break;
                }
                cols[n] = field.trim().parse().map_err(|e| Error::Csv {
                    line: i + 2,
                    reason: format!("{e}"),
                })?;
                n += 1;
            }
            if n != 8 {
                return Err(Error::Csv {
                    line: i + 2,
                    reason: "expected 8 columns".into(),
                });
            }
            let [t, u, f, fdot, y1, y2, error, v] = cols;
            samples.push(Sample {
                t,
                u,
                f,
                fdot,
                y1,
                y2,
                error,
                v,
            });
        }
        let dt = match samples.as_slice() {
            [a, b, ..] => b.t - a.t,
            _ => 0.0,
        };
        Ok(Self { dt, samples })
    }
}

/// Runs the differentiator on `u = f + η`, starting from `y = (u(0), 0)`.
pub fn simulate(cfg: &SimConfig, pair: &SignalPair) -> TrajectoryRecord {
    let p = &cfg.params;
    let steps = cfg.steps();
    let mut samples = Vec::with_capacity(steps + 1);

    let record = |t: f64, s: DiffState| {
        let k = pair.f.eval(t);
        let u = k.f + pair.eta.eval(t);
        let x = ErrorState::new(s.y1 - k.f, s.y2 - k.fdot);
        Sample {
            t,
            u,
            f: k.f,
            fdot: k.fdot,
            y1: s.y1,
            y2: s.y2,
            error: x.x2,
            v: evaluate(x, p),
        }
    };

    let mut s = init(pair.input(0.0));
    samples.push(record(0.0, s));
    for k in 0..steps {
        let tu = match cfg.scheme.kind() {
            SchemeKind::Explicit => cfg.time(k),
            SchemeKind::Implicit => cfg.time(k + 1),
        };
        s = cfg.scheme.step(s, pair.input(tu), p);
        samples.push(record(cfg.time(k + 1), s));
    }
    TrajectoryRecord {
        dt: cfg.scheme.dt(),
        samples,
    }
}

/// Runs independent configurations in parallel; output order matches input order.
pub fn simulate_batch(runs: &[(SimConfig, SignalPair)]) -> Vec<TrajectoryRecord> {
    runs.par_iter().map(|(cfg, pair)| simulate(cfg, pair)).collect()
}

/// Integrates the error dynamics
///
/// ```text
/// ẋ₁ = −λ₁√L ⌊x₁ − η⌉^{1/2} + x₂
/// ẋ₂ = −λ₂L ⌊x₁ − η⌉⁰ − f̈
/// ```
///
/// from `x0` with the same discretization the differentiator uses, so that
/// with matching inputs the result equals `(y₁ − f, y₂ − ḟ)` of [`simulate`].
/// `f̈` is sampled at each step midpoint and held over the step, its effect on
/// `f` and `ḟ` integrated exactly. The record's `f`/`fdot` columns are that
/// reconstruction, started from `f(0) = 0, ḟ(0) = −x0.x2`.
pub fn simulate_error_system(cfg: &SimConfig, eta: &dyn Noise, fddot: &dyn Noise, x0: ErrorState) -> TrajectoryRecord {
    let p = &cfg.params;
    let dt = cfg.scheme.dt();
    let k1 = p.lambda1() * p.l().sqrt();
    let k2 = p.lambda2() * p.l();
    let a = dt * k1;
    let b = dt * dt * k2;
    let steps = cfg.steps();
    let mut samples = Vec::with_capacity(steps + 1);

    let record = |t: f64, x: ErrorState, f: f64, fdot: f64| Sample {
        t,
        u: f + eta.eval(t),
        f,
        fdot,
        y1: x.x1 + f,
        y2: x.x2 + fdot,
        error: x.x2,
        v: evaluate(x, p),
    };

    let mut x = x0;
    let (mut f, mut fdot) = (0.0, -x0.x2);
    samples.push(record(0.0, x, f, fdot));
    for k in 0..steps {
        let t0 = cfg.time(k);
        let t1 = cfg.time(k + 1);
        let acc = fddot.eval(t0 + 0.5 * dt);
        let defect = 0.5 * dt * dt * acc;
        x = match cfg.scheme.kind() {
            SchemeKind::Explicit => {
                let e = x.x1 - eta.eval(t0);
                ErrorState::new(
                    x.x1 + dt * (-k1 * ssqrt(e) + x.x2) - defect,
                    x.x2 - dt * k2 * sign(e) - dt * acc,
                )
            }
            SchemeKind::Implicit => {
                let eta1 = eta.eval(t1);
                let r = eta1 - x.x1 - dt * x.x2 + defect;
                let sol = solve_generalized_equation(r, a, b);
                let dy2 = if sol.sigma == 0.0 {
                    r / dt
                } else {
                    dt * k2 * sol.selection
                };
                ErrorState::new(eta1 - sol.sigma, x.x2 + dy2 - dt * acc)
            }
        };
        f += dt * fdot + defect;
        fdot += dt * acc;
        samples.push(record(t1, x, f, fdot));
    }
    TrajectoryRecord { dt, samples }
}

/// Piecewise-constant function: `values[i]` on `[breaks[i], breaks[i+1])`,
/// the last value held forever.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    /// `breaks` must be strictly increasing and start at 0; one value per break.
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != values.len() {
            return Err(Error::spec("piecewise", "need one value per breakpoint"));
        }
        if breaks[0] != 0.0 || breaks.windows(2).any(|w| w[0] >= w[1] || w[1].is_nan()) {
            return Err(Error::spec("piecewise", "breakpoints must increase strictly from 0"));
        }
        Ok(Self { breaks, values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Noise for PiecewiseConstant {
    fn eval(&self, t: f64) -> f64 {
        let i = self.breaks.partition_point(|&b| b <= t);
        self.values[i.saturating_sub(1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub tau: f64,
    /// `sup |error|` over samples with `t ≥ tau`.
    pub sup_error_after: f64,
    /// `bound_upper + discretization_allowance`.
    pub band: f64,
    /// Start of the final stay inside `|error| ≤ band`: the sample after the
    /// last exit. `None` if the last sample is outside the band.
    pub band_entry_time: Option<f64>,
    pub bound_upper: f64,
    pub bound_lower: f64,
    /// `λ₂LΔ`, the velocity jump of a single step.
    pub discretization_allowance: f64,
}

pub fn error_summary(rec: &TrajectoryRecord, p: &Params, n: NoiseLevel, tau: f64) -> Result<ErrorSummary> {
    let (first, last) = match (rec.samples.first(), rec.samples.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::domain("record", 0.0, "trajectory is empty")),
    };
    if !(tau >= first && tau <= last) {
        return Err(Error::domain("tau", tau, "must lie within the recorded horizon"));
    }
    let bound_upper = error_upper_bound(p, n);
    let allowance = p.lambda2() * p.l() * rec.dt;
    let band = bound_upper + allowance;
    let sup_error_after = rec
        .samples
        .iter()
        .filter(|s| s.t >= tau)
        .fold(0.0, |m: f64, s| m.max(s.error.abs()));
    let band_entry_time = match rec.samples.iter().rposition(|s| s.error.abs() > band) {
        None => Some(first),
        Some(i) => rec.samples.get(i + 1).map(|s| s.t),
    };
    Ok(ErrorSummary {
        tau,
        sup_error_after,
        band,
        band_entry_time,
        bound_upper,
        bound_lower: error_lower_bound(p.lambda2(), n, p.l()),
        discretization_allowance: allowance,
    })
}

impl ErrorSummary {
    pub fn write_kv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "tau={}", self.tau)?;
        writeln!(out, "sup_error_after={:.17e}", self.sup_error_after)?;
        writeln!(out, "bound_upper={:.17e}", self.bound_upper)?;
        writeln!(out, "bound_lower={:.17e}", self.bound_lower)?;
        writeln!(out, "band={:.17e}", self.band)?;
        match self.band_entry_time {
            Some(t) => writeln!(out, "band_entry_time={t}")?,
            None => writeln!(out, "band_entry_time=none")?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceReport {
    /// `V ≤ N` was reached at some sample.
    pub entered: bool,
    pub entry_time: Option<f64>,
    /// `2Δ(λ₂+1)L·max|x₂|` over the whole record.
    pub slack: f64,
    /// Largest `V − N` after entry (negative if `V` stayed below `N`).
    pub max_excess: f64,
    /// No sample after entry has `V > N + slack`; vacuously true if never entered.
    pub holds: bool,
}

/// Forward invariance of `Ω = {V ≤ N}` along a recorded trajectory, up to a
/// discretization slack.
pub fn omega_invariance_check(rec: &TrajectoryRecord, p: &Params, n: NoiseLevel) -> InvarianceReport {
    let nv = n.value();
    let max_x2 = rec.samples.iter().fold(0.0, |m: f64, s| m.max(s.error.abs()));
    let slack = 2.0 * rec.dt * (p.lambda2() + 1.0) * p.l() * max_x2;
    let Some(i0) = rec.samples.iter().position(|s| s.v <= nv) else {
        return InvarianceReport {
            entered: false,
            entry_time: None,
            slack,
            max_excess: f64::NAN,
            holds: true,
        };
    };
    let max_excess = rec.samples[i0..].iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.v - nv));
    InvarianceReport {
        entered: true,
        entry_time: Some(rec.samples[i0].t),
        slack,
        max_excess,
        holds: max_excess <= slack,
    }
}

/// Lyapunov function sampled on a grid, `x₁` index major.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ContourGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.cols + j]
    }

    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "x1,x2,V")?;
        for i in 0..self.grid.rows {
            let x1 = self.grid.x1(i);
            for j in 0..self.grid.cols {
                writeln!(out, "{:.16e},{:.16e},{:.16e}", x1, self.grid.x2(j), self.value(i, j))?;
            }
        }
        Ok(())
    }
}

pub fn contour_data(p: &Params, grid: &GridSpec) -> Result<ContourGrid> {
    let g = GridSpec::new(
        [grid.x1_min, grid.x1_max, grid.x2_min, grid.x2_max],
        grid.rows,
        grid.cols,
    )?;
    let values = (0..g.rows)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x1 = g.x1(i);
            (0..g.cols).map(move |j| evaluate(ErrorState::new(x1, g.x2(j)), p))
        })
        .collect();
    Ok(ContourGrid { grid: g, values })
}
