//! Command-line front end of the `stwdiff` binary.
//!
//! Signal and noise specs use `kind:key=value,...`:
//!
//! ```text
//! --signal quadratic:L=1,sign=-1[,fdot0=0]   f = fdot0·t + sign·L t²/2
//! --signal zero
//! --noise  switching:N=0.01,c1=0.011,c2=0.00149
//! --noise  constant:N=0.01                   η ≡ N (N may be negative)
//! --noise  none
//! --noise  worstcase:tau=1[,N=0.01]          worst-case pair for the current
//!                                            λ₂ and L; replaces --signal
//! ```
//!
//! Grids are `--box x1min,x1max,x2min,x2max --resolution RxC` with `R`
//! points along `x₁` and `C` along `x₂`.
//!
//! Exit codes: 0 on success, 1 when a check fails (gain condition in
//! `validate`, decrease violations in `verify-lyapunov`), 2 on bad flags.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};

use clap::{Args, Parser, Subcommand};

use crate::differentiator::{SchemeKind, StepScheme};
use crate::harness::{contour_data, error_summary, simulate, SimConfig};
use crate::lyapunov::{decay_rate_gamma, verify_decrease_with, write_violations_csv, GridSpec, VerifyOptions};
use crate::params::{
    convergence_time_bound, error_lower_bound, error_upper_bound, lambda1_range, lambda2_min, tightness_factor,
    validate_condition, NoiseLevel, Params,
};
use crate::signals::{
    sliding_reference, worst_case_pair, ConstantNoise, QuadraticSignal, SignalPair, SwitchingNoise, WorstCaseSpec,
    ZeroSignal,
};
use crate::{Error, Result};

pub const THREADS_ENV: &str = "STWDIFF_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "stwdiff",
    version,
    about = "Super-twisting differentiator error bounds, simulation and Lyapunov certification"
)]
pub struct Cli {
    /// Append a `stamp=<unix seconds>` line to the summary output.
    #[arg(long, global = true)]
    stamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the gain condition and print the admissible gain ranges.
    Validate(ValidateArgs),
    /// Print the worst-case error upper and lower bounds.
    Bounds(BoundsArgs),
    /// Tabulate convergence time against error bound over a lambda2 sweep.
    Tune(TuneArgs),
    /// Simulate the differentiator and write the trajectory CSV.
    Simulate(SimulateArgs),
    /// Certify the Lyapunov decrease inequality on a grid.
    VerifyLyapunov(VerifyArgs),
    /// Export the Lyapunov function on a grid.
    Contour(ContourArgs),
    /// Simulate the worst-case input and compare with the predicted error.
    WorstCase(WorstCaseArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    lambda1: f64,
    #[arg(long)]
    lambda2: f64,
    /// Bound-tightness parameter in (1, 4].
    #[arg(long)]
    alpha: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    lambda2: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    #[arg(long = "N")]
    n: f64,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    #[arg(long = "N", default_value_t = 0.01)]
    n: f64,
    /// Initial derivative |f'(0)| entering the convergence-time bound.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    fdot0: f64,
    #[arg(long = "lambda2-from", default_value_t = 1.1)]
    lambda2_from: f64,
    #[arg(long = "lambda2-to", default_value_t = 3.0)]
    lambda2_to: f64,
    #[arg(long, default_value_t = 20)]
    steps: usize,
}

#[derive(Debug, Args)]
struct GainArgs {
    #[arg(long, default_value_t = 4.1)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.1)]
    lambda2: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
}

impl GainArgs {
    fn params(&self) -> Result<Params> {
        Params::new(self.lambda1, self.lambda2, self.l, self.alpha)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    gains: GainArgs,
    #[arg(long, default_value = "implicit")]
    scheme: String,
    #[arg(long, default_value_t = 5e-4)]
    dt: f64,
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    /// quadratic:L=..,sign=..[,fdot0=..] | zero
    #[arg(long, default_value = "quadratic:L=1,sign=-1", allow_hyphen_values = true)]
    signal: String,
    /// switching:N=..,c1=..,c2=.. | constant:N=.. | none | worstcase:tau=..[,N=..]
    #[arg(
        long,
        default_value = "switching:N=0.01,c1=0.011,c2=0.00149",
        allow_hyphen_values = true
    )]
    noise: String,
    /// Noise bound for the bound overlay; defaults to the noise amplitude.
    #[arg(long = "N")]
    n: Option<f64>,
    /// Start of the window for the steady-state error summary; defaults to
    /// 0.5 or the horizon, whichever is smaller.
    #[arg(long)]
    tau: Option<f64>,
    /// Trajectory CSV path; standard output if absent.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    gains: GainArgs,
    #[arg(long = "N", default_value_t = 0.01)]
    n: f64,
    #[arg(long = "box", default_value = "-3,3,-3,3", allow_hyphen_values = true)]
    bounds: String,
    #[arg(long, default_value = "400x400")]
    resolution: String,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long, default_value_t = 1e-9)]
    margin: f64,
    /// Override the decay rate; required when the gains violate the condition.
    #[arg(long)]
    gamma: Option<f64>,
    /// Violation CSV path; standard output if absent.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct ContourArgs {
    #[arg(long, default_value_t = 1.1)]
    lambda2: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    /// Defaults to 4/2.1.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "box", default_value = "-2,2,-5,5", allow_hyphen_values = true)]
    bounds: String,
    #[arg(long, default_value = "201x201")]
    resolution: String,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct WorstCaseArgs {
    #[command(flatten)]
    gains: GainArgs,
    #[arg(long = "N", default_value_t = 0.01)]
    n: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 1e-5)]
    dt: f64,
    /// Simulated horizon; defaults to tau, or 100 when lambda2 < 1.
    #[arg(long)]
    horizon: Option<f64>,
    /// Optional trajectory CSV path.
    #[arg(long)]
    out: Option<String>,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };

    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = dispatch(&cli, out, err);
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let code = match &cli.command {
        Command::Validate(a) => validate(a, out)?,
        Command::Bounds(a) => bounds(a, out)?,
        Command::Tune(a) => tune(a, out)?,
        Command::Simulate(a) => simulate_cmd(a, out, err, cli.stamp)?,
        Command::VerifyLyapunov(a) => verify_cmd(a, out, err, cli.stamp)?,
        Command::Contour(a) => contour_cmd(a, out)?,
        Command::WorstCase(a) => worst_case_cmd(a, out, cli.stamp)?,
    };
    if cli.stamp
        && matches!(
            cli.command,
            Command::Validate(_) | Command::Bounds(_) | Command::Tune(_)
        )
    {
        stamp(out)?;
    }
    Ok(code)
}

fn stamp(out: &mut dyn Write) -> Result<()> {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    writeln!(out, "stamp={secs}")?;
    Ok(())
}

fn validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    let p = Params::new(a.lambda1, a.lambda2, a.l, a.alpha)?;
    let ok = validate_condition(&p);
    let range = lambda1_range(a.lambda2, a.alpha)?;
    writeln!(out, "condition: {}", if ok { "satisfied" } else { "violated" })?;
    writeln!(out, "lambda2_min={}", lambda2_min(a.alpha)?)?;
    if range.empty {
        writeln!(out, "lambda1_interval=empty")?;
    } else {
        writeln!(out, "lambda1_interval=({}, {})", range.lo, range.hi)?;
    }
    writeln!(out, "lambda1_ratio={}", a.lambda1 / (8.0 * (a.lambda2 + 1.0)).sqrt())?;
    Ok(if ok { 0 } else { 1 })
}

fn bounds(a: &BoundsArgs, out: &mut dyn Write) -> Result<i32> {
    // λ₁ does not enter the bounds; any positive placeholder keeps Params valid.
    let p = Params::new(1.0, a.lambda2, a.l, a.alpha)?;
    let n = NoiseLevel::new(a.n)?;
    writeln!(out, "upper={}", error_upper_bound(&p, n))?;
    writeln!(out, "lower={}", error_lower_bound(a.lambda2, n, a.l))?;
    writeln!(out, "factor={}", tightness_factor(&p))?;
    Ok(0)
}

fn tune(a: &TuneArgs, out: &mut dyn Write) -> Result<i32> {
    if a.steps == 0 {
        return Err(Error::domain("steps", 0.0, "need at least one sweep point"));
    }
    if !(a.lambda2_from > 0.0 && a.lambda2_to >= a.lambda2_from) {
        return Err(Error::domain(
            "lambda2-to",
            a.lambda2_to,
            "sweep range must be positive and ordered",
        ));
    }
    let n = NoiseLevel::new(a.n)?;
    writeln!(
        out,
        "lambda2,lambda1_lo,lambda1_hi,convergence_time,error_upper,error_lower"
    )?;
    for k in 0..a.steps {
        let l2 = if a.steps == 1 {
            a.lambda2_from
        } else {
            a.lambda2_from + (a.lambda2_to - a.lambda2_from) * k as f64 / (a.steps - 1) as f64
        };
        let range = lambda1_range(l2, a.alpha)?;
        let p = Params::new(range.midpoint().unwrap_or(1.0), l2, a.l, a.alpha)?;
        let (lo, hi) = if range.empty {
            ("-".to_string(), "-".to_string())
        } else {
            (range.lo.to_string(), range.hi.to_string())
        };
        let time = convergence_time_bound(&p, a.fdot0).map_or("-".to_string(), |t| t.to_string());
        writeln!(
            out,
            "{l2},{lo},{hi},{time},{},{}",
            error_upper_bound(&p, n),
            error_lower_bound(l2, n, a.l)
        )?;
    }
    Ok(0)
}

/// Space-free `kind:key=value,...` spec.
struct SpecString<'a> {
    raw: &'a str,
    kind: &'a str,
    keys: BTreeMap<&'a str, f64>,
}

impl<'a> SpecString<'a> {
    fn parse(raw: &'a str) -> Result<Self> {
        let (kind, rest) = raw.split_once(':').unwrap_or((raw, ""));
        let mut keys = BTreeMap::new();
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::spec(raw, format!("`{kv}` is not key=value")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::spec(raw, format!("`{v}` is not a number")))?;
            keys.insert(k, v);
        }
        Ok(Self { raw, kind, keys })
    }

    fn get(&self, key: &str, default: Option<f64>) -> Result<f64> {
        self.keys
            .get(key)
            .copied()
            .or(default)
            .ok_or_else(|| Error::spec(self.raw, format!("missing key `{key}`")))
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.keys.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::spec(self.raw, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

fn build_pair(signal: &str, noise: &str, p: &Params) -> Result<SignalPair> {
    let ns = SpecString::parse(noise)?;
    if ns.kind == "worstcase" {
        ns.only(&["tau", "N"])?;
        let spec = WorstCaseSpec::new(ns.get("tau", None)?, p.lambda2(), ns.get("N", Some(0.01))?, p.l())?;
        return Ok(worst_case_pair(&spec));
    }

    let ss = SpecString::parse(signal)?;
    let quadratic = match ss.kind {
        "quadratic" => {
            ss.only(&["L", "sign", "fdot0"])?;
            Some(QuadraticSignal::with_slope(
                ss.get("L", Some(1.0))?,
                ss.get("sign", Some(-1.0))?,
                ss.get("fdot0", Some(0.0))?,
            )?)
        }
        "zero" => {
            ss.only(&[])?;
            None
        }
        other => return Err(Error::spec(signal, format!("unknown signal kind `{other}`"))),
    };
    let l_cert = quadratic.map_or(0.0, |q| q.l);
    let desc = format!("{signal} + {noise}");

    let pair = match ns.kind {
        "switching" => {
            ns.only(&["N", "c1", "c2"])?;
            let sw = SwitchingNoise::new(
                ns.get("N", Some(0.01))?,
                ns.get("c1", Some(0.011))?,
                ns.get("c2", Some(0.00149))?,
            )?;
            match quadratic {
                Some(q) => SignalPair::new(q, sw, l_cert, sw.amplitude(), desc),
                None => SignalPair::new(ZeroSignal, sw, l_cert, sw.amplitude(), desc),
            }
        }
        "constant" | "none" => {
            let c = if ns.kind == "none" {
                ns.only(&[])?;
                0.0
            } else {
                ns.only(&["N"])?;
                ns.get("N", None)?
            };
            match quadratic {
                Some(q) => SignalPair::new(q, ConstantNoise(c), l_cert, c.abs(), desc),
                None => SignalPair::new(ZeroSignal, ConstantNoise(c), l_cert, c.abs(), desc),
            }
        }
        other => return Err(Error::spec(noise, format!("unknown noise kind `{other}`"))),
    };
    Ok(pair)
}

/// Writes CSV to `--out` or standard output. Returns true when it went to a file.
fn with_csv_sink(
    path: &Option<String>,
    out: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<bool> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            body(&mut w)?;
            w.flush()?;
            Ok(true)
        }
        None => {
            body(out)?;
            Ok(false)
        }
    }
}

fn simulate_cmd(a: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write, with_stamp: bool) -> Result<i32> {
    let p = a.gains.params()?;
    let kind: SchemeKind = a.scheme.parse()?;
    let pair = build_pair(&a.signal, &a.noise, &p)?;
    let n = NoiseLevel::new(a.n.unwrap_or(pair.n_cert))?;
    let cfg = SimConfig::new(StepScheme::new(kind, a.dt)?, a.horizon, p, n)?;
    let rec = simulate(&cfg, &pair);
    let tau = a.tau.unwrap_or(a.horizon.min(0.5));
    let summary = error_summary(&rec, &p, n, tau)?;

    let to_file = with_csv_sink(&a.out, out, |w| rec.write_csv(w))?;
    let sink: &mut dyn Write = if to_file { out } else { err };
    writeln!(sink, "input={}", pair.description)?;
    if let Some(w) = &pair.warning {
        writeln!(sink, "warning={w}")?;
    }
    writeln!(sink, "steps={}", rec.len() - 1)?;
    summary.write_kv(sink)?;
    if with_stamp {
        stamp(sink)?;
    }
    Ok(0)
}

fn verify_cmd(a: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write, with_stamp: bool) -> Result<i32> {
    let p = a.gains.params()?;
    let n = NoiseLevel::new(a.n)?;
    let grid = GridSpec::parse(&a.bounds, &a.resolution)?;
    let gamma = match a.gamma {
        Some(g) => g,
        None => decay_rate_gamma(&p)?.gamma,
    };
    let opts = VerifyOptions {
        tolerance: a.tolerance,
        margin: a.margin,
        ..VerifyOptions::default()
    };
    let report = verify_decrease_with(&p, n, &grid, gamma, &opts)?;

    let to_file = with_csv_sink(&a.out, out, |w| write_violations_csv(w, &report.violations))?;
    let sink: &mut dyn Write = if to_file { out } else { err };
    writeln!(sink, "gamma={}", report.gamma)?;
    writeln!(
        sink,
        "condition={}",
        if validate_condition(&p) {
            "satisfied"
        } else {
            "violated"
        }
    )?;
    writeln!(sink, "states_checked={}", report.states_checked)?;
    writeln!(sink, "states_skipped={}", report.states_skipped)?;
    writeln!(sink, "evaluations={}", report.evaluations)?;
    writeln!(sink, "violations={}", report.violations.len())?;
    if with_stamp {
        stamp(sink)?;
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn contour_cmd(a: &ContourArgs, out: &mut dyn Write) -> Result<i32> {
    let p = Params::new(1.0, a.lambda2, a.l, a.alpha.unwrap_or(4.0 / 2.1))?;
    let grid = GridSpec::parse(&a.bounds, &a.resolution)?;
    let c = contour_data(&p, &grid)?;
    with_csv_sink(&a.out, out, |w| c.write_csv(w))?;
    Ok(0)
}

fn worst_case_cmd(a: &WorstCaseArgs, out: &mut dyn Write, with_stamp: bool) -> Result<i32> {
    let p = a.gains.params()?;
    let spec = WorstCaseSpec::new(a.tau, p.lambda2(), a.n, p.l())?;
    let pair = worst_case_pair(&spec);
    let unbounded = p.lambda2() < 1.0;
    let horizon = a.horizon.unwrap_or(if unbounded { 100.0 } else { a.tau });
    let n = NoiseLevel::new(a.n)?;
    let cfg = SimConfig::new(StepScheme::implicit(a.dt)?, horizon, p, n)?;
    let rec = simulate(&cfg, &pair);
    if let Some(path) = &a.out {
        with_csv_sink(&Some(path.clone()), out, |w| rec.write_csv(w))?;
    }

    writeln!(out, "input={}", pair.description)?;
    if let Some(w) = &pair.warning {
        writeln!(out, "warning={w}")?;
    }
    let predicted_lower = error_lower_bound(p.lambda2(), n, p.l());
    writeln!(out, "predicted_lower={predicted_lower}")?;
    if unbounded {
        let last = rec.last().expect("nonempty record");
        writeln!(out, "final_time={}", last.t)?;
        writeln!(out, "final_error={}", last.error)?;
        writeln!(out, "divergence_envelope={}", (p.lambda2() - 1.0) * p.l() * last.t)?;
    } else {
        let at_tau = rec.at(a.tau).expect("nonempty record");
        let mut dev: f64 = 0.0;
        for s in rec.samples.iter().filter(|s| s.t <= a.tau) {
            let r = sliding_reference(&spec, s.t)?;
            dev = dev.max((s.y1 - r.y1).abs()).max((s.y2 - r.y2).abs());
        }
        writeln!(out, "theta={}", spec.theta())?;
        writeln!(out, "predicted_error={}", spec.predicted_error())?;
        writeln!(out, "achieved_error={}", at_tau.error)?;
        writeln!(out, "attainment_ratio={}", at_tau.error.abs() / predicted_lower)?;
        writeln!(out, "max_tracking_deviation={dev}")?;
    }
    if with_stamp {
        stamp(out)?;
    }
    Ok(0)
}
