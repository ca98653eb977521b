//! Command-line front end.
//!
//! Flags may also come from a JSON config file (`--config`); explicit flags
//! win. Every subcommand prints one JSON report object to stdout and, when
//! `--out` is given, writes the same report (and any trajectory data) into
//! that directory. Failures print a diagnostic JSON object to stderr.
//!
//! Exit codes: 0 success, 2 numerical failure, 3 check failure, 4 usage.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use crate::curvature::{christoffel, riemann_ricci_scalar};
use crate::error::{GeomError, Result};
use crate::evolve::{
    deturck_pullback, export_trajectory, imex_evolve, load_trajectory, picard_solve,
    PicardConfig, Quadrature,
};
use crate::field::{MetricField, TensorField};
use crate::flows::{FlowKind, FlowSpec};
use crate::grid::{Grid, Scheme};
use crate::holder::interpolation_check;
use crate::invariants::{invariant_suite, trajectory_invariant_suite, InvariantKind};
use crate::snapshot::read_snapshot;
use crate::symbol::{ellipticity_check, LAMBDA_THRESHOLD};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_CHECK: i32 = 3;
pub const EXIT_USAGE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "geomflow", version, about = "Higher-order geometric flow toolkit")]
struct Cli {
    /// JSON file supplying defaults for any flag; explicit flags override.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Curvature summary and structural residuals for a stored metric.
    Curvature(CommonArgs),
    /// Ellipticity scan of the linearized flow symbol.
    Symbol(CommonArgs),
    /// Evolve with the semi-implicit scheme and store the slices.
    Flow(CommonArgs),
    /// Fixed-point solve with contraction history.
    Picard(CommonArgs),
    /// Battery of structural checks; exits 3 when any fails.
    Verify(CommonArgs),
    /// Undo the gauge adjustment of a stored trajectory.
    Pullback(CommonArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// Metric snapshot (curvature/symbol/flow/picard/verify) or trajectory
    /// directory (pullback). Flat start on --grid when omitted.
    input: Option<PathBuf>,
    /// Grid as three values: dimension, points per axis, period.
    #[arg(long, num_args = 3, value_names = ["DIM", "SIZE", "LEN"])]
    grid: Option<Vec<String>>,
    /// Derivative scheme: central2, central4 or spectral.
    #[arg(long)]
    scheme: Option<String>,
    /// Flow kind: plap:<p> or obstruction4.
    #[arg(long)]
    flow: Option<String>,
    /// Gauge adjustment, on or off.
    #[arg(long)]
    deturck: Option<String>,
    /// Time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Step count (also the time-grid size for picard).
    #[arg(long)]
    steps: Option<usize>,
    /// Contraction-ball radius for the fixed-point solve.
    #[arg(long)]
    mu: Option<f64>,
    /// Hölder exponent for norm checks.
    #[arg(long)]
    alpha: Option<f64>,
    /// Tolerance; default depends on the subcommand.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory for reports and trajectories.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count for the symbol scan (minimum 50).
    #[arg(long)]
    samples: Option<usize>,
}

/// Flag values a JSON config file may supply; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    grid: Option<(usize, usize, f64)>,
    scheme: Option<String>,
    flow: Option<String>,
    deturck: Option<String>,
    dt: Option<f64>,
    steps: Option<usize>,
    mu: Option<f64>,
    alpha: Option<f64>,
    tol: Option<f64>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    samples: Option<usize>,
}

/// Fully merged settings with defaults applied.
struct Resolved {
    grid: Arc<Grid>,
    scheme: Scheme,
    spec: FlowSpec,
    dt: f64,
    steps: usize,
    mu: f64,
    alpha: f64,
    tol: Option<f64>,
    out: Option<PathBuf>,
    seed: u64,
    samples: usize,
    input: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<Scheme> {
    match s {
        "central2" => Ok(Scheme::Central2),
        "central4" => Ok(Scheme::Central4),
        "spectral" => Ok(Scheme::Spectral),
        other => Err(GeomError::InvalidArgument(format!(
            "unknown scheme '{other}' (expected central2, central4 or spectral)"
        ))),
    }
}

fn parse_grid_flag(vals: &[String]) -> Result<(usize, usize, f64)> {
    let bad = |what: &str, v: &str| {
        GeomError::InvalidArgument(format!("--grid {what} '{v}' is not a number"))
    };
    let dim: usize = vals[0].parse().map_err(|_| bad("dimension", &vals[0]))?;
    let size: usize = vals[1].parse().map_err(|_| bad("size", &vals[1]))?;
    let len: f64 = vals[2].parse().map_err(|_| bad("period", &vals[2]))?;
    Ok((dim, size, len))
}

fn resolve(args: CommonArgs, file: FileConfig) -> Result<Resolved> {
    let scheme = parse_scheme(
        args.scheme
            .or(file.scheme)
            .as_deref()
            .unwrap_or("spectral"),
    )?;
    let (dim, size, len) = match &args.grid {
        Some(vals) => parse_grid_flag(vals)?,
        None => file.grid.unwrap_or((2, 32, std::f64::consts::TAU)),
    };
    let grid = Arc::new(Grid::new(&vec![size; dim], &vec![len; dim], scheme)?);
    let kind = FlowKind::from_str(
        args.flow.or(file.flow).as_deref().unwrap_or("plap:1"),
    )?;
    let deturck = match args.deturck.or(file.deturck).as_deref().unwrap_or("on") {
        "on" => true,
        "off" => false,
        other => {
            return Err(GeomError::InvalidArgument(format!(
                "--deturck must be on or off, got '{other}'"
            )));
        }
    };
    let spec = if deturck {
        FlowSpec::new(kind)
    } else {
        FlowSpec::without_gauge(kind)
    };
    Ok(Resolved {
        grid,
        scheme,
        spec,
        dt: args.dt.or(file.dt).unwrap_or(1e-5),
        steps: args.steps.or(file.steps).unwrap_or(16),
        mu: args.mu.or(file.mu).unwrap_or(0.1),
        alpha: args.alpha.or(file.alpha).unwrap_or(0.5),
        tol: args.tol.or(file.tol),
        out: args.out.or(file.out),
        seed: args.seed.or(file.seed).unwrap_or(0),
        samples: args.samples.or(file.samples).unwrap_or(60),
        input: args.input,
    })
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(FileConfig::default()),
    }
}

/// Starting metric: the snapshot when a path was given, else flat.
fn load_metric(r: &Resolved) -> Result<MetricField> {
    match &r.input {
        Some(path) => {
            let (g, _) = read_snapshot(path, r.scheme)?;
            MetricField::new(g)
        }
        None => MetricField::flat(r.grid.clone()),
    }
}

fn emit(report: &serde_json::Value, out: Option<&Path>, name: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), &text)?;
    }
    println!("{text}");
    Ok(())
}

fn metric_kinds(dim: usize) -> Vec<InvariantKind> {
    if dim == 4 {
        vec![
            InvariantKind::TraceFree,
            InvariantKind::DivFree,
            InvariantKind::Naturality,
        ]
    } else {
        vec![InvariantKind::Naturality]
    }
}

fn cmd_curvature(r: Resolved) -> Result<i32> {
    if r.input.is_none() {
        return Err(GeomError::InvalidArgument(
            "curvature needs a metric snapshot path".into(),
        ));
    }
    let m = load_metric(&r)?;
    let gamma = christoffel(&m)?;
    let pack = riemann_ricci_scalar(&m, &gamma)?;
    let (smin, smax) = pack
        .scalar
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let inv = invariant_suite(
        std::slice::from_ref(&m),
        None,
        &metric_kinds(m.grid().dim()),
        r.seed,
    )?;
    let worst = inv
        .residuals
        .iter()
        .flat_map(|res| res.values.iter().copied())
        .fold(0.0f64, f64::max);
    let report = json!({
        "grid": grid_summary(m.grid()),
        "scalar_range": [smin, smax],
        "max_ricci": pack.ricci.max_abs(),
        "max_riemann": pack.riemann.max_abs(),
        "invariants": inv,
    });
    emit(&report, r.out.as_deref(), "curvature.json")?;
    match r.tol {
        Some(tol) if worst > tol => Ok(EXIT_CHECK),
        _ => Ok(EXIT_PASS),
    }
}

fn cmd_symbol(r: Resolved) -> Result<i32> {
    let h = load_metric(&r)?;
    let threshold = r.tol.unwrap_or(LAMBDA_THRESHOLD);
    let report = ellipticity_check(r.spec, &h, r.samples, r.seed, threshold)?;
    emit(&serde_json::to_value(&report)?, r.out.as_deref(), "symbol.json")?;
    Ok(if report.pass { EXIT_PASS } else { EXIT_CHECK })
}

fn cmd_flow(r: Resolved) -> Result<i32> {
    let out = r.out.clone().ok_or_else(|| {
        GeomError::InvalidArgument("flow needs --out for the trajectory".into())
    })?;
    let h = load_metric(&r)?;
    let store_every = (r.steps / 16).max(1);
    let traj = imex_evolve(&h, r.spec, r.dt, r.steps, store_every)?;
    export_trajectory(&traj, &out, None)?;
    let drift = trajectory_invariant_suite(&traj, &[InvariantKind::Stationarity])?;
    let report = json!({
        "grid": grid_summary(traj.metrics[0].grid()),
        "flow": r.spec.kind.to_string(),
        "deturck": r.spec.deturck,
        "slices": traj.times.len(),
        "t_final": traj.times.last().copied().unwrap_or(0.0),
        "drift_from_initial": drift.residuals[0].values[0],
    });
    emit(&report, Some(&out), "flow.json")?;
    Ok(EXIT_PASS)
}

fn cmd_picard(r: Resolved) -> Result<i32> {
    let h = load_metric(&r)?;
    let cfg = PicardConfig {
        mu: r.mu,
        t_final: r.dt * r.steps as f64,
        time_steps: r.steps,
        quadrature: Quadrature::Trapezoid,
        max_iters: 12,
        tol: r.tol.unwrap_or(1e-9),
    };
    let state = picard_solve(&h, r.spec, &cfg)?;
    if let (Some(traj), Some(out)) = (&state.trajectory, &r.out) {
        export_trajectory(traj, out, Some(&state.contraction_history))?;
    }
    let report = json!({
        "converged": state.converged,
        "stop": state.stop,
        "iterations": state.iterates.len(),
        "contraction_history": state.contraction_history,
        "t_final": cfg.t_final,
    });
    emit(&report, r.out.as_deref(), "picard.json")?;
    Ok(if state.converged { EXIT_PASS } else { EXIT_NUMERIC })
}

fn cmd_verify(r: Resolved) -> Result<i32> {
    let h = load_metric(&r)?;
    let tol = r.tol.unwrap_or(1e-2);
    let mut checks: Vec<serde_json::Value> = Vec::new();

    let sym = ellipticity_check(r.spec, &h, r.samples, r.seed, LAMBDA_THRESHOLD)?;
    checks.push(json!({
        "name": "symbol_elliptic",
        "value": sym.lambda_est,
        "threshold": LAMBDA_THRESHOLD,
        "pass": sym.pass,
    }));

    let inv = invariant_suite(
        std::slice::from_ref(&h),
        None,
        &metric_kinds(h.grid().dim()),
        r.seed,
    )?;
    for res in &inv.residuals {
        checks.push(json!({
            "name": res.kind.to_string(),
            "value": res.values[0],
            "threshold": tol,
            "pass": res.values[0] <= tol,
        }));
    }

    // Short evolution feeding the parabolic-norm checks.
    let steps = r.steps.clamp(4, 32);
    let traj = imex_evolve(&h, r.spec, r.dt, steps, 1)?;
    let flat_start =
        h.metric().sub(MetricField::flat(h.grid_arc())?.metric())?.max_abs() < 1e-14;
    if flat_start {
        let drift =
            trajectory_invariant_suite(&traj, &[InvariantKind::Stationarity])?.residuals[0]
                .values[0];
        checks.push(json!({
            "name": "stationary_flat",
            "value": drift,
            "threshold": 1e-10,
            "pass": drift <= 1e-10,
        }));
    }
    let diffs: Vec<TensorField> = traj
        .metrics
        .iter()
        .map(|m| m.metric().sub(traj.metrics[0].metric()))
        .collect::<Result<_>>()?;
    let interp = interpolation_check(
        &traj.times,
        &diffs,
        r.alpha,
        r.spec.kind.order(),
        4000,
        r.seed,
    )?;
    checks.push(json!({
        "name": "interpolation",
        "value": interp.margin,
        "threshold": 0.0,
        "pass": interp.pass,
    }));

    let pass = checks.iter().all(|c| c["pass"].as_bool().unwrap_or(false));
    let report = json!({"checks": checks, "pass": pass});
    emit(&report, r.out.as_deref(), "verify.json")?;
    Ok(if pass { EXIT_PASS } else { EXIT_CHECK })
}

fn cmd_pullback(r: Resolved) -> Result<i32> {
    let input = r.input.clone().ok_or_else(|| {
        GeomError::InvalidArgument("pullback needs a trajectory directory".into())
    })?;
    let out = r.out.clone().ok_or_else(|| {
        GeomError::InvalidArgument("pullback needs --out for the result".into())
    })?;
    let traj = load_trajectory(&input, r.scheme)?;
    let pulled = deturck_pullback(&traj)?;
    export_trajectory(&pulled, &out, None)?;
    let report = json!({
        "slices": pulled.times.len(),
        "t_final": pulled.times.last().copied().unwrap_or(0.0),
        "adjusted": pulled.adjusted,
    });
    emit(&report, Some(&out), "pullback.json")?;
    Ok(EXIT_PASS)
}

fn grid_summary(grid: &Grid) -> serde_json::Value {
    json!({
        "dim": grid.dim(),
        "sizes": grid.sizes(),
        "scheme": format!("{:?}", grid.scheme()).to_lowercase(),
    })
}

/// Usage problems exit 4; everything else is a numerical failure.
fn failure_code(e: &GeomError) -> i32 {
    match e {
        GeomError::InvalidGrid(_)
        | GeomError::InvalidArgument(_)
        | GeomError::Io(_)
        | GeomError::Serde(_)
        | GeomError::SnapshotFormat(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

fn run(cli: Cli) -> Result<i32> {
    let file = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Command::Curvature(a) => cmd_curvature(resolve(a, file)?),
        Command::Symbol(a) => cmd_symbol(resolve(a, file)?),
        Command::Flow(a) => cmd_flow(resolve(a, file)?),
        Command::Picard(a) => cmd_picard(resolve(a, file)?),
        Command::Verify(a) => cmd_verify(resolve(a, file)?),
        Command::Pullback(a) => cmd_pullback(resolve(a, file)?),
    }
}

/// Entry point; `argv` includes the program name.
pub fn cli_main(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_PASS,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let code = failure_code(&e);
            let diag = json!({"error": e.to_string(), "exit": code});
            eprintln!("{diag}");
            code
        }
    }
}
