use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use fwlab::experiments::{self, write_heatmap_csv, DEFAULT_HEATMAP_CAP, DEFAULT_WINDOW_FRACTION};
use fwlab::manifest::RunManifest;
use fwlab::slow::{self, geometric_grid, write_slow_curve_csv};
use fwlab::solver::{write_trajectory_csv, StopReason};
use fwlab::{Error, Ext, Objective, Precision, Problem, Real, Result, SolverConfig, StepRule, Vector};

#[derive(Parser)]
#[command(name = "fwlab", version, about = "Frank-Wolfe on lp balls: runs, slow curves, rates and heatmaps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run FW and write the trajectory CSV.
    Solve(SolveArgs),
    /// Iteration counts to a target gap over a grid of starts.
    Heatmap(HeatmapArgs),
    /// The fixed-point curve y*(u) on a geometric grid.
    Fixedpoint(FixedpointArgs),
    /// Fitted rate and asymptotic constant of a slow-start run.
    Rates(RatesArgs),
    /// Constants of the slow regime as JSON.
    Constants(ConstantsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Exact,
    Short,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, value_enum, default_value = "exact")]
    rule: RuleArg,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Stop once the gap is at most this value.
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
    /// slow:<u0> | point:<x1>,<x2> | random:<seed>
    #[arg(long)]
    x0: String,
    /// Use the power-transformed objective with this theta.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// double | extended | extended:<bits>
    #[arg(long, default_value = "double")]
    precision: String,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Ambient dimension; the start is padded with zeros.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Golden-section line search on the objective instead of the closed form.
    #[arg(long)]
    golden_section: bool,
    #[arg(long, default_value = "trajectory.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 200)]
    grid: usize,
    #[arg(long, default_value_t = 1e-4)]
    target: f64,
    #[arg(long, default_value_t = DEFAULT_HEATMAP_CAP)]
    cap: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "heatmap.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct FixedpointArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 1e-6)]
    u_min: f64,
    #[arg(long, default_value_t = 0.1)]
    u_max: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value = "double")]
    precision: String,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "slow_curve.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long)]
    p: f64,
    /// Fit the power-transformed objective with this theta.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    u0: f64,
    #[arg(long, default_value_t = 100_000)]
    iters: usize,
    /// Fit window start as a fraction of the run length.
    #[arg(long, default_value_t = DEFAULT_WINDOW_FRACTION)]
    window: f64,
    #[arg(long, default_value = "rates.json")]
    out: PathBuf,
    /// Also write the trajectory CSV here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
}

#[derive(Args)]
struct ConstantsArgs {
    #[arg(long)]
    p: f64,
    /// Allow 1 < p < 3 (outside theorem scope).
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::UnsupportedObjective(_) | Error::UnsupportedExponent(_) => 2,
        Error::InfeasibleStart { .. } => 3,
        Error::Io(_) => 1,
        _ => 4,
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("--p must be a finite number above 1, got {p}")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Start-point specification of `solve`.
enum StartSpec {
    Slow(String),
    Point(String, String),
    Random(u64),
}

fn parse_start(s: &str) -> Result<StartSpec> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| invalid(format!("--x0 `{s}`: expected slow:<u0>, point:<x1>,<x2> or random:<seed>")))?;
    match kind {
        "slow" => {
            let u0: f64 = rest.parse().map_err(|_| invalid(format!("bad u0 `{rest}`")))?;
            if !(u0 > 0.0 && u0 < 1.0) {
                return Err(invalid(format!("slow start needs 0 < u0 < 1, got {u0}")));
            }
            Ok(StartSpec::Slow(rest.to_string()))
        }
        "point" => {
            let (a, b) = rest
                .split_once(',')
                .ok_or_else(|| invalid(format!("point needs two coordinates, got `{rest}`")))?;
            for c in [a, b] {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| invalid(format!("bad coordinate `{c}`")))?;
            }
            Ok(StartSpec::Point(a.to_string(), b.to_string()))
        }
        "random" => rest
            .parse()
            .map(StartSpec::Random)
            .map_err(|_| invalid(format!("random start needs an integer seed, got `{rest}`"))),
        other => Err(invalid(format!("unknown start kind `{other}`"))),
    }
}

/// Parses decimals into the run's scalar type.
trait Parse: Real {
    fn parse_in(proto: &Self, s: &str) -> Self;
}

impl Parse for f64 {
    fn parse_in(_: &Self, s: &str) -> Self {
        s.parse().expect("validated")
    }
}

impl Parse for Ext {
    fn parse_in(proto: &Self, s: &str) -> Self {
        Ext::parse(s, proto.bits())
    }
}

fn solve_in<S: Parse>(a: &SolveArgs, proto: S) -> Result<serde_json::Value> {
    let p = proto.lit(a.p);
    let start = parse_start(&a.x0)?;
    let x0 = match &start {
        StartSpec::Slow(u0) => slow::slow_start(&S::parse_in(&proto, u0), &p)?,
        StartSpec::Point(x1, x2) => Vector::new(vec![S::parse_in(&proto, x1), S::parse_in(&proto, x2)]),
        StartSpec::Random(seed) => {
            let x = &experiments::random_initializations(a.p, 1, *seed)[0];
            Vector::new(x.iter().map(|c| proto.lit(*c)).collect())
        }
    };
    let x0 = experiments::embed(&x0, a.dim);
    let objective = match a.theta {
        None => Objective::Quadratic,
        Some(theta) => Objective::heb(proto.lit(a.mu), proto.lit(theta))?,
    };
    let rule = match a.rule {
        RuleArg::Exact => StepRule::ExactLineSearch,
        RuleArg::Short => StepRule::ShortStep,
    };
    let cfg = SolverConfig {
        rule,
        max_iters: a.iters,
        gap_tol: a.tol,
        record_every: a.record_every,
        golden_section: a.golden_section,
    };
    let out = fwlab::run(&Problem::new(p, objective)?, &x0, &cfg)?;
    let mut w = create(&a.out)?;
    write_trajectory_csv(&mut w, &out.records)?;
    w.flush()?;
    Ok(json!({
        "iterations": out.iterations,
        "final_gap": out.final_gap.to_decimal(),
        "stop": match out.stop {
            StopReason::Optimal => "optimal",
            StopReason::GapReached => "gap_reached",
            StopReason::MaxIters => "max_iters",
        },
        "monotone_violations": out.monotone_violations,
        "axis_events": out.axis_events,
        "start": x0.iter().map(Real::to_decimal).collect::<Vec<_>>(),
    }))
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    check_p(a.p)?;
    if a.dim < 2 {
        return Err(invalid("--dim must be at least 2"));
    }
    if matches!(a.rule, RuleArg::Short) && a.theta.is_some() {
        return Err(invalid("the short step is only defined for the quadratic objective"));
    }
    if a.golden_section && matches!(a.rule, RuleArg::Short) {
        return Err(invalid("--golden-section applies to the exact line search only"));
    }
    let precision = Precision::parse(&a.precision)?;
    let summary = match precision {
        Precision::Double => solve_in(a, 0.0f64)?,
        Precision::Extended { bits } => solve_in(a, Ext::from_f64(0.0, bits))?,
    };
    let seed = match parse_start(&a.x0)? {
        StartSpec::Random(s) => Some(s),
        _ => None,
    };
    let config = json!({
        "p": a.p,
        "theta": a.theta,
        "mu": a.mu,
        "x0": a.x0,
        "u0": match parse_start(&a.x0)? { StartSpec::Slow(u) => Some(u), _ => None },
        "rule": match a.rule { RuleArg::Exact => "exact", RuleArg::Short => "short" },
        "T": a.iters,
        "tol": a.tol,
        "precision": precision.to_string(),
        "seed": seed,
        "record_every": a.record_every,
        "dim": a.dim,
        "golden_section": a.golden_section,
    });
    RunManifest::new("solve", config, &[&a.out])
        .with_metadata(summary)
        .write_beside(&a.out)?;
    Ok(())
}

fn cmd_heatmap(a: &HeatmapArgs) -> Result<()> {
    check_p(a.p)?;
    let cells = experiments::heatmap(a.p, a.grid, a.target, a.cap, a.jobs)?;
    let mut w = create(&a.out)?;
    write_heatmap_csv(&mut w, &cells)?;
    w.flush()?;
    let capped = cells.iter().filter(|c| c.iters.is_none()).count();
    let config = json!({
        "p": a.p, "grid": a.grid, "target": a.target, "cap": a.cap,
        "rule": "exact", "precision": "double",
    });
    RunManifest::new("heatmap", config, &[&a.out])
        .with_metadata(json!({
            "grid": "uniform on [-1,1]^2, grid x grid points including both ends",
            "interior_margin": experiments::INTERIOR_MARGIN,
            "cells": cells.len(),
            "capped_cells": capped,
            "cap_sentinel": -1,
            "order": "x1 index major, x2 index minor",
        }))
        .write_beside(&a.out)?;
    Ok(())
}

fn fixedpoint_in<S: Real>(a: &FixedpointArgs, proto: S) -> Result<Vec<slow::SlowCurvePoint<S>>> {
    let p = proto.lit(a.p);
    let tol = proto.lit(a.tol);
    let grid = geometric_grid(a.u_min, a.u_max, a.points);
    rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))?
        .install(|| {
            grid.par_iter()
                .map(|&u| slow::fixed_point_y(&proto.lit(u), &p, &tol))
                .collect()
        })
}

fn cmd_fixedpoint(a: &FixedpointArgs) -> Result<()> {
    check_p(a.p)?;
    if !(a.u_min > 0.0 && a.u_min <= a.u_max && a.u_max <= slow::DEFAULT_U_MAX) {
        return Err(invalid(format!(
            "need 0 < --u-min <= --u-max <= {}",
            slow::DEFAULT_U_MAX
        )));
    }
    if a.points == 0 || !(a.tol > 0.0) {
        return Err(invalid("--points must be positive and --tol > 0"));
    }
    let precision = Precision::parse(&a.precision)?;
    let mut w = create(&a.out)?;
    match precision {
        Precision::Double => write_slow_curve_csv(&mut w, &fixedpoint_in(a, 0.0f64)?)?,
        Precision::Extended { bits } => write_slow_curve_csv(&mut w, &fixedpoint_in(a, Ext::from_f64(0.0, bits))?)?,
    }
    w.flush()?;
    let scope = a.p >= 3.0;
    let config = json!({
        "p": a.p, "u_min": a.u_min, "u_max": a.u_max, "points": a.points,
        "tol": a.tol, "precision": precision.to_string(),
    });
    RunManifest::new("fixedpoint", config, &[&a.out])
        .with_metadata(json!({
            "grid": "geometric",
            "bracket": "[0.8 C_p, 1.2 C_p]",
            "in_theorem_scope": scope,
        }))
        .write_beside(&a.out)?;
    if !scope {
        eprintln!("warning: p = {} is outside theorem scope (p >= 3)", a.p);
    }
    Ok(())
}

fn cmd_rates(a: &RatesArgs) -> Result<()> {
    check_p(a.p)?;
    if !(a.u0 > 0.0 && a.u0 < 1.0) {
        return Err(invalid(format!("--u0 must lie in (0, 1), got {}", a.u0)));
    }
    if a.record_every == 0 {
        return Err(invalid("--record-every must be positive"));
    }
    let (report, output) = experiments::rates_report(a.p, a.theta, a.mu, a.u0, a.iters, a.window)?;
    let mut w = create(&a.out)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(path) = &a.trajectory {
        let kept: Vec<_> = output
            .records
            .iter()
            .filter(|r| r.t % a.record_every == 0 || r.t == output.iterations)
            .cloned()
            .collect();
        let mut tw = create(path)?;
        write_trajectory_csv(&mut tw, &kept)?;
        tw.flush()?;
        outputs.push(path);
    }
    let config = json!({
        "p": a.p, "theta": a.theta, "mu": a.mu, "u0": a.u0, "T": a.iters,
        "window": a.window, "rule": "exact", "precision": "double",
        "record_every": a.record_every,
    });
    let manifest = RunManifest::new("rates", config, &outputs);
    for path in outputs {
        manifest.write_beside(path)?;
    }
    Ok(())
}

fn cmd_constants(a: &ConstantsArgs) -> Result<()> {
    let k = if a.force {
        check_p(a.p)?;
        slow::slow_constants_forced(&a.p)?
    } else {
        slow::slow_constants(&a.p)?
    };
    if !k.in_theorem_scope {
        eprintln!("warning: p = {} is outside theorem scope (p >= 3)", a.p);
    }
    let text = serde_json::to_string_pretty(&k.to_json())?;
    println!("{text}");
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        writeln!(w, "{text}")?;
        w.flush()?;
        RunManifest::new("constants", json!({"p": a.p, "force": a.force}), &[path]).write_beside(path)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Heatmap(a) => cmd_heatmap(a),
        Command::Fixedpoint(a) => cmd_fixedpoint(a),
        Command::Rates(a) => cmd_rates(a),
        Command::Constants(a) => cmd_constants(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
