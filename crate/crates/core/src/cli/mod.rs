//! The `probeflow` command line. `main.rs` only forwards `std::env::args_os`
//! to [`run`]; everything here is callable from tests.
//!
//! Exit codes: 0 on success, 1 for runtime or data errors, 2 for usage
//! errors (bad flags, out-of-range parameters).

pub mod config;
pub mod grid;
mod render;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::NoProbePolicy;
use crate::ingest::{
    parse_probe_log, run_estimation, window_events, EstimationMode, EstimationRequest, ParseOptions, RowError,
    WindowReport,
};
use crate::reliability::{
    generate_coverage_table, required_probe_count, sweep_required_count, CoverageMethod, CoverageTable,
    SampleSizeRow, DEFAULT_P_GRID, DEFAULT_WINDOWS_MIN,
};
use crate::sim::{
    coverage_table_from_moments, dump_replicas, estimator_moments, export_probe_log, joint_estimation_moments,
    JointMomentsCell, MomentsRow, SimConfig, SimTarget, DEFAULT_MOMENTS_P_GRID, DEFAULT_SIM_WINDOWS_MIN,
};
use crate::stats::{ArrivalRate, ObservationWindow, ProbeFraction};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "probeflow", version, about = "Flow and probe-share estimation from probe-vehicle counts")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expected probe count needed for a given precision and confidence.
    SampleSize(SampleSizeArgs),
    /// Outside-interval probability tables for the known-p flow estimator.
    Coverage(CoverageArgs),
    /// Monte Carlo runs of the signalized approach.
    Simulate(SimulateArgs),
    /// Estimate flow and/or probe share from a probe log.
    Estimate(EstimateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Markdown,
    Json,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "markdown")]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Decimal places for csv and markdown (json is always full precision).
    #[arg(long)]
    precision: Option<usize>,
    /// JSON object whose keys mirror the flags; flags on the command line win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

fn open_unit(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{s} must lie strictly between 0 and 1"))
    }
}

fn fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{s} must lie in (0, 1]"))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{s} must be positive"))
    }
}

/// Parsed `--windows`, `--p-grid` style value. A newtype so clap keeps the
/// list as one value.
#[derive(Debug, Clone, PartialEq)]
struct Grid(Vec<f64>);

fn grid_arg(s: &str) -> std::result::Result<Grid, String> {
    grid::parse_grid(s).map(Grid).map_err(|e| e.to_string())
}

fn policy_arg(s: &str) -> std::result::Result<NoProbePolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct SampleSizeArgs {
    #[arg(long, value_parser = open_unit, default_value = "0.10", conflicts_with = "sweep")]
    alpha: f64,
    #[arg(long, value_parser = open_unit, default_value = "0.15", conflicts_with = "sweep")]
    delta: f64,
    /// δ values, as a list or start:stop:step.
    #[arg(long, value_parser = grid_arg)]
    sweep: Option<Grid>,
    #[arg(long, value_parser = grid_arg, default_value = "0.01,0.05,0.10", requires = "sweep")]
    alphas: Grid,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Exact,
    Normal,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct CoverageArgs {
    #[arg(long, value_parser = positive, default_value = "400")]
    lambda_vph: f64,
    #[arg(long, value_parser = open_unit, default_value = "0.15")]
    delta: f64,
    #[arg(long, value_parser = open_unit, default_value = "0.10")]
    alpha: f64,
    #[arg(long, value_enum, default_value = "exact")]
    method: MethodArg,
    /// Window lengths in minutes.
    #[arg(long, value_parser = grid_arg)]
    windows: Option<Grid>,
    #[arg(long, value_parser = grid_arg)]
    p_grid: Option<Grid>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct SimulateArgs {
    /// 5: single-red-phase moments; 6/9: coverage of p̂₂/λ̂; 7/8: mean/variance of λ̂.
    #[arg(long, default_value = "5", value_parser = clap::builder::PossibleValuesParser::new(["5", "6", "7", "8", "9"]))]
    table: String,
    #[arg(long, value_parser = positive, default_value = "1200")]
    lambda_vph: f64,
    #[arg(long, value_parser = positive, default_value = "120")]
    cycle: f64,
    #[arg(long, value_parser = positive, default_value = "60")]
    red: f64,
    #[arg(long, value_parser = grid_arg)]
    p_grid: Option<Grid>,
    /// Window lengths in minutes (tables 6 to 9); each must hold whole cycles.
    #[arg(long, value_parser = grid_arg)]
    windows: Option<Grid>,
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    replicas: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    #[arg(long, value_parser = open_unit, default_value = "0.15")]
    delta: f64,
    #[arg(long, value_parser = open_unit, default_value = "0.10")]
    alpha: f64,
    #[arg(long, value_parser = policy_arg, default_value = "zero-fill")]
    no_probe_policy: NoProbePolicy,
    /// Probe share for --dump and --export-log (default: first value of the grid).
    #[arg(long, value_parser = fraction)]
    p: Option<f64>,
    /// Write the raw per-cycle replica dump here.
    #[arg(long, value_name = "FILE")]
    dump: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    dump_cycles: u64,
    /// Write one replica's probe events as a probe log.
    #[arg(long, value_name = "FILE")]
    export_log: Option<PathBuf>,
    #[arg(long, value_parser = positive, default_value = "60")]
    export_minutes: f64,
    #[arg(long, default_value_t = 0)]
    export_replica: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    KnownP,
    KnownLambda,
    Joint,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct EstimateArgs {
    /// Probe log CSV, or `-` for stdin.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, value_parser = fraction)]
    p: Option<f64>,
    #[arg(long, value_parser = positive)]
    lambda_vph: Option<f64>,
    #[arg(long, value_parser = positive, default_value = "60")]
    window_min: f64,
    #[arg(long, value_parser = positive)]
    cycle: Option<f64>,
    #[arg(long, value_parser = positive)]
    red: Option<f64>,
    /// Clock time of the first red onset, in seconds.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    red_offset: f64,
    #[arg(long, value_parser = positive, default_value = "7.5")]
    avg_vehicle_length: f64,
    #[arg(long, value_parser = open_unit, default_value = "0.10")]
    alpha: f64,
    #[arg(long, value_parser = open_unit, default_value = "0.15")]
    delta: f64,
    #[arg(long, value_parser = policy_arg, default_value = "zero-fill")]
    no_probe_policy: NoProbePolicy,
    /// Stop at the first malformed row.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    out: OutputArgs,
}

/// Single sample-size answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeOutput {
    pub alpha: f64,
    pub delta: f64,
    pub required_probe_count: f64,
    pub rounded_up: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeSweep {
    pub rows: Vec<SampleSizeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum SimulationResult {
    EstimatorMoments(Vec<MomentsRow>),
    JointMoments(Vec<JointMomentsCell>),
    Coverage(CoverageTable),
}

/// JSON document written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub table: u8,
    pub seed: u64,
    pub replicas: u64,
    pub lambda_per_second: f64,
    pub lambda_vph: f64,
    pub cycle_length: f64,
    pub red_duration: f64,
    pub no_probe_policy: NoProbePolicy,
    pub result: SimulationResult,
}

/// JSON document written by `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub request: EstimationRequest,
    pub total_rows: usize,
    pub rejected: Vec<RowError>,
    pub windows: Vec<WindowReport>,
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(out: &OutputArgs, text: &str) -> Result<()> {
    match &out.output {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(text.as_bytes())?;
            f.flush()?;
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn cmd_sample_size(args: &SampleSizeArgs) -> Result<String> {
    let precision = args.out.precision.unwrap_or(2);
    if let Some(deltas) = &args.sweep {
        let rows = sweep_required_count(&deltas.0, &args.alphas.0)?;
        return match args.out.format {
            Format::Json => json(&SampleSizeSweep { rows }),
            Format::Csv => Ok(render::sample_size_csv(&rows, precision)),
            Format::Markdown => Ok(render::sample_size_grid_markdown(&rows, precision)),
        };
    }
    let n = required_probe_count(args.alpha, args.delta)?;
    let single = SampleSizeOutput {
        alpha: args.alpha,
        delta: args.delta,
        required_probe_count: n,
        rounded_up: n.ceil() as u64,
    };
    match args.out.format {
        Format::Json => json(&single),
        Format::Csv => Ok(render::sample_size_csv(
            &[SampleSizeRow {
                alpha: single.alpha,
                delta: single.delta,
                required_probe_count: n,
            }],
            precision,
        )),
        Format::Markdown => Ok(format!("{} (round up: {})\n", render::num(n, precision), single.rounded_up)),
    }
}

fn cmd_coverage(args: &CoverageArgs) -> Result<String> {
    let lambda = ArrivalRate::from_vph(args.lambda_vph)?;
    let windows = args.windows.clone().map(|g| g.0).unwrap_or_else(|| DEFAULT_WINDOWS_MIN.to_vec());
    let p_grid = args.p_grid.clone().map(|g| g.0).unwrap_or_else(|| DEFAULT_P_GRID.to_vec());
    let method = match args.method {
        MethodArg::Exact => CoverageMethod::ExactPoisson,
        MethodArg::Normal => CoverageMethod::NormalApprox,
    };
    let table = generate_coverage_table(lambda, args.delta, args.alpha, &windows, &p_grid, method)?;
    let precision = args.out.precision.unwrap_or(2);
    match args.out.format {
        Format::Json => json(&table),
        Format::Csv => Ok(render::coverage_csv(&[], &table, precision)),
        Format::Markdown => Ok(render::coverage_markdown(&[], &table, precision)),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let table: u8 = args.table.parse().map_err(|_| Error::invalid("unknown table"))?;
    let lambda = ArrivalRate::from_vph(args.lambda_vph)?;
    let default_grid: &[f64] = if table == 5 { &DEFAULT_MOMENTS_P_GRID } else { &DEFAULT_P_GRID };
    let p_grid = args.p_grid.clone().map(|g| g.0).unwrap_or_else(|| default_grid.to_vec());
    let windows = args.windows.clone().map(|g| g.0).unwrap_or_else(|| DEFAULT_SIM_WINDOWS_MIN.to_vec());
    let first_p = *p_grid.first().ok_or_else(|| Error::invalid("probe fraction grid is empty"))?;
    let p = ProbeFraction::new(args.p.unwrap_or(first_p))?;

    let config = SimConfig::new(lambda, p, args.replicas, args.seed)
        .with_timing(args.cycle, args.red)
        .with_policy(args.no_probe_policy)
        .with_workers(args.workers.map(|w| w as usize));
    config.validate()?;
    if table != 5 {
        for &w in &windows {
            config.cycles_in_window(w)?;
        }
    }

    if let Some(path) = &args.dump {
        let mut f = BufWriter::new(File::create(path)?);
        dump_replicas(&config, args.dump_cycles as usize, &mut f)?;
        f.flush()?;
    }
    if let Some(path) = &args.export_log {
        let cycles = config.cycles_in_window(args.export_minutes)?;
        let mut f = BufWriter::new(File::create(path)?);
        export_probe_log(&config, cycles, args.export_replica, &mut f)?;
        f.flush()?;
    }

    let result = match table {
        5 => SimulationResult::EstimatorMoments(estimator_moments(&config, &p_grid)?),
        7 | 8 => SimulationResult::JointMoments(joint_estimation_moments(&config, &windows, &p_grid)?),
        _ => {
            let target = if table == 6 { SimTarget::P2 } else { SimTarget::LambdaJoint };
            let cells = joint_estimation_moments(&config, &windows, &p_grid)?;
            SimulationResult::Coverage(coverage_table_from_moments(
                &config, &cells, &windows, &p_grid, args.delta, args.alpha, target,
            )?)
        }
    };

    let preamble = vec![format!(
        "seed {} | replicas {} | λ = {} vph | cycle {} s | red {} s | no-probe policy {}",
        config.master_seed,
        config.replicas,
        args.lambda_vph,
        config.cycle_length,
        config.red_duration,
        config.no_probe_policy.as_str()
    )];
    let precision = args.out.precision.unwrap_or(match table {
        5 | 8 => 3,
        _ => 2,
    });
    match args.out.format {
        Format::Json => json(&SimulationOutput {
            table,
            seed: config.master_seed,
            replicas: config.replicas,
            lambda_per_second: lambda.value(),
            lambda_vph: lambda.vph(),
            cycle_length: config.cycle_length,
            red_duration: config.red_duration,
            no_probe_policy: config.no_probe_policy,
            result,
        }),
        Format::Csv => Ok(match &result {
            SimulationResult::EstimatorMoments(rows) => render::moments_csv(&preamble, rows, precision),
            SimulationResult::JointMoments(cells) => render::joint_csv(&preamble, cells, precision),
            SimulationResult::Coverage(t) => render::coverage_csv(&preamble, t, precision),
        }),
        Format::Markdown => Ok(match &result {
            SimulationResult::EstimatorMoments(rows) => render::moments_markdown(&preamble, rows, precision),
            SimulationResult::JointMoments(cells) => {
                render::joint_markdown(&preamble, cells, &windows, &p_grid, table == 8, precision)
            }
            SimulationResult::Coverage(t) => render::coverage_markdown(&preamble, t, precision),
        }),
    }
}

fn estimation_request(args: &EstimateArgs) -> Result<EstimationRequest> {
    let (mode, known_value) = match args.mode {
        ModeArg::KnownP => (
            EstimationMode::KnownP,
            Some(args.p.ok_or_else(|| Error::invalid("--mode known-p needs --p"))?),
        ),
        ModeArg::KnownLambda => (
            EstimationMode::KnownLambda,
            Some(
                ArrivalRate::from_vph(
                    args.lambda_vph
                        .ok_or_else(|| Error::invalid("--mode known-lambda needs --lambda-vph"))?,
                )?
                .value(),
            ),
        ),
        ModeArg::Joint => {
            if args.cycle.is_none() || args.red.is_none() {
                return Err(Error::invalid("--mode joint needs --cycle and --red"));
            }
            (EstimationMode::Joint, None)
        }
    };
    let request = EstimationRequest {
        mode,
        known_value,
        window: ObservationWindow::from_minutes(args.window_min)?,
        red_duration: args.red,
        cycle_length: args.cycle,
        avg_vehicle_length: args.avg_vehicle_length,
        red_offset: args.red_offset,
        alpha: args.alpha,
        delta: args.delta,
        no_probe_policy: args.no_probe_policy,
    };
    request.validate()?;
    Ok(request)
}

fn cmd_estimate(args: &EstimateArgs) -> Result<String> {
    let request = estimation_request(args)?;
    let source: Box<dyn Read> = if args.input.as_os_str() == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(BufReader::new(File::open(&args.input).map_err(|e| {
            Error::Io(io::Error::new(e.kind(), format!("{}: {e}", args.input.display())))
        })?))
    };
    let options = ParseOptions {
        strict: args.strict,
        avg_vehicle_length: args.avg_vehicle_length,
    };
    let log = parse_probe_log(source, &options)?;
    for row in &log.rejected {
        eprintln!("warning: {row}");
    }
    let observations = window_events(&log.events, &request)?;
    let windows = run_estimation(&observations, &request)?;

    let precision = args.out.precision.unwrap_or(2);
    let preamble = vec![format!(
        "mode {} | window {} min | rows {} ({} rejected) | requirement {} probes at α = {}, δ = {}",
        request.mode.as_str(),
        args.window_min,
        log.total_rows,
        log.rejected.len(),
        windows[0].sufficiency.required_rounded,
        request.alpha,
        request.delta
    )];
    match args.out.format {
        Format::Json => json(&EstimateOutput {
            request,
            total_rows: log.total_rows,
            rejected: log.rejected,
            windows,
        }),
        Format::Csv => Ok(render::estimate_csv(&windows, precision)),
        Format::Markdown => Ok(render::estimate_markdown(&preamble, &windows, precision)),
    }
}

/// Finds `--config FILE` and splices its flags in after the subcommand name.
fn expand_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            path = args.get(i + 1).cloned();
            break;
        }
        if let Some(rest) = a.strip_prefix("--config=") {
            path = Some(OsString::from(rest));
            break;
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let extra = config::config_to_args(&text).map_err(|e| match e {
        Error::Json(j) => Error::invalid(format!("config {}: {j}", path.to_string_lossy())),
        other => other,
    })?;
    let Some(sub) = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')) else {
        return Ok(args);
    };
    let at = sub + 2;
    args.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(args)
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (out, rendered) = match &cli.command {
        Command::SampleSize(a) => (&a.out, cmd_sample_size(a)),
        Command::Coverage(a) => (&a.out, cmd_coverage(a)),
        Command::Simulate(a) => (&a.out, cmd_simulate(a)),
        Command::Estimate(a) => (&a.out, cmd_estimate(a)),
    };
    match rendered.and_then(|text| emit(out, &text)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
