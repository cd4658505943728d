//! Command line interface.
//!
//! ```text
//! mvtraffic stats <trace> [--view V | --sequential | --combined] [--smooth [G]]
//!                 [--normalization paper|standard]
//! mvtraffic curves <trace>... [--shaping viewN|S|C|smoothG] [--normalization ...]
//! mvtraffic mux cmin <trace> --J N [--epsilon E] [--runs R] [--sims S]
//!                 [--seed K] [--shaping C|smoothG] [--tol T]
//! mvtraffic mux jmax <trace> --C BPS [--epsilon E] [--runs R] [--sims S]
//!                 [--seed K] [--shaping C|smoothG]
//! mvtraffic mux loss <trace> --J N --C BPS [--seed K] [--min-reps A]
//!                 [--max-reps B] [--ci-target W] [--confidence P]
//!                 [--shaping C|smoothG]
//! mvtraffic synth --spec FILE [--seed K] [-o OUT]
//! ```
//!
//! Tabular results go to stdout as CSV (default) or JSON (`--format json`);
//! `--human` switches rate columns from bit/s to Mb/s. Exit codes: 0 on
//! success, 1 when inputs or the computation fail (unreadable or invalid
//! traces, infeasible searches), 2 for usage errors. When `--seed` is
//! absent the `MVTRAFFIC_SEED` environment variable applies, then 0.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::builder::PossibleValue;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::metrics::{
    self, build_curves, demand_stats, merged_mean, sequential_variability, view_stats,
    Normalization, StreamStats,
};
use crate::mux::{estimate_loss, MuxScenario, StopConfig};
use crate::report::{Cell, ReportTable};
use crate::search::{find_cmin, find_jmax, SearchConfig, SearchError};
use crate::streamshape::{demand_for, Shaping};
use crate::trace::{
    parse_trace, serialize_trace, synthesize_trace, MultiviewTrace, SynthSpec, TraceMetaOverrides,
};

pub const SEED_ENV: &str = "MVTRAFFIC_SEED";

/// Parses `args` (including the program name) and executes; tabular and
/// trace output goes to `out`, diagnostics to `err`. Returns the process
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    0
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    2
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(CliError::Run(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

enum CliError {
    /// Flag combinations or values that can never work: exit 2.
    Usage(String),
    /// Failures of the actual work (I/O, invalid data, infeasible search): exit 1.
    Run(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "mvtraffic", version, about = "Traffic statistics and multiplexing simulation for 3D video traces")]
struct Cli {
    /// Output format for tabular results
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: OutputFormat,
    /// Print rates in Mb/s instead of bit/s
    #[arg(long, global = true)]
    human: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

impl ValueEnum for Normalization {
    fn value_variants<'a>() -> &'a [Self] {
        &[Normalization::Paper, Normalization::Standard]
    }

    fn to_possible_value(&self) -> Option<PossibleValue> {
        Some(match self {
            Normalization::Paper => PossibleValue::new("paper"),
            Normalization::Standard => PossibleValue::new("standard"),
        })
    }
}

fn parse_shaping(s: &str) -> Result<Shaping, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Traffic statistics of one trace
    Stats(StatsArgs),
    /// Rate-distortion and variability-distortion curve points
    Curves(CurvesArgs),
    /// Bufferless multiplexing: loss estimation and capacity searches
    Mux {
        #[command(subcommand)]
        command: MuxCommand,
    },
    /// Generate a synthetic trace from a TOML spec
    Synth(SynthArgs),
}

#[derive(Args)]
struct StatsArgs {
    /// Trace file
    trace: PathBuf,
    /// Statistics of this view only
    #[arg(long, group = "selector", value_name = "V")]
    view: Option<u32>,
    /// Statistics of the sequential (interleaved) stream only
    #[arg(long, group = "selector")]
    sequential: bool,
    /// Statistics of the combined (aggregated) stream only
    #[arg(long, group = "selector")]
    combined: bool,
    /// Statistics of the GoP-smoothed demand; G defaults to the trace GoP
    #[arg(long, num_args = 0..=1, value_name = "G")]
    smooth: Option<Option<u64>>,
    /// Variance normalization for the sequential stream
    #[arg(long, value_enum, default_value = "paper")]
    normalization: Normalization,
}

#[derive(Args)]
struct CurvesArgs {
    /// Trace files, one curve point each
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Stream shape whose variability the VD points report
    #[arg(long, value_parser = parse_shaping, default_value = "C")]
    shaping: Shaping,
    /// Variance normalization when --shaping S
    #[arg(long, value_enum, default_value = "paper")]
    normalization: Normalization,
}

#[derive(Subcommand)]
enum MuxCommand {
    /// Smallest capacity meeting the loss target for a fixed stream count
    Cmin(CminArgs),
    /// Largest admissible stream count on a fixed link
    Jmax(JmaxArgs),
    /// Loss estimate for a fixed stream count and link
    Loss(LossArgs),
}

#[derive(Args)]
struct SimArgs {
    /// Loss target epsilon
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Number of runs (the replication budget is runs * sims)
    #[arg(long, default_value_t = 500)]
    runs: u64,
    /// Replications per run
    #[arg(long, default_value_t = 1000)]
    sims: u64,
    /// Seed for the phase generator
    #[arg(long)]
    seed: Option<u64>,
    /// Demand shaping offered to the link (C or smoothG)
    #[arg(long, value_parser = parse_shaping, default_value = "C")]
    shaping: Shaping,
}

#[derive(Args)]
struct CminArgs {
    /// Trace file
    trace: PathBuf,
    /// Number of multiplexed streams
    #[arg(long = "J")]
    streams: u32,
    /// Relative capacity resolution of the bisection
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct JmaxArgs {
    /// Trace file
    trace: PathBuf,
    /// Link capacity in bit/s
    #[arg(long = "C")]
    link_rate: u64,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct LossArgs {
    /// Trace file
    trace: PathBuf,
    /// Number of multiplexed streams
    #[arg(long = "J")]
    streams: u32,
    /// Link capacity in bit/s
    #[arg(long = "C")]
    link_rate: u64,
    /// Seed for the phase generator
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum replications before the stopping rule applies
    #[arg(long, default_value_t = 100)]
    min_reps: u64,
    /// Replication cap
    #[arg(long, default_value_t = 500_000)]
    max_reps: u64,
    /// Stop when the CI half-width falls below this fraction of the mean
    #[arg(long, default_value_t = 0.10)]
    ci_target: f64,
    /// Confidence level of the stopping CI
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Demand shaping offered to the link (C or smoothG)
    #[arg(long, value_parser = parse_shaping, default_value = "C")]
    shaping: Shaping,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML spec file
    #[arg(long)]
    spec: PathBuf,
    /// Seed for size generation
    #[arg(long)]
    seed: Option<u64>,
    /// Output trace file; stdout when absent
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Stats(args) => stats_command(args, cli.format, cli.human, out),
        Command::Curves(args) => curves_command(args, cli.format, cli.human, out),
        Command::Mux { command } => match command {
            MuxCommand::Cmin(args) => cmin_command(args, cli.format, cli.human, out),
            MuxCommand::Jmax(args) => jmax_command(args, cli.format, cli.human, out),
            MuxCommand::Loss(args) => loss_command(args, cli.format, cli.human, out),
        },
        Command::Synth(args) => synth_command(args, out),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw.parse().map_err(|_| {
            CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {raw:?}"))
        }),
        Err(_) => Ok(0),
    }
}

fn load_trace(path: &Path) -> Result<MultiviewTrace, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Run(format!("cannot open {}: {e}", path.display())))?;
    let trace = parse_trace(BufReader::new(file), &TraceMetaOverrides::default())
        .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    let violations = trace.validate();
    if !violations.is_empty() {
        let mut msg = format!("invalid trace {}:", path.display());
        for v in &violations {
            msg.push_str("\n  - ");
            msg.push_str(v);
        }
        return Err(CliError::Run(msg));
    }
    Ok(trace)
}

fn emit(table: &ReportTable, format: OutputFormat, out: &mut dyn Write) -> Result<(), CliError> {
    match format {
        OutputFormat::Csv => table.write_csv(out)?,
        OutputFormat::Json => table.write_json(out)?,
    }
    Ok(())
}

fn rate_column(base: &str, human: bool) -> String {
    if human {
        format!("{base}_mbps")
    } else {
        format!("{base}_bps")
    }
}

fn rate_cell(bps: f64, human: bool) -> Cell {
    Cell::Float(if human { bps / 1e6 } else { bps })
}

fn stats_table(human: bool) -> ReportTable {
    ReportTable::new([
        "shaping".to_string(),
        "unit".to_string(),
        "mean".to_string(),
        "variance".to_string(),
        "std_dev".to_string(),
        "cov".to_string(),
        rate_column("mean_bitrate", human),
        "samples".to_string(),
    ])
}

fn stats_row(label: String, unit: &str, s: &StreamStats, human: bool) -> Vec<Cell> {
    vec![
        Cell::Text(label),
        Cell::from(unit),
        Cell::Float(s.mean),
        Cell::Float(s.variance),
        Cell::Float(s.std_dev),
        Cell::Float(s.cov),
        rate_cell(s.mean_bitrate, human),
        Cell::UInt(s.samples),
    ]
}

fn stats_command(
    args: StatsArgs,
    format: OutputFormat,
    human: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let trace = load_trace(&args.trace)?;
    let run = |e: metrics::MetricsError| CliError::Run(e.to_string());
    let mut table = stats_table(human);

    let smooth_row = |table: &mut ReportTable, g: Option<u64>| -> Result<(), CliError> {
        let g = g.unwrap_or(trace.meta.gop_length);
        let demand = demand_for(&trace, Shaping::Smoothed(Some(g)))
            .map_err(|e| CliError::Run(e.to_string()))?;
        let s = demand_stats(&demand).map_err(run)?;
        table.push_row(stats_row(format!("smooth{g}"), "bits/period", &s, human));
        Ok(())
    };

    let explicit = args.view.is_some() || args.sequential || args.combined || args.smooth.is_some();
    if explicit {
        if let Some(v) = args.view {
            let s = view_stats(&trace, v).map_err(run)?;
            table.push_row(stats_row(format!("view{v}"), "bytes/frame", &s, human));
        }
        if args.sequential {
            let s = sequential_variability(&trace, args.normalization).map_err(run)?;
            table.push_row(stats_row("S".to_string(), "bytes/frame", &s, human));
        }
        if args.combined {
            let s = metrics::combined_variability(&trace).map_err(run)?;
            table.push_row(stats_row("C".to_string(), "bytes/frame", &s, human));
        }
        if let Some(g) = args.smooth {
            smooth_row(&mut table, g)?;
        }
    } else {
        for v in 1..=trace.meta.num_views {
            let s = view_stats(&trace, v).map_err(run)?;
            table.push_row(stats_row(format!("view{v}"), "bytes/frame", &s, human));
        }
        let m = merged_mean(&trace);
        table.push_row(vec![
            Cell::from("merged"),
            Cell::from("bytes/frame"),
            Cell::Float(m.mean),
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            rate_cell(m.mean_bitrate, human),
            Cell::UInt(m.samples),
        ]);
        if trace.meta.num_views >= 2 {
            let s = sequential_variability(&trace, args.normalization).map_err(run)?;
            table.push_row(stats_row("S".to_string(), "bytes/frame", &s, human));
        }
        let s = metrics::combined_variability(&trace).map_err(run)?;
        table.push_row(stats_row("C".to_string(), "bytes/frame", &s, human));
    }

    emit(&table, format, out)
}

fn curves_command(
    args: CurvesArgs,
    format: OutputFormat,
    human: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut encodings = Vec::with_capacity(args.traces.len());
    for path in &args.traces {
        encodings.push((load_trace(path)?, args.shaping));
    }
    let points = build_curves(&encodings, args.normalization)
        .map_err(|e| CliError::Run(e.to_string()))?;

    let mut table = ReportTable::new([
        "kind".to_string(),
        "label".to_string(),
        "avg_psnr_db".to_string(),
        rate_column("avg_bitrate", human),
        "cov".to_string(),
    ]);
    for p in points {
        table.push_row(vec![
            Cell::from(p.kind.to_string()),
            Cell::from(p.label),
            Cell::Float(p.avg_psnr),
            p.avg_bitrate.map_or(Cell::Empty, |r| rate_cell(r, human)),
            Cell::from(p.cov),
        ]);
    }
    emit(&table, format, out)
}

/// Demand under the mux shaping flag; per-view and sequential shapes are a
/// usage error here rather than a data error.
fn mux_demand(
    trace: &MultiviewTrace,
    shaping: Shaping,
) -> Result<crate::streamshape::DemandSequence, CliError> {
    match shaping {
        Shaping::Combined | Shaping::Smoothed(_) => {
            demand_for(trace, shaping).map_err(|e| CliError::Run(e.to_string()))
        }
        other => Err(CliError::Usage(format!(
            "--shaping {other} cannot be multiplexed; use C or smoothG"
        ))),
    }
}

fn search_config(sim: &SimArgs, tol: Option<f64>) -> Result<SearchConfig, CliError> {
    Ok(SearchConfig {
        epsilon: sim.epsilon,
        runs: sim.runs,
        sims_per_run: sim.sims,
        seed: resolve_seed(sim.seed)?,
        bisect_rel_tol: tol.unwrap_or(1e-3),
        bracket_expansion: 2.0,
    })
}

fn map_search_error(e: SearchError) -> CliError {
    match e {
        SearchError::BadConfig(msg) => CliError::Usage(msg),
        other => CliError::Run(other.to_string()),
    }
}

fn cmin_command(
    args: CminArgs,
    format: OutputFormat,
    human: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let trace = load_trace(&args.trace)?;
    let demand = mux_demand(&trace, args.sim.shaping)?;
    let cfg = search_config(&args.sim, Some(args.tol))?;
    let r = find_cmin(&demand, args.streams, &cfg).map_err(map_search_error)?;

    let mut table = ReportTable::new([
        "j".to_string(),
        "epsilon".to_string(),
        "shaping".to_string(),
        rate_column("c_min", human),
        rate_column("bracket_infeasible", human),
        rate_column("bracket_feasible", human),
        "p_hat".to_string(),
        "ci_half_width".to_string(),
        "confidence".to_string(),
        "replications".to_string(),
        "zero_loss".to_string(),
        "pooled_ratio".to_string(),
        "run_mean".to_string(),
        "run_min".to_string(),
        "run_max".to_string(),
        "runs".to_string(),
        "evaluations".to_string(),
    ]);
    table.push_row(vec![
        Cell::UInt(u64::from(args.streams)),
        Cell::Float(cfg.epsilon),
        Cell::from(args.sim.shaping.to_string()),
        rate_cell(r.c_min as f64, human),
        rate_cell(r.bracket_infeasible as f64, human),
        rate_cell(r.bracket_feasible as f64, human),
        Cell::Float(r.loss.p_hat),
        Cell::Float(r.loss.ci_half_width),
        Cell::Float(r.loss.confidence),
        Cell::UInt(r.loss.replications),
        Cell::Bool(r.loss.zero_loss),
        Cell::Float(r.loss.pooled_ratio),
        Cell::Float(r.run_stats.mean),
        Cell::Float(r.run_stats.min),
        Cell::Float(r.run_stats.max),
        Cell::UInt(r.run_stats.runs),
        Cell::UInt(u64::from(r.evaluations)),
    ]);
    emit(&table, format, out)
}

fn jmax_command(
    args: JmaxArgs,
    format: OutputFormat,
    human: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let trace = load_trace(&args.trace)?;
    let demand = mux_demand(&trace, args.sim.shaping)?;
    let cfg = search_config(&args.sim, None)?;
    let j = find_jmax(&demand, args.link_rate, &cfg).map_err(map_search_error)?;

    let mut table = ReportTable::new([
        rate_column("link_rate", human),
        "epsilon".to_string(),
        "shaping".to_string(),
        "j_max".to_string(),
    ]);
    table.push_row(vec![
        rate_cell(args.link_rate as f64, human),
        Cell::Float(cfg.epsilon),
        Cell::from(args.sim.shaping.to_string()),
        Cell::UInt(j),
    ]);
    emit(&table, format, out)
}

fn loss_command(
    args: LossArgs,
    format: OutputFormat,
    human: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if args.min_reps < 2 {
        return Err(CliError::Usage("--min-reps must be at least 2".to_string()));
    }
    if args.max_reps < args.min_reps {
        return Err(CliError::Usage("--max-reps must be >= --min-reps".to_string()));
    }
    if !(args.ci_target > 0.0 && args.ci_target.is_finite()) {
        return Err(CliError::Usage("--ci-target must be positive".to_string()));
    }
    if !(args.confidence > 0.0 && args.confidence < 1.0) {
        return Err(CliError::Usage("--confidence must be in (0, 1)".to_string()));
    }

    let trace = load_trace(&args.trace)?;
    let demand = mux_demand(&trace, args.shaping)?;
    let scenario = MuxScenario::new(&demand, args.streams, args.link_rate)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let stop = StopConfig {
        rel_half_width: args.ci_target,
        confidence: args.confidence,
        min_replications: args.min_reps,
        max_replications: args.max_reps,
    };
    let est = estimate_loss(&scenario, resolve_seed(args.seed)?, &stop);

    let mut table = ReportTable::new([
        "j".to_string(),
        rate_column("link_rate", human),
        "budget_bits".to_string(),
        "shaping".to_string(),
        "p_hat".to_string(),
        "ci_half_width".to_string(),
        "confidence".to_string(),
        "replications".to_string(),
        "zero_loss".to_string(),
        "pooled_ratio".to_string(),
    ]);
    table.push_row(vec![
        Cell::UInt(u64::from(args.streams)),
        rate_cell(args.link_rate as f64, human),
        Cell::UInt(scenario.budget_bits()),
        Cell::from(args.shaping.to_string()),
        Cell::Float(est.p_hat),
        Cell::Float(est.ci_half_width),
        Cell::Float(est.confidence),
        Cell::UInt(est.replications),
        Cell::Bool(est.zero_loss),
        Cell::Float(est.pooled_ratio),
    ]);
    emit(&table, format, out)
}

fn synth_command(args: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| CliError::Run(format!("cannot read {}: {e}", args.spec.display())))?;
    let spec: SynthSpec = toml::from_str(&text)
        .map_err(|e| CliError::Run(format!("{}: {e}", args.spec.display())))?;
    let seed = resolve_seed(args.seed)?;
    let trace = synthesize_trace(&spec, seed).map_err(|e| CliError::Run(e.to_string()))?;

    match args.output {
        Some(path) => {
            let file = File::create(&path)
                .map_err(|e| CliError::Run(format!("cannot create {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            serialize_trace(&trace, &mut w)?;
            w.flush()?;
        }
        None => serialize_trace(&trace, out)?,
    }
    Ok(())
}
