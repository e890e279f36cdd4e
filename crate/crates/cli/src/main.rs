//! `arsenal` command-line driver.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use arsenal_sim::arsenal::{ArsenalConfig, SelectionPolicy};
use arsenal_sim::experiment::{
    compare, run_experiment, CompareConfig, EngineSpec, ExperimentConfig, TraceConfig,
    DEFAULT_LENGTH,
};
use arsenal_sim::metrics::{
    default_component_costs, emit_compare, emit_report, overhead, OverheadReport, ReportFormat,
};
use arsenal_sim::trace::{generate, presets, write_trace, PatternSpec};

#[derive(Parser)]
#[command(
    name = "arsenal",
    version,
    about = "Cache and meta-prefetcher simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and report its metrics.
    Run(RunArgs),
    /// Compare the meta-prefetcher with each component and the baseline.
    Compare(CompareArgs),
    /// Print the hardware storage budget.
    Overhead(OverheadArgs),
    /// Write a synthetic trace file.
    Gen(GenArgs),
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: json or csv.
    #[arg(long)]
    format: Option<ReportFormat>,
}

impl Output {
    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace file, one "PC ADDR R|W" record per line.
    #[arg(long, conflicts_with = "pattern")]
    trace: Option<PathBuf>,
    /// Synthetic pattern, `kind[:key=value,...]`.
    #[arg(long)]
    pattern: Option<String>,
    /// arsenal-tc1, arsenal-tc2, spp, ip-stride, next-line, mlop, tskid or none.
    #[arg(long)]
    engine: Option<EngineSpec>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CompareArgs {
    /// Comparison configuration (TOML) listing the traces.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace file; repeatable.
    #[arg(long)]
    trace: Vec<PathBuf>,
    /// Synthetic pattern; repeatable.
    #[arg(long)]
    pattern: Vec<String>,
    /// arsenal-tc1 or arsenal-tc2.
    #[arg(long)]
    engine: Option<EngineSpec>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct OverheadArgs {
    /// arsenal-tc1 or arsenal-tc2; both when omitted.
    #[arg(long)]
    engine: Option<EngineSpec>,
    /// Emit JSON instead of a text table.
    #[arg(long)]
    format: Option<ReportFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    pattern: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `kind[:key=value,...]` into a pattern and a length.
///
/// Kinds: sequential, stride, random, pcdelta, phased. Keys: len, seed,
/// stride (bytes, for stride), stride_len and seq_len (for phased).
fn parse_pattern(text: &str) -> Result<(PatternSpec, u64)> {
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut len = DEFAULT_LENGTH;
    let mut seed = 0;
    let mut stride = 256i64;
    let mut stride_len = 40_000;
    let mut seq_len = 100_000;
    for kv in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("expected key=value, got `{kv}`"))?;
        let v = v.trim();
        let num = || -> Result<u64> {
            v.parse::<u64>()
                .with_context(|| format!("`{k}` needs an unsigned integer, got `{v}`"))
        };
        match k.trim() {
            "len" => len = num()?,
            "seed" => seed = num()?,
            "stride_len" => stride_len = num()?,
            "seq_len" => seq_len = num()?,
            "stride" => {
                stride = v
                    .parse()
                    .with_context(|| format!("`stride` needs an integer, got `{v}`"))?
            }
            other => bail!("unknown pattern key `{other}`"),
        }
    }
    let spec = match kind {
        "sequential" => presets::sequential(seed),
        "stride" => presets::stride(stride, seed),
        "random" => presets::random_working_set(seed),
        "pcdelta" => presets::per_pc_stride(seed),
        "phased" => presets::phased(stride_len, seq_len, seed),
        other => bail!("unknown pattern kind `{other}`"),
    };
    spec.validate()?;
    Ok((spec, len))
}

fn policy_of(engine: Option<EngineSpec>) -> Result<Option<SelectionPolicy>> {
    match engine {
        None => Ok(None),
        Some(EngineSpec::Arsenal { policy }) => Ok(Some(policy)),
        Some(other) => bail!("expected arsenal-tc1 or arsenal-tc2, got `{other}`"),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let trace = match (&args.trace, &args.pattern) {
        (Some(p), _) => Some(TraceConfig::from_file(p)),
        (None, Some(p)) => {
            let (spec, len) = parse_pattern(p)?;
            Some(TraceConfig::from_pattern(spec, len))
        }
        (None, None) => None,
    };
    let mut cfg = match (&args.config, trace) {
        (Some(path), trace) => {
            let mut cfg = ExperimentConfig::load(path)
                .with_context(|| format!("cannot load {}", path.display()))?;
            if let Some(t) = trace {
                cfg.trace = t;
            }
            cfg
        }
        (None, Some(t)) => ExperimentConfig::new(t, EngineSpec::default()),
        (None, None) => bail!("run needs --config, --trace or --pattern"),
    };
    if let Some(e) = args.engine {
        cfg.engine = e;
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    let report = run_experiment(&cfg)?;
    let mut sink = args.output.sink()?;
    emit_report(&report, args.output.format.unwrap_or_default(), &mut sink)?;
    sink.flush()?;
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let policy = policy_of(args.engine)?;
    let mut traces: Vec<TraceConfig> = args.trace.iter().map(TraceConfig::from_file).collect();
    for p in &args.pattern {
        let (spec, len) = parse_pattern(p)?;
        traces.push(TraceConfig::from_pattern(spec, len).named(p.clone()));
    }
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let mut cfg = CompareConfig::from_toml(&text)?;
            cfg.traces.extend(traces);
            cfg
        }
        None => {
            if traces.is_empty() {
                bail!("compare needs --config, --trace or --pattern");
            }
            CompareConfig::new(SelectionPolicy::TestCase2, traces)
        }
    };
    if let Some(p) = policy {
        cfg.policy = p;
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    let report = compare(&cfg)?;
    let mut sink = args.output.sink()?;
    emit_compare(&report, args.output.format.unwrap_or_default(), &mut sink)?;
    sink.flush()?;
    Ok(())
}

fn overhead_for(policy: SelectionPolicy) -> Result<OverheadReport> {
    let roster = policy.roster();
    let bloom = ArsenalConfig::default().bloom_params(roster[0])?;
    Ok(overhead(
        roster.len() as u32,
        &bloom,
        &default_component_costs(roster),
    )?)
}

fn cmd_overhead(args: OverheadArgs) -> Result<()> {
    let policies = match policy_of(args.engine)? {
        Some(p) => vec![p],
        None => vec![SelectionPolicy::TestCase1, SelectionPolicy::TestCase2],
    };
    let reports = policies
        .into_iter()
        .map(|p| Ok((p, overhead_for(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut sink = Output {
        out: args.out,
        format: None,
    }
    .sink()?;
    match args.format {
        Some(ReportFormat::Json) => {
            let list: Vec<_> = reports.iter().map(|(_, r)| r).collect();
            writeln!(sink, "{}", serde_json::to_string_pretty(&list)?)?;
        }
        Some(ReportFormat::Csv) => bail!("overhead supports text or json output"),
        None => {
            for (p, r) in &reports {
                let name = EngineSpec::Arsenal { policy: *p };
                writeln!(sink, "[{name}]")?;
                write!(sink, "{}", r.render_text())?;
            }
        }
    }
    sink.flush()?;
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let (mut spec, len) = parse_pattern(&args.pattern)?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let events = generate(&spec, len)?;
    let mut sink = Output {
        out: args.out,
        format: None,
    }
    .sink()?;
    write_trace(&events, &mut sink)?;
    sink.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Overhead(a) => cmd_overhead(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
