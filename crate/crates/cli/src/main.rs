use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coldstart::policy::{HybridConfig, PolicySpec};
use coldstart::report::{self, OutputFormat, SummaryOptions, SweepConfig, SweepEntry};
use coldstart::simulator::{simulate_policy, ExecutionModel, SimOptions};
use coldstart::trace::azure::{parse_summary_table, write_invocation_counts, ParseOptions, RowErrorPolicy};
use coldstart::trace::fit::{validate_distribution, DistributionModel, FitReport};
use coldstart::trace::synthetic::{generate_synthetic, RateDistribution, SyntheticSpec};
use coldstart::trace::{load_trace_dir, write_trace_cache, AppTrace, Expansion, Trigger, SECS_PER_DAY};

#[derive(Parser)]
#[command(name = "coldstart", version, about = "Keep-alive policy simulation for FaaS traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay one policy over a trace set.
    Simulate(SimulateArgs),
    /// Replay a grid of policies and emit one summary row per policy.
    Sweep(SweepArgs),
    /// Write synthetic traces.
    Generate(GenerateArgs),
    /// Compare execution-time and memory samples with their reference distributions.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Fixed,
    Nounload,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExpansionArg {
    MinuteStart,
    Uniform,
}

impl From<ExpansionArg> for Expansion {
    fn from(e: ExpansionArg) -> Self {
        match e {
            ExpansionArg::MinuteStart => Expansion::MinuteStart,
            ExpansionArg::Uniform => Expansion::UniformInMinute,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExecutionArg {
    Zero,
    TraceMean,
}

#[derive(Args)]
struct TraceArgs {
    /// Directory with a *.jsonl trace cache or per-day invocation-count CSVs.
    #[arg(long)]
    trace_dir: PathBuf,
    #[arg(long, value_enum, default_value = "uniform")]
    expansion: ExpansionArg,
    /// Abort on the first malformed row instead of skipping it.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value = "zero")]
    execution: ExecutionArg,
}

impl TraceArgs {
    fn load(&self) -> anyhow::Result<Vec<AppTrace>> {
        let opts =
            ParseOptions { on_row_error: if self.strict { RowErrorPolicy::Abort } else { RowErrorPolicy::Skip } };
        let traces = load_trace_dir(&self.trace_dir, self.expansion.into(), &opts)?;
        log::info!("loaded {} apps from {}", traces.len(), self.trace_dir.display());
        Ok(traces)
    }

    fn sim_options(&self) -> SimOptions {
        SimOptions {
            execution: match self.execution {
                ExecutionArg::Zero => ExecutionModel::Zero,
                ExecutionArg::TraceMean => ExecutionModel::TraceMean,
            },
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Summary output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Also write per-app cold-start rows (CSV) here.
    #[arg(long)]
    per_app: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    trace: TraceArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, value_enum, default_value = "hybrid")]
    policy: PolicyKind,
    #[arg(long, default_value_t = 10.0)]
    keep_alive_min: f64,
    /// Hybrid settings file (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    hybrid: HybridFlags,
    /// Label of the summary row.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct HybridFlags {
    #[arg(long)]
    range_min: Option<u32>,
    #[arg(long)]
    head_pct: Option<f64>,
    #[arg(long)]
    tail_pct: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    arima_margin: Option<f64>,
    /// `inf` disables the histogram branch.
    #[arg(long)]
    cv_threshold: Option<f64>,
    #[arg(long)]
    min_observations: Option<u64>,
    #[arg(long)]
    oob_trigger: Option<f64>,
    /// Never use the forecaster for out-of-range apps.
    #[arg(long)]
    no_arima: bool,
}

impl HybridFlags {
    fn apply(&self, cfg: &mut HybridConfig) {
        let HybridFlags {
            range_min,
            head_pct,
            tail_pct,
            margin,
            arima_margin,
            cv_threshold,
            min_observations,
            oob_trigger,
            no_arima,
        } = *self;
        if let Some(v) = range_min {
            cfg.range_minutes = v;
        }
        if let Some(v) = head_pct {
            cfg.head_pct = v;
        }
        if let Some(v) = tail_pct {
            cfg.tail_pct = v;
        }
        if let Some(v) = margin {
            cfg.margin = v;
        }
        if let Some(v) = arima_margin {
            cfg.arima_margin = v;
        }
        if let Some(v) = cv_threshold {
            cfg.cv_threshold = v;
        }
        if let Some(v) = min_observations {
            cfg.min_observations = v;
        }
        if let Some(v) = oob_trigger {
            cfg.oob_trigger = v;
        }
        if no_arima {
            cfg.use_arima = false;
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    trace: TraceArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Sweep grid (TOML). Without it, fixed keep-alive windows from 5 to 120
    /// minutes and the default hybrid policy at 1 to 4 hour ranges.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Generator settings (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    apps: Option<usize>,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// `csv` writes one invocation-count file per day, `jsonl` a trace cache.
    #[arg(long, value_enum, default_value = "csv")]
    layout: Layout,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct ValidateArgs {
    /// Read samples from the traces in this directory (needs a trace cache
    /// with execution times and memory sizes).
    #[arg(long, conflicts_with_all = ["duration_table", "memory_table"])]
    trace_dir: Option<PathBuf>,
    /// Duration summary table; `Average` is read, in milliseconds.
    #[arg(long)]
    duration_table: Option<PathBuf>,
    /// Memory summary table; `AverageAllocatedMb` is read.
    #[arg(long)]
    memory_table: Option<PathBuf>,
    /// Without any input, validate this many freshly generated apps.
    #[arg(long, default_value_t = 10_000)]
    apps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Generate(a) => generate(a),
        Command::Validate(a) => validate(a),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<coldstart::Error>().map_or("cli", |e| e.kind());
            let record = serde_json::json!({ "kind": kind, "message": format!("{e:#}") });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

fn open_out(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let spec = match a.policy {
        PolicyKind::Fixed => PolicySpec::fixed_minutes(a.keep_alive_min),
        PolicyKind::Nounload => PolicySpec::NoUnload,
        PolicyKind::Hybrid => {
            let mut cfg = match &a.config {
                Some(p) => HybridConfig::from_toml_str(&fs::read_to_string(p)?)?,
                None => HybridConfig::default(),
            };
            a.hybrid.apply(&mut cfg);
            PolicySpec::Hybrid(cfg)
        }
    };
    spec.validate()?;
    let traces = a.trace.load()?;
    let results = simulate_policy(&traces, &spec, &a.trace.sim_options())?;
    let label = a.label.unwrap_or_else(|| spec.default_label());
    // wasted memory is reported against a fixed 10-minute keep-alive
    let baseline = simulate_policy(&traces, &PolicySpec::fixed_minutes(10.0), &a.trace.sim_options())?;
    let point = report::summarize_against(&label, &results, &baseline, &SummaryOptions::default())?;
    report::emit(&[point], a.output.format.into(), open_out(a.output.out.as_deref())?)?;
    if let Some(p) = &a.output.per_app {
        report::emit_per_app(&[(label, results)], File::create(p)?)?;
    }
    Ok(())
}

fn default_grid() -> Vec<SweepEntry> {
    let mut grid: Vec<SweepEntry> = [5.0, 10.0, 20.0, 30.0, 45.0, 60.0, 90.0, 120.0]
        .into_iter()
        .map(|m| SweepEntry::new(PolicySpec::fixed_minutes(m)))
        .collect();
    grid.extend(
        [60, 120, 180, 240].into_iter().map(|range| {
            SweepEntry::new(PolicySpec::Hybrid(HybridConfig { range_minutes: range, ..Default::default() }))
        }),
    );
    grid
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let cfg = match &a.config {
        Some(p) => SweepConfig::from_toml_str(&fs::read_to_string(p)?)?,
        None => SweepConfig { baseline: None, summary: SummaryOptions::default(), policies: default_grid() },
    };
    for entry in &cfg.policies {
        entry.policy.validate().with_context(|| format!("policy {}", entry.label()))?;
    }
    let traces = a.trace.load()?;
    let outcome =
        report::pareto_sweep(&traces, &cfg.policies, cfg.baseline.as_deref(), &cfg.summary, &a.trace.sim_options())?;
    for (label, e) in &outcome.failures {
        eprintln!("{}", serde_json::json!({ "kind": e.kind(), "label": label, "message": e.to_string() }));
    }
    if outcome.points.is_empty() {
        bail!("every sweep configuration failed");
    }
    report::emit(&outcome.points, a.output.format.into(), open_out(a.output.out.as_deref())?)?;
    if let Some(p) = &a.output.per_app {
        report::emit_per_app(&outcome.per_app, File::create(p)?)?;
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let mut spec: SyntheticSpec = match &a.config {
        Some(p) => toml::from_str(&fs::read_to_string(p)?).map_err(coldstart::Error::from)?,
        None => SyntheticSpec::default(),
    };
    if let Some(n) = a.apps {
        spec.n_apps = n;
    }
    if let Some(d) = a.days {
        spec.horizon_secs = d as f64 * SECS_PER_DAY;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let traces = generate_synthetic(&spec)?;
    fs::create_dir_all(&a.out)?;
    match a.layout {
        Layout::Jsonl => write_trace_cache(&traces, BufWriter::new(File::create(a.out.join("traces.jsonl"))?))?,
        Layout::Csv => {
            let days = (spec.horizon_secs / SECS_PER_DAY).ceil().max(1.0) as u32;
            for day in 0..days {
                let name = format!("invocations_per_function_md.anon.d{:02}.csv", day + 1);
                let w = BufWriter::new(File::create(a.out.join(name))?);
                write_invocation_counts(&traces, day, Trigger::Http, w)?;
            }
        }
    }
    log::info!("wrote {} apps to {}", traces.len(), a.out.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct ValidationOutput {
    duration: Option<FitReport>,
    memory: Option<FitReport>,
}

fn validate(a: ValidateArgs) -> anyhow::Result<()> {
    let opts = ParseOptions::default();
    let (durations, memory): (Vec<f64>, Vec<f64>) = if a.duration_table.is_some() || a.memory_table.is_some() {
        let read = |p: &Option<PathBuf>, column: &str, scale: f64| -> anyhow::Result<Vec<f64>> {
            let Some(p) = p else { return Ok(Vec::new()) };
            let rows = parse_summary_table(File::open(p)?, column, &opts)?;
            Ok(rows.into_iter().map(|r| r.value * scale).filter(|v| *v > 0.0).collect())
        };
        (read(&a.duration_table, "Average", 1e-3)?, read(&a.memory_table, "AverageAllocatedMb", 1.0)?)
    } else {
        let traces = match &a.trace_dir {
            Some(dir) => load_trace_dir(dir, Expansion::default(), &opts)?,
            None => {
                // a high rate so no app is dropped for drawing no invocation
                let spec = SyntheticSpec {
                    n_apps: a.apps,
                    rates: RateDistribution::constant(1e4),
                    seed: a.seed,
                    ..Default::default()
                };
                generate_synthetic(&spec)?
            }
        };
        (traces.iter().filter_map(|t| t.exec_secs).collect(), traces.iter().filter_map(|t| t.memory_mb).collect())
    };
    let fit = |samples: &[f64], model: DistributionModel| -> anyhow::Result<Option<FitReport>> {
        if samples.is_empty() {
            return Ok(None);
        }
        Ok(Some(validate_distribution(samples, &model)?))
    };
    let out = ValidationOutput {
        duration: fit(&durations, DistributionModel::LogNormal(Default::default()))?,
        memory: fit(&memory, DistributionModel::Burr(Default::default()))?,
    };
    if out.duration.is_none() && out.memory.is_none() {
        bail!("no duration or memory samples to validate");
    }
    let mut w = open_out(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &out)?;
    writeln!(w)?;
    Ok(())
}
