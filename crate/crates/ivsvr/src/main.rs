//! Command-line front end: replay tick streams through the online
//! surface learners, compare algorithms, sweep hyper-parameters, benchmark
//! the data-parallel backend, and generate synthetic streams.

use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{ArgAction, Args, Parser, Subcommand};

use ivsvr::data::results::{save_results, ResultsMeta};
use ivsvr::data::synth::{synth_generate, SyntheticScenario, TruthGrid};
use ivsvr::data::{parse_curve, parse_ticks, save_ticks, write_ticks};
use ivsvr::experiments::{
    edge_filter, mape, sensitivity_sweep, ComparisonRow, ComparisonTable, SweepParam,
    DEFAULT_EDGE_EXCLUSION,
};
use ivsvr::ivs::online::{
    run_online, AlgorithmSpec, IntervalRecord, RunConfig, DEFAULT_INTERVAL_SECONDS,
};
use ivsvr::ivs::{GridSpec, OptionTick, YieldCurve};
use ivsvr::kernel::{KernelSpec, DEFAULT_GAMMA};
use ivsvr::parallel::{benchmark, BatchPlan};

#[derive(Parser)]
#[command(
    name = "ivsvr",
    version,
    about = "Online kernel support-vector regression for implied-volatility surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay one tick stream through a single online learner.
    Run(RunArgs),
    /// Replay the same stream under several algorithms and tabulate accuracy.
    Compare(CompareArgs),
    /// Replay once per value of one hyper-parameter and report sensitivity.
    Sweep(SweepArgs),
    /// Time the data-parallel backend against its serial arm.
    Bench(BenchArgs),
    /// Generate a synthetic tick stream with known ground truth.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Update rule: kpsvr | bkpsvr | ekpsvr | norma | bsgd.
    #[arg(long, default_value = "ekpsvr")]
    algo: String,
    /// Kernel family: gaussian | linear.
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    /// Gaussian kernel width (default 0.25).
    #[arg(long)]
    gamma: Option<f64>,
    /// Novelty threshold in [0, 1) for selection-based rules.
    #[arg(long)]
    rho: Option<f64>,
    /// Regularization strength.
    #[arg(long)]
    lambda: Option<f64>,
    /// Schedule warm-start offset.
    #[arg(long)]
    omega: Option<u64>,
    /// ε-tube half-width in implied-volatility units.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Dictionary budget for bkpsvr (default 50).
    #[arg(long)]
    budget: Option<usize>,
    /// Reopening interval of the replay (default 60, or the scenario's).
    #[arg(long)]
    interval_seconds: Option<u64>,
    /// Leading training time with no emitted records (default 3600).
    #[arg(long)]
    warmup_seconds: Option<u64>,
    /// Reference underlying price anchoring the grid and feature scaling
    /// (default 1770, or the scenario's).
    #[arg(long)]
    f_ref: Option<f64>,
    /// Feed raw strikes instead of strike/reference features.
    #[arg(long)]
    no_feature_scaling: bool,
    /// Worker threads for grid prediction (default 1).
    #[arg(long)]
    workers: Option<usize>,
    /// Strict left-to-right reductions, bit-identical across worker counts.
    #[arg(long, value_name = "BOOL", default_value_t = true, action = ArgAction::Set)]
    deterministic_sum: bool,
}

#[derive(Args, Clone)]
struct StreamArgs {
    /// Tick file to replay; mutually exclusive with --scenario.
    #[arg(long, value_name = "FILE")]
    ticks: Option<PathBuf>,
    /// Yield-curve file (`tenor_years,rate` lines); defaults to the
    /// scenario's flat curve, or flat 2% for tick files.
    #[arg(long, value_name = "FILE")]
    curve: Option<PathBuf>,
    /// Synthetic scenario: "stationary", "drift", or a JSON file.
    #[arg(long, value_name = "FILE")]
    scenario: Option<String>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Write the full per-interval results (grids included) here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Strikes dropped from each grid edge when scoring against truth.
    #[arg(long, value_name = "N", default_value_t = DEFAULT_EDGE_EXCLUSION)]
    edge_exclusion: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Comma-separated algorithms to replay.
    #[arg(long, default_value = "kpsvr,bkpsvr,ekpsvr,norma,bsgd")]
    algos: String,
    /// Write the comparison as CSV here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Strikes dropped from each grid edge when scoring against truth.
    #[arg(long, value_name = "N", default_value_t = DEFAULT_EDGE_EXCLUSION)]
    edge_exclusion: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    stream: StreamArgs,
    /// Hyper-parameter to vary: gamma | rho | omega | lambda.
    #[arg(long)]
    param: String,
    /// Comma-separated parameter values.
    #[arg(long)]
    values: String,
    /// Write the sweep as CSV here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated square problem sizes.
    #[arg(long, default_value = "1024,4096")]
    sizes: String,
    /// Worker threads for the parallel arm (default 4).
    #[arg(long)]
    workers: Option<usize>,
    /// Strict left-to-right reductions, bit-identical across worker counts.
    #[arg(long, value_name = "BOOL", default_value_t = true, action = ArgAction::Set)]
    deterministic_sum: bool,
    /// Write the measurements as CSV here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario: "stationary", "drift", or a JSON file.
    #[arg(long, default_value = "stationary")]
    scenario: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Tick file to write (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write the noiseless per-interval truth grids here.
    #[arg(long, value_name = "FILE")]
    truth_out: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

/// Ground truth carried alongside a synthetic stream.
struct Truth {
    grid: GridSpec,
    intervals: Vec<TruthGrid>,
}

struct ResolvedStream {
    ticks: Vec<OptionTick>,
    curve: YieldCurve,
    truth: Option<Truth>,
    f_ref_hint: Option<f64>,
    interval_hint: Option<u64>,
}

fn load_scenario(name: &str, seed: Option<u64>) -> anyhow::Result<SyntheticScenario> {
    let mut scenario = match name {
        "stationary" => SyntheticScenario::reference_stationary(),
        "drift" => SyntheticScenario::reference_drift(),
        path => {
            let file =
                File::open(path).with_context(|| format!("opening scenario file {path}"))?;
            serde_json::from_reader(file)
                .with_context(|| format!("parsing scenario file {path}"))?
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn resolve_stream(args: &StreamArgs) -> anyhow::Result<ResolvedStream> {
    if args.ticks.is_some() && args.scenario.is_some() {
        bail!("--ticks and --scenario are mutually exclusive");
    }
    if let Some(path) = &args.ticks {
        let ticks = parse_ticks(path)?;
        let curve = match &args.curve {
            Some(p) => parse_curve(p)?,
            None => YieldCurve::flat(0.02),
        };
        return Ok(ResolvedStream {
            ticks,
            curve,
            truth: None,
            f_ref_hint: None,
            interval_hint: None,
        });
    }
    let name = args.scenario.as_deref().unwrap_or("stationary");
    let scenario = load_scenario(name, args.seed)?;
    let out = synth_generate(&scenario)?;
    let curve = match &args.curve {
        Some(p) => parse_curve(p)?,
        None => scenario.curve(),
    };
    Ok(ResolvedStream {
        ticks: out.ticks,
        curve,
        truth: Some(Truth { grid: out.grid, intervals: out.truth }),
        f_ref_hint: Some(scenario.f_ref),
        interval_hint: Some(scenario.interval_seconds),
    })
}

fn build_config(
    model: &ModelArgs,
    stream: &ResolvedStream,
) -> anyhow::Result<RunConfig> {
    let algorithm = AlgorithmSpec::parse(&model.algo, model.budget.unwrap_or(50))?;
    let f_ref = model.f_ref.or(stream.f_ref_hint).unwrap_or(1770.0);
    let mut config = RunConfig::new(algorithm, f_ref)?;
    config.hyper.kernel = match model.kernel.to_ascii_lowercase().as_str() {
        "gaussian" => KernelSpec::gaussian(model.gamma.unwrap_or(DEFAULT_GAMMA))?,
        "linear" => {
            if model.gamma.is_some() {
                bail!("--gamma only applies to the gaussian kernel");
            }
            KernelSpec::linear()
        }
        other => bail!("unknown kernel {other:?} (expected gaussian or linear)"),
    };
    if let Some(rho) = model.rho {
        config.hyper.rho = rho;
    }
    if let Some(lambda) = model.lambda {
        config.hyper.lambda = lambda;
    }
    if let Some(omega) = model.omega {
        config.hyper.omega = omega;
    }
    if let Some(epsilon) = model.epsilon {
        config.hyper.epsilon = epsilon;
    }
    config.interval_seconds = model
        .interval_seconds
        .or(stream.interval_hint)
        .unwrap_or(DEFAULT_INTERVAL_SECONDS);
    if let Some(warmup) = model.warmup_seconds {
        config.warmup_seconds = warmup;
    }
    config.scale_features = !model.no_feature_scaling;
    config.plan = BatchPlan::new(1024, model.workers.unwrap_or(1), model.deterministic_sum)?;
    if let Some(truth) = &stream.truth {
        config.grid = truth.grid.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Mean grid MAPE of the emitted surfaces against synthetic truth, edge
/// strikes excluded; `None` when no interval could be scored.
fn grid_accuracy(
    records: &[IntervalRecord],
    truth: &Truth,
    exclusion: usize,
) -> anyhow::Result<Option<f64>> {
    let n_strikes = truth.grid.strikes().len();
    let n_maturities = truth.grid.maturities().len();
    if 2 * exclusion >= n_strikes {
        eprintln!(
            "note: --edge-exclusion {exclusion} leaves no strikes out of {n_strikes}; \
             skipping grid accuracy"
        );
        return Ok(None);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for record in records {
        let Some(grids) = &record.grids else { continue };
        let Some(truth_grid) = truth
            .intervals
            .iter()
            .find(|t| t.end_timestamp_us == record.end_timestamp_us)
        else {
            continue;
        };
        let actual = edge_filter(&truth_grid.values, n_strikes, n_maturities, exclusion)?;
        for grid in grids {
            let predicted = edge_filter(grid.values(), n_strikes, n_maturities, exclusion)?;
            sum += mape(&predicted, &actual)?;
            count += 1;
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

fn write_out(path: &PathBuf, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let stream = resolve_stream(&args.stream)?;
    let config = build_config(&args.model, &stream)?;
    let result = run_online(stream.ticks.iter().copied(), &stream.curve, &config)?;
    let s = &result.summary;
    println!(
        "run: algo={} ticks={} processed={} skipped_iv={} filtered_moneyness={} intervals={}",
        config.algorithm.label(),
        s.ticks_seen,
        s.processed,
        s.skipped_iv,
        s.filtered_moneyness,
        s.intervals
    );
    let table = ComparisonTable::new(vec![ComparisonRow {
        algo: config.algorithm.label().to_string(),
        summary: result.summary.clone(),
    }]);
    print!("{table}");
    if let Some(truth) = &stream.truth {
        if let Some(grid_mape) = grid_accuracy(&result.records, truth, args.edge_exclusion)? {
            println!(
                "grid mape vs truth (edge exclusion {}): {:.4}%",
                args.edge_exclusion, grid_mape
            );
        }
    }
    if let Some(path) = &args.out {
        let meta = ResultsMeta {
            algo: config.algorithm.label().to_string(),
            strikes: config.grid.strikes().to_vec(),
            maturities: config.grid.maturities().to_vec(),
            f_ref: config.f_ref,
        };
        save_results(path, &meta, &result, true)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<()> {
    let stream = resolve_stream(&args.stream)?;
    let base = build_config(&args.model, &stream)?;
    let mut rows = Vec::new();
    let mut grid_lines = Vec::new();
    for name in args.algos.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let algorithm = AlgorithmSpec::parse(name, args.model.budget.unwrap_or(50))?;
        let mut config = base.clone();
        config.algorithm = algorithm;
        let result = run_online(stream.ticks.iter().copied(), &stream.curve, &config)?;
        if let Some(truth) = &stream.truth {
            if let Some(grid_mape) =
                grid_accuracy(&result.records, truth, args.edge_exclusion)?
            {
                grid_lines.push(format!("{:<10} {:>10.4}", algorithm.label(), grid_mape));
            }
        }
        rows.push(ComparisonRow {
            algo: algorithm.label().to_string(),
            summary: result.summary,
        });
    }
    let table = ComparisonTable::new(rows);
    print!("{table}");
    if !grid_lines.is_empty() {
        println!(
            "\ngrid mape vs truth (edge exclusion {}):\n{:<10} {:>10}",
            args.edge_exclusion, "algo", "mape%"
        );
        for line in grid_lines {
            println!("{line}");
        }
    }
    if let Some(path) = &args.out {
        write_out(path, &table.to_csv())?;
    }
    Ok(())
}

fn parse_f64_list(raw: &str, name: &str) -> anyhow::Result<Vec<f64>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|tok| tok.parse::<f64>().with_context(|| format!("invalid {name} entry {tok:?}")))
        .collect()
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let stream = resolve_stream(&args.stream)?;
    let base = build_config(&args.model, &stream)?;
    let param = SweepParam::parse(&args.param)
        .with_context(|| format!("unknown sweep parameter {:?}", args.param))?;
    let values = parse_f64_list(&args.values, "--values")?;
    let report = sensitivity_sweep(&stream.ticks, &stream.curve, &base, param, &values)?;
    print!("{report}");
    if let Some(path) = &args.out {
        write_out(path, &report.to_csv())?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    let sizes = parse_f64_list(&args.sizes, "--sizes")?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                bail!("--sizes entries must be positive integers, got {v}")
            }
        })
        .collect::<anyhow::Result<Vec<usize>>>()?;
    let plan = BatchPlan::new(1024, args.workers.unwrap_or(4), args.deterministic_sum)?;
    let report = benchmark(&sizes, &plan)?;
    print!("{report}");
    if let Some(path) = &args.out {
        write_out(path, &report.to_csv())?;
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let scenario = load_scenario(&args.scenario, args.seed)?;
    let out = synth_generate(&scenario)?;
    eprintln!(
        "synth: {} ticks over {}s, {} truth grids of {} points",
        out.ticks.len(),
        scenario.duration_seconds,
        out.truth.len(),
        out.grid.n_points()
    );
    match &args.out {
        Some(path) => {
            save_ticks(path, &out.ticks)?;
            println!("wrote {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_ticks(&mut lock, &out.ticks)?;
        }
    }
    if let Some(path) = &args.truth_out {
        let mut text = String::new();
        for grid in &out.truth {
            text.push_str(&format!("{},{}", grid.interval_index, grid.end_timestamp_us));
            for v in &grid.values {
                text.push_str(&format!(",{v:.16e}"));
            }
            text.push('\n');
        }
        write_out(path, &text)?;
    }
    Ok(())
}
