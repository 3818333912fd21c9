use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dses_core::benchgen::{make_instance, PoseRecord, ScenarioConfig};
use dses_core::harness::{self, MetricName, SearchSpec};
use dses_core::{io, oracle, Error};

#[derive(Parser)]
#[command(name = "dses", version, about = "Correspondence-free rigid point cloud registration by grid search")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a source cloud onto a reference cloud.
    Register(RegisterArgs),
    /// Run a batch of synthetic registration trials.
    Benchmark(BenchmarkArgs),
    /// Write one synthetic instance to disk.
    Generate(GenerateArgs),
    /// Check the mode search and the semi-exhaustive engine against
    /// brute-force references on small instances.
    OracleCheck(OracleArgs),
    /// Time registrations over a list of search ranges.
    Scaling(ScalingArgs),
}

#[derive(Args)]
struct RegisterArgs {
    source: PathBuf,
    reference: PathBuf,
    /// Rotation half-range per Euler angle, degrees.
    #[arg(long, default_value_t = 45.0)]
    rot_range: f64,
    /// Rotation step, degrees.
    #[arg(long, default_value_t = 3.0)]
    rot_step: f64,
    /// Translation half-range per axis, meters.
    #[arg(long, default_value_t = 0.5)]
    trans_range: f64,
    /// Translation bin size, meters.
    #[arg(long, default_value_t = 0.025)]
    trans_bin: f64,
    /// Refinement metric: l2, l1, trunc-l1 or inliers.
    #[arg(long, default_value = "trunc-l1")]
    metric: String,
    /// Truncation threshold of trunc-l1, meters (default five bins).
    #[arg(long)]
    trunc: Option<f64>,
    /// Fraction of the best vote count a rotation needs to be refined.
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// JSON pose the grids are centered on.
    #[arg(long)]
    center_pose: Option<PathBuf>,
    /// Use the full 6-D exhaustive search.
    #[arg(long)]
    exhaustive: bool,
    /// Write the transformed source cloud here (XYZ).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Search file; built-in defaults when absent.
    #[arg(long)]
    search: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-trial CSV output; printed to stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Full JSON report output.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Add wall-clock columns to the CSV (makes it non-reproducible).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Files are written as PREFIX_source.xyz, PREFIX_reference.xyz and
    /// PREFIX_pose.json.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Number of mode-search instances.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Number of engine instances (defaults to a quarter of --trials).
    #[arg(long)]
    engine_trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    search: Option<PathBuf>,
    /// Comma-separated rotation half-ranges, degrees.
    #[arg(long, value_delimiter = ',')]
    rot_ranges: Vec<f64>,
    /// Comma-separated translation half-ranges, meters.
    #[arg(long, value_delimiter = ',')]
    trans_ranges: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::NoCandidate | Error::SearchTooLarge { .. } => 1,
            _ => 2,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_search(path: Option<&Path>) -> Result<SearchSpec, Error> {
    path.map_or_else(|| Ok(SearchSpec::default()), SearchSpec::from_json_file)
}

fn register(args: RegisterArgs) -> CliResult {
    let spec = SearchSpec {
        rot_range_deg: args.rot_range,
        rot_step_deg: args.rot_step,
        trans_range: args.trans_range,
        trans_bin: args.trans_bin,
        q: args.q,
        metric: MetricName::parse(&args.metric)?,
        trunc_threshold: args.trunc,
        center: args.center_pose.as_deref().map(PoseRecord::from_json_file).transpose()?,
        ..SearchSpec::default()
    };
    let cfg = spec.to_config()?;
    let source = io::read_cloud(&args.source)?;
    let reference = io::read_cloud(&args.reference)?;
    let (result, report) = harness::register_clouds(&source, &reference, &cfg, args.exhaustive)?;
    if let Some(out) = &args.out {
        io::write_xyz(out, &result.best.apply(&source))?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> CliResult {
    let scenario = ScenarioConfig::from_json_file(&args.scenario)?;
    let search = load_search(args.search.as_deref())?;
    let report = harness::run_batch(&scenario, &search, args.trials, args.seed)?;
    let csv = harness::batch_csv(&report, args.timings);
    if let Some(path) = &args.json {
        write_file(path, &(serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n"))?;
    }
    emit(args.csv.as_deref(), &csv)?;
    let s = &report.summary;
    eprintln!(
        "trials {} failed {} recall {:.4} median_mie_r_deg {}",
        s.n_trials,
        s.n_failed,
        s.recall,
        s.median_mie_r.map_or_else(String::new, |v| format!("{v:.4}"))
    );
    Ok(())
}

fn generate(args: GenerateArgs) -> CliResult {
    let scenario = ScenarioConfig {
        rng_seed: args.seed,
        ..ScenarioConfig::from_json_file(&args.scenario)?
    };
    let instance = make_instance(&scenario)?;
    for path in instance.write(&args.out_prefix)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn oracle_check(args: OracleArgs) -> CliResult {
    let engine_trials = args.engine_trials.unwrap_or((args.trials / 4).max(1));
    let report = oracle::run_oracle_suite(args.trials, engine_trials, args.seed)?;
    println!("mode_search_instances {}", report.mode_trials);
    println!("mode_beaten_on_quarter_bin_sweep {}", report.mode_sweep_violations);
    println!("mode_beaten_on_bin_lattice {}", report.mode_lattice_violations);
    println!("planted_instances {}", report.planted_trials);
    println!("planted_beaten_on_quarter_bin_sweep {}", report.planted_sweep_violations);
    println!("engine_instances {}", report.engine_trials);
    println!("engine_below_exhaustive {}", report.engine_violations);
    if report.all_hold() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: "oracle violations found".into(),
        })
    }
}

fn scaling(args: ScalingArgs) -> CliResult {
    let scenario = ScenarioConfig::from_json_file(&args.scenario)?;
    let search = load_search(args.search.as_deref())?;
    let rows = harness::run_scaling_study(
        &scenario,
        &search,
        &args.rot_ranges,
        &args.trans_ranges,
        args.seed,
        args.repetitions,
    )?;
    emit(args.csv.as_deref(), &harness::scaling_csv(&rows))?;
    Ok(())
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Register(a) => register(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Generate(a) => generate(a),
        Command::OracleCheck(a) => oracle_check(a),
        Command::Scaling(a) => scaling(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.threads {
        Some(0) => Err(Failure {
            code: 2,
            message: "--threads must be positive".into(),
        }),
        Some(n) => dses_core::exec::with_threads(n, || run(cli.command)),
        None => run(cli.command),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
