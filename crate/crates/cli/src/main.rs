use std::path::{Path, PathBuf};
use std::process::ExitCode;

use carbonfl_core::controller::PolicySpec;
use carbonfl_core::harness::{
    format_trace, run_experiment, run_sweep, solve_request, synth_trace, validate_artifacts, write_atomic,
    write_experiment, write_sweep, ExperimentConfig, SolveRequest, TraceProfile, TraceSource,
};
use carbonfl_core::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_BOUNDS: u8 = 3;

#[derive(Parser)]
#[command(
    name = "cafe",
    version,
    about = "Carbon-budgeted data-center selection for federated training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: every policy for every seed.
    #[command(allow_negative_numbers = true)]
    Run(RunArgs),
    /// Run a grid of experiments over V, q0, H, probe fraction and alpha.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// Recompute bound reports from an experiment's output directory.
    Validate { dir: PathBuf },
    /// Write a synthetic carbon-intensity trace CSV.
    SynthTrace {
        #[arg(long)]
        centers: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value = "diurnal")]
        profile: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one per-slot selection problem from a JSON request.
    Solve {
        input: PathBuf,
        /// Overrides the solver named in the request.
        #[arg(long)]
        solver: Option<String>,
    },
}

/// Flags that override values from the config file.
#[derive(Args, Default)]
struct Overrides {
    /// JSON config file; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of data centers N.
    #[arg(long)]
    n_centers: Option<usize>,
    /// Number of slots T.
    #[arg(long)]
    horizon: Option<usize>,
    /// Utility weight V.
    #[arg(long)]
    v: Option<f64>,
    /// Total carbon budget H, kg.
    #[arg(long)]
    budget_kg: Option<f64>,
    /// Initial queue value.
    #[arg(long)]
    q0: Option<f64>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated policies, e.g. `cafe,smu,fixed_k_utility:4`.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// Trace CSV file; replaces the configured trace source.
    #[arg(long, conflicts_with = "profile")]
    trace: Option<PathBuf>,
    /// Synthetic trace profile: constant, diurnal or random_walk.
    #[arg(long)]
    profile: Option<String>,
    /// Seed of the synthetic trace.
    #[arg(long)]
    trace_seed: Option<u64>,
    /// Fraction of each center's data used to probe its gradient.
    #[arg(long)]
    probe_fraction: Option<f64>,
    /// Local SGD learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Local epochs per slot.
    #[arg(long)]
    local_epochs: Option<usize>,
    /// Dirichlet concentration of the label split.
    #[arg(long)]
    alpha: Option<f64>,
    /// Worker threads for independent cells; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Also write each seed's generated datasets as CSV.
    #[arg(long)]
    write_datasets: bool,
    /// Compute the offline optimum per seed (N <= 12) for the utility bound.
    #[arg(long)]
    oracle_artifacts: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    o: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    o: Overrides,
    /// Comma-separated V values.
    #[arg(long, value_delimiter = ',')]
    v_grid: Option<Vec<f64>>,
    /// Comma-separated initial queue values.
    #[arg(long, value_delimiter = ',')]
    q0_grid: Option<Vec<f64>>,
    /// Comma-separated budget values, kg.
    #[arg(long, value_delimiter = ',')]
    budget_grid: Option<Vec<f64>>,
    /// Comma-separated probe fractions.
    #[arg(long, value_delimiter = ',')]
    probe_fraction_grid: Option<Vec<f64>>,
    /// Comma-separated Dirichlet concentrations.
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

fn parse_profile(s: &str) -> Result<TraceProfile, Failure> {
    TraceProfile::parse(s).ok_or_else(|| Failure::config(format!("unknown trace profile {s:?}")))
}

fn effective_config(o: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &o.config {
        Some(p) => ExperimentConfig::load(p).map_err(Failure::config)?,
        None => ExperimentConfig::default(),
    };
    if let Some(x) = o.n_centers {
        cfg.n_centers = x;
    }
    if let Some(x) = o.horizon {
        cfg.horizon = x;
    }
    if let Some(x) = o.v {
        cfg.v = x;
    }
    if let Some(x) = o.budget_kg {
        cfg.budget_kg = x;
    }
    if let Some(x) = o.q0 {
        cfg.q0 = x;
    }
    if let Some(x) = &o.seeds {
        cfg.seeds = x.clone();
    }
    if let Some(ps) = &o.policies {
        cfg.policies = ps
            .iter()
            .map(|p| p.parse::<PolicySpec>())
            .collect::<Result<_, _>>()
            .map_err(Failure::config)?;
    }
    if let Some(p) = &o.trace {
        cfg.trace = TraceSource::File { path: p.clone() };
    }
    if o.profile.is_some() || o.trace_seed.is_some() {
        let (mut profile, mut seed) = match &cfg.trace {
            TraceSource::Synthetic { profile, seed } => (*profile, *seed),
            TraceSource::File { .. } => (TraceProfile::Diurnal, 0),
        };
        if let Some(p) = &o.profile {
            profile = parse_profile(p)?;
        }
        if let Some(s) = o.trace_seed {
            seed = s;
        }
        cfg.trace = TraceSource::Synthetic { profile, seed };
    }
    if let Some(x) = o.probe_fraction {
        cfg.train.probe_fraction = x;
    }
    if let Some(x) = o.learning_rate {
        cfg.train.learning_rate = x;
    }
    if let Some(x) = o.local_epochs {
        cfg.train.local_epochs = x;
    }
    if let Some(x) = o.alpha {
        cfg.task.dirichlet_alpha = x;
    }
    if let Some(x) = o.workers {
        cfg.workers = x;
    }
    if o.write_datasets {
        cfg.write_datasets = true;
    }
    if o.oracle_artifacts {
        cfg.oracle_artifacts = true;
    }
    if let Some(p) = &o.out {
        cfg.output_dir = Some(p.clone());
    }
    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    cfg.output_dir
        .clone()
        .ok_or_else(|| Failure::config("no output directory: pass --out or set output_dir"))
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = effective_config(&args.o)?;
    let dir = output_dir(&cfg)?;
    let out = run_experiment(&cfg).map_err(|e| match e {
        Error::Config(_) | Error::Trace { .. } | Error::Io { .. } => Failure::config(e),
        other => Failure::runtime(other),
    })?;
    write_experiment(&out, &dir).map_err(Failure::runtime)?;
    print!(
        "{}",
        std::fs::read_to_string(dir.join("summary.csv")).unwrap_or_default()
    );
    let failed: Vec<String> = out
        .failed_cells()
        .map(|(c, e)| format!("{} seed {}: {e}", c.policy, c.seed))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::runtime(format!(
            "{} cell(s) failed:\n{}",
            failed.len(),
            failed.join("\n")
        )))
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut cfg = effective_config(&args.o)?;
    let grid = &mut cfg.sweep;
    for (dst, src) in [
        (&mut grid.v, &args.v_grid),
        (&mut grid.q0, &args.q0_grid),
        (&mut grid.budget_kg, &args.budget_grid),
        (&mut grid.probe_fraction, &args.probe_fraction_grid),
        (&mut grid.dirichlet_alpha, &args.alpha_grid),
    ] {
        if let Some(xs) = src {
            *dst = xs.clone();
        }
    }
    cfg.validate().map_err(Failure::config)?;
    let dir = output_dir(&cfg)?;
    let cells = run_sweep(&cfg).map_err(Failure::config)?;
    write_sweep(&cfg, &cells, &dir).map_err(Failure::runtime)?;
    print!(
        "{}",
        std::fs::read_to_string(dir.join("sweep_summary.csv")).unwrap_or_default()
    );
    let failed = cells
        .iter()
        .filter(|c| {
            c.output
                .as_ref()
                .map_or(true, |o| o.failed_cells().next().is_some())
        })
        .count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::runtime(format!("{failed} sweep cell(s) had failures")))
    }
}

fn cmd_validate(dir: &Path) -> Result<(), Failure> {
    let outcome = validate_artifacts(dir).map_err(|e| match e {
        Error::Io { .. } => Failure::runtime(e),
        other => Failure::config(other),
    })?;
    for r in &outcome.reports {
        println!("# {} seed {}", r.policy, r.seed);
        print!("{}", r.report.to_text());
    }
    println!("summary_consistent: {}", outcome.summary_consistent);
    if outcome.reports.is_empty() {
        log::warn!("no controller runs found in {}", dir.display());
    }
    if outcome.all_pass() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_BOUNDS,
            message: "bound validation failed".into(),
        })
    }
}

fn cmd_synth_trace(
    centers: usize,
    horizon: usize,
    profile: &str,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let trace = synth_trace(centers, horizon, parse_profile(profile)?, seed).map_err(Failure::config)?;
    let text = format_trace(&trace);
    match out {
        Some(p) => write_atomic(p, &text).map_err(Failure::runtime),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_solve(input: &Path, solver: Option<&str>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", input.display())))?;
    let mut req: SolveRequest =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("solve request: {e}")))?;
    if let Some(s) = solver {
        req.solver = carbonfl_core::solvers::SolverId::parse(s)
            .ok_or_else(|| Failure::config(format!("unknown solver {s:?}")))?;
    }
    let resp = solve_request(&req).map_err(|e| match e {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::DimensionMismatch(_)
        | Error::TooManyCenters { .. } => Failure::config(e),
        other => Failure::runtime(other),
    })?;
    println!(
        "{}",
        serde_json::to_string_pretty(&resp).expect("response serializes")
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate { dir } => cmd_validate(dir),
        Command::SynthTrace {
            centers,
            horizon,
            profile,
            seed,
            out,
        } => cmd_synth_trace(*centers, *horizon, profile, *seed, out.as_deref()),
        Command::Solve { input, solver } => cmd_solve(input, solver.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
