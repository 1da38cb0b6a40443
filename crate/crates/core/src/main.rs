use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use branchsim::rngstreams::MasterSeed;
use branchsim::runner::{self, ExperimentConfig, ExperimentKind, RunError};

#[derive(Debug, Parser)]
#[command(name = "branchsim", version, about = "Count-grouped branch coherence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// ε(n), q(n) and p(n) for one model instance
    Profile(CommonArgs),
    /// ⟨Π_1⟩ along a single conditional branch
    Trajectory(CommonArgs),
    /// Grouped recursion vs. brute-force history enumeration
    Oracle(CommonArgs),
    /// Profiles over a grid of D, L, c and block split
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML experiment config
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overrides model.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overrides `out`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
}

fn run(kind: ExperimentKind, args: &CommonArgs) -> Result<(), RunError> {
    if let Some(n) = args.threads {
        configure_threads(n)?;
    }
    let mut config = ExperimentConfig::load(&args.config, Some(kind))?;
    if let Some(seed) = args.seed {
        config.model.master_seed = MasterSeed(seed);
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    let out = config.out_dir.display().to_string();
    match kind {
        ExperimentKind::Profile => {
            let o = runner::run_profile(&config)?;
            println!(
                "profile written to {out}: tv_distance={:.6e} argmin_eps={:?} live={}/{}",
                o.summary.tv_distance,
                o.summary.argmin_eps,
                o.summary.live_branches,
                o.stats.length + 1
            );
        }
        ExperimentKind::Trajectory => {
            let o = runner::run_trajectory(&config)?;
            println!("trajectory written to {out}: history={} points={}", o.history, o.series.len());
        }
        ExperimentKind::Oracle => {
            let r = runner::run_oracle(&config)?;
            println!(
                "oracle report written to {out}: grouping={:.3e} completeness={:.3e} overlap={:.3e}",
                r.max_grouping_discrepancy, r.max_completeness_residual, r.max_overlap_residual
            );
        }
        ExperimentKind::Sweep => {
            let rows = runner::run_sweep(&config)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!("sweep written to {out}: {} points, {failed} failed", rows.len());
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn configure_threads(n: usize) -> Result<(), RunError> {
    if n == 0 {
        return Err(RunError::Config("--threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(n: usize) -> Result<(), RunError> {
    if n == 0 {
        return Err(RunError::Config("--threads must be >= 1".into()));
    }
    log::warn!("built without the `parallel` feature; --threads is ignored");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Profile(a) => (ExperimentKind::Profile, a),
        Command::Trajectory(a) => (ExperimentKind::Trajectory, a),
        Command::Oracle(a) => (ExperimentKind::Oracle, a),
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
