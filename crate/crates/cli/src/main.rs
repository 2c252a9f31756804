use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

/// Numerical laboratory for solitons of the 1D nonlinear Klein-Gordon equation.
#[derive(Parser, Debug)]
#[command(name = "nlkg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    #[arg(long, default_value_t = 3.0)]
    pub p: f64,
    #[arg(long, default_value_t = 1)]
    pub d: u32,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long, default_value_t = 1024)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 80.0)]
    pub length: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground state profile: CSV of (x, φ) plus residual and norms.
    Groundstate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        omega: f64,
        #[command(flatten)]
        grid: GridArgs,
        /// Output directory (default `$NLKG_OUT_DIR`, then `./nlkg-out`).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Boosted soliton sampled on the grid, written as a field dump.
    Soliton {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        omega: f64,
        #[arg(long, default_value_t = 0.0)]
        v: f64,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        /// Time at which the traveling soliton is sampled.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Integrates a field with the split-step scheme.
    Evolve(commands::EvolveArgs),
    /// Spectrum of the second variation at a boosted soliton.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        omega: f64,
        #[arg(long, default_value_t = 0.0)]
        v: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fits modulated soliton parameters to a field dump.
    Modulate {
        #[arg(long)]
        from: PathBuf,
        /// Config file whose soliton blocks seed the fit.
        #[arg(long)]
        seed: PathBuf,
        /// CSV destination (default `<out-dir>/modulation.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Backward multi-soliton construction, or a forward stability run when
    /// the config sets a perturbation.
    Multisoliton {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Runs several multisoliton configs concurrently, each in its own directory.
    Sweep {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Concurrent runs (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Groundstate { model, omega, grid, out_dir } => commands::groundstate(&model, omega, &grid, out_dir),
        Command::Soliton { model, omega, v, theta, x0, time, grid, out_dir } => {
            commands::soliton(&model, [omega, v, theta, x0], time, &grid, out_dir)
        }
        Command::Evolve(args) => commands::evolve(&args),
        Command::Spectrum { model, omega, v, grid, out_dir } => commands::spectrum(&model, omega, v, &grid, out_dir),
        Command::Modulate { from, seed, out, out_dir } => commands::modulate(&from, &seed, out, out_dir),
        Command::Multisoliton { config, out_dir } => commands::multisoliton(&config, out_dir).map(|_| ()),
        Command::Sweep { configs, out_dir, jobs } => commands::sweep(&configs, out_dir, jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
