//! `pinn-ns`: train, evaluate and inspect parametric Navier-Stokes networks.
//!
//! Failures print a single `reason-code: message` line on stderr. Exit
//! status 2 means the invocation itself was unusable (bad flags, missing or
//! invalid configuration); 1 means the command ran and failed.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;

#[derive(Parser)]
#[command(name = "pinn-ns", version, about = "Parametric Navier-Stokes PINN toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network; writes checkpoint.pnns and metrics.csv.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from a checkpoint, using its configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, value_parser = ["pinn", "nn"])]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Epochs to run (additional epochs when resuming; default 0 there).
        #[arg(long)]
        epochs: Option<usize>,
        /// Output directory, overriding `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-ν error report of a checkpoint (or `analytic:taylor-green`).
    Eval {
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        data: PathBuf,
        /// Residual points sampled per ν.
        #[arg(long, default_value_t = 1000)]
        residual_n: usize,
        #[arg(long, value_delimiter = ',')]
        train_nus: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        test_nus: Option<Vec<f64>>,
        #[arg(long, default_value = "analytic", value_parser = ["analytic", "grid"])]
        vorticity_reference: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report CSV; a `.meta` file is written next to it. Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gridded vorticity at one (ν, t).
    Vorticity {
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 200)]
        nx: usize,
        #[arg(long, default_value_t = 100)]
        ny: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lift on the cylinder over a time range, as `t,lift` CSV.
    Lift {
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        t_start: f64,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = pinn_ns::physics::DEFAULT_PANELS)]
        panels: usize,
        /// Cylinder diameter when the model's domain has none.
        #[arg(long, default_value_t = 1.0)]
        diameter: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lag between two `t,value` series (positive: prediction trails).
    Timeshift {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic Taylor-Green labels in snapshot CSV format.
    GenTaylorGreen {
        #[arg(long, value_delimiter = ',', required = true)]
        nus: Vec<f64>,
        /// Points per ν.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        t_min: f64,
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        /// Place points on an n×n spatial grid per (ν, t) instead of at random.
        #[arg(long, value_delimiter = ',')]
        grid_times: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sampled points of a plan in snapshot CSV format with empty labels.
    Sample {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "interior", value_parser = ["interior", "boundary", "all"])]
        kind: String,
        /// Points per boundary family (pairs for periodic boundaries).
        #[arg(long, default_value_t = 1000)]
        boundary_n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Built-in self-checks.
    Check {
        #[arg(long, value_parser = ["oracle"])]
        suite: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            resume,
            mode,
            seed,
            epochs,
            out,
        } => commands::train(commands::TrainArgs {
            config,
            resume,
            mode,
            seed,
            epochs,
            out,
        }),
        Command::Eval {
            checkpoint,
            data,
            residual_n,
            train_nus,
            test_nus,
            vorticity_reference,
            seed,
            out,
        } => commands::eval(commands::EvalArgs {
            checkpoint,
            data,
            residual_n,
            train_nus,
            test_nus,
            vorticity_reference,
            seed,
            out,
        }),
        Command::Vorticity {
            checkpoint,
            nu,
            t,
            nx,
            ny,
            out,
        } => commands::vorticity(&checkpoint, nu, t, nx, ny, out),
        Command::Lift {
            checkpoint,
            nu,
            t_start,
            t_end,
            steps,
            panels,
            diameter,
            out,
        } => commands::lift(&checkpoint, nu, (t_start, t_end), steps, panels, diameter, out),
        Command::Timeshift { pred, reference, out } => commands::timeshift(&pred, &reference, out),
        Command::GenTaylorGreen {
            nus,
            n,
            t_min,
            t_max,
            grid_times,
            seed,
            out,
        } => commands::gen_taylor_green(&nus, n, (t_min, t_max), grid_times, seed, &out),
        Command::Sample {
            plan,
            kind,
            boundary_n,
            out,
        } => commands::sample(&plan, &kind, boundary_n, &out),
        Command::Check { suite } => commands::check(&suite),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("usage-error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.code, e.message.replace('\n', " "));
            ExitCode::from(e.exit)
        }
    }
}
