use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sovsim_core::io::Format;

mod commands;

#[derive(Parser)]
#[command(
    name = "sovsim",
    version,
    about = "Simulate decision-energy concentration and sovereignty boundaries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and export per-step metrics.
    Run {
        config: PathBuf,
        /// Overrides `system.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `system.steps`.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Also write an SVG chart of control mass over time.
        #[arg(long)]
        plot: bool,
        /// Warn about unknown config keys instead of rejecting them.
        #[arg(long)]
        lenient: bool,
    },
    /// Check the model's propositions numerically and write report.json.
    Verify {
        /// Comma-separated list of P1..P5, T1, or `all`.
        #[arg(long, default_value = "all")]
        props: String,
        /// Trials per property; defaults differ per property.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw trials from this scenario instead of random systems.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        lenient: bool,
    },
    /// Sweep one parameter over a grid and tabulate transfer statistics.
    Sweep {
        config: PathBuf,
        /// Dotted config path, e.g. economy.friction_decay.
        #[arg(long)]
        param: String,
        /// lo:hi:count or lo:hi:count:log
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        lenient: bool,
    },
    /// Bisect for the parameter value where the transfer rate crosses the target.
    Threshold {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0.5)]
        target: f64,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        lenient: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            steps,
            out,
            format,
            plot,
            lenient,
        } => commands::run(&commands::RunArgs {
            config,
            seed,
            steps,
            out,
            format: format.into(),
            plot,
            lenient,
        }),
        Command::Verify {
            props,
            trials,
            seed,
            config,
            out,
            lenient,
        } => commands::verify(&commands::VerifyArgs {
            props,
            trials,
            seed,
            config,
            out,
            lenient,
        }),
        Command::Sweep {
            config,
            param,
            grid,
            runs,
            steps,
            seed,
            out,
            lenient,
        } => commands::sweep(&commands::SweepArgs {
            config,
            param,
            grid,
            runs,
            steps,
            seed,
            out,
            lenient,
        }),
        Command::Threshold {
            config,
            param,
            lo,
            hi,
            tol,
            runs,
            target,
            steps,
            seed,
            out,
            lenient,
        } => commands::threshold(&commands::ThresholdArgs {
            config,
            param,
            lo,
            hi,
            tol,
            runs,
            target,
            steps,
            seed,
            out,
            lenient,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sovsim: {e}");
            ExitCode::from(e.code())
        }
    }
}
