mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::io::Format;

#[derive(Parser)]
#[command(name = "ebkalman", version, about = "Kalman filtering with an empirical-Bayes residual correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Flat `key = value` config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    format: Option<Format>,
}

#[derive(Args, Clone)]
pub struct ModelArgs {
    /// Series file, one value per line, `NA` for missing.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Fixed model `family:intercept:phi[,phi2]:variance[:noise]`, e.g. `ar1:0:0.75:0.1`.
    #[arg(long)]
    spec: Option<String>,
    /// Fit this family (ar1, ar2, arima110) by maximum likelihood instead.
    #[arg(long)]
    fit: Option<String>,
    /// Observation noise variance used when fitting.
    #[arg(long)]
    obs_noise: Option<f64>,
    /// `sequential` (forward filter) or `retrospective` (leave-one-out).
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the sparse-shock AR(1) model.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        phi: Option<f64>,
        /// Shock standard deviation.
        #[arg(long)]
        v: Option<f64>,
        /// Shock probability.
        #[arg(long)]
        bern_p: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate Poisson counts with an AR log-intensity.
    SimulateCounts {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the latent intensities, one per line.
        #[arg(long)]
        lambda_out: Option<PathBuf>,
    },
    /// Run the Kalman filter (or leave-one-out predictors) over a series.
    Filter {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Apply the empirical-Bayes correction to the filter output.
    Improve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Sequential warm-up length.
        #[arg(long)]
        warmup: Option<usize>,
        /// `log` (1/ln m) or a fixed positive bandwidth.
        #[arg(long)]
        bandwidth: Option<String>,
    },
    /// Monte-Carlo risk benchmark over a (phi, v) grid.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// `sequential`, `retrospective` or `both`.
        #[arg(long)]
        mode: Option<String>,
        /// Comma-separated AR coefficients.
        #[arg(long)]
        phi_grid: Option<String>,
        /// Comma-separated shock standard deviations.
        #[arg(long)]
        v_grid: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        bern_p: Option<f64>,
        #[arg(long)]
        bandwidth: Option<String>,
    },
    /// Binomial-thinning cross-validation on a count series.
    Cv {
        #[command(flatten)]
        common: Common,
        /// Count file, one nonnegative integer per line.
        #[arg(long, short)]
        input: Option<PathBuf>,
        /// Comma-separated families to fit, e.g. `ar1,ar2,arima110`.
        #[arg(long)]
        models: Option<String>,
        /// Fixed model(s) instead of fitting; `;`-separated in config files.
        #[arg(long)]
        spec: Vec<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        bandwidth: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ebkalman: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
