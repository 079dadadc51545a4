//! `nsdx`: every pipeline stage as a subcommand.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "nsdx",
    version,
    about = "Neural-symbolic chest X-ray diagnosis with explanations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StubKind {
    S,
    R,
    E2e,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Linear,
    Mlp1,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Leaves,
    Depth,
}

#[derive(Subcommand)]
enum Command {
    /// Parse COVIDr annotations and write one morphology class per image.
    ParseCovidr {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic case directory from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long, env = "DX_SEED")]
        seed: Option<u64>,
    },
    /// Train one stub network on a case directory.
    TrainStub {
        #[arg(long, value_enum)]
        kind: StubKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lr: f64,
        #[arg(long)]
        epochs: usize,
        #[arg(long, env = "DX_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "linear")]
        arch: ArchArg,
        #[arg(long, default_value_t = nsdx_core::neural::DEFAULT_HIDDEN)]
        hidden: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        /// Trained S-stub, whose outputs feed the R-stub (required for `--kind r`).
        #[arg(long)]
        s: Option<PathBuf>,
        /// Warm-start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Run the S and R stubs over a case directory and write the feature CSV.
    Features {
        #[arg(long)]
        s: PathBuf,
        #[arg(long)]
        r: PathBuf,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a decision tree on a feature CSV.
    FitTree {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        max_depth: usize,
        #[arg(long)]
        max_leaves: usize,
        #[arg(long)]
        out: PathBuf,
        /// Seeds the feature order used to break ties between equal splits.
        #[arg(long, env = "DX_SEED")]
        seed: Option<u64>,
    },
    /// Held-out accuracy against one tree constraint, as CSV.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        param: SweepArg,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        eval_split: f64,
        #[arg(long, env = "DX_SEED")]
        seed: Option<u64>,
    },
    /// Write the explanation bundle for one case.
    Explain {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        s: PathBuf,
        #[arg(long)]
        r: PathBuf,
        /// Case directory holding the case.
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        case: String,
        /// Bundle root; the bundle goes to `<out>/<case>/`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
    /// Compare two confusion matrices.
    Eval {
        #[arg(long)]
        pred_a: PathBuf,
        #[arg(long)]
        pred_b: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Feedback tables from a review log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Serve the review API.
    Serve {
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Run the whole pipeline from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long, env = "DX_SEED")]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
