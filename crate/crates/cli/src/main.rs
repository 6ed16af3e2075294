use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// `println!` that ignores a closed stdout.
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

mod commands;
mod exit;

use exit::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "flowopt",
    version,
    about = "Delay-minimizing flow distribution"
)]
pub struct Cli {
    /// Topology file; the built-in 8-node network when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub topology: Option<PathBuf>,

    #[arg(long, global = true, env = "FLOWOPT_SEED", default_value_t = 1)]
    pub seed: u64,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,

    /// Record wall-clock times in CSV output (makes output non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct LoadArg {
    /// Total load in kbps.
    #[arg(long, value_name = "KBPS")]
    pub load: Option<f64>,
    /// Total load as a fraction of total capacity.
    #[arg(long, value_name = "F")]
    pub load_fraction: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one load with one method.
    Optimize {
        #[command(flatten)]
        load: LoadArg,
        #[arg(long, default_value = "pso-chi")]
        method: flowopt::Method,
    },
    /// Run repeated trials of several methods at one load.
    Compare {
        #[command(flatten)]
        load: LoadArg,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Repeat to select methods; all search methods by default.
        #[arg(long)]
        method: Vec<flowopt::Method>,
    },
    /// Build the training and test datasets.
    GenDataset {
        /// Also write rounded copies of both tables.
        #[arg(long = "paper-rounding")]
        rounded: bool,
    },
    /// Train the predictor on a dataset.
    Train {
        /// Training CSV; `<out>/train.csv` by default.
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Where to write the model; `<out>/model.txt` by default.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        epochs: usize,
        #[arg(long, default_value_t = 0.9)]
        lr: f64,
        #[arg(long, default_value_t = 0.2)]
        momentum: f64,
        #[arg(long, default_value_t = 7)]
        hidden: usize,
    },
    /// Predict flows for one load.
    Predict {
        #[command(flatten)]
        load: LoadArg,
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Rescale predicted flows to sum to the load.
        #[arg(long)]
        renormalize: bool,
    },
    /// Compare predictions against a dataset of optimal flows.
    Eval {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Reference CSV; `<out>/test.csv` by default.
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
    },
}

impl Cli {
    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn or_out(&self, path: &Option<PathBuf>, name: &str) -> PathBuf {
        path.clone().unwrap_or_else(|| self.out_path(name))
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::input(anyhow::anyhow!("{}: {e}", dir.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
