use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fracnn::{build_lenet, train, FracGradConfig, TimingMode, TrainConfig};
use fracnn_cli::csvout::{loss_curve_csv, loss_curve_path, sweep_csv, write_string};
use fracnn_cli::idx::MnistDataset;
use fracnn_cli::quadratic::{quadratic_csv, run_quadratic_benchmark};
use fracnn_cli::sweep::{run_alpha_sweep, ExperimentConfig};
use fracnn_cli::{fetch::fetch_mnist, resolve_data_dir};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TimingModeArg {
    Synchronous,
    Lagged,
}

impl From<TimingModeArg> for TimingMode {
    fn from(value: TimingModeArg) -> Self {
        match value {
            TimingModeArg::Synchronous => TimingMode::Synchronous,
            TimingModeArg::Lagged => TimingMode::Lagged,
        }
    }
}

/// Shared training knobs, defaulting to the experiment-table values.
#[derive(Debug, clap::Args)]
struct TrainArgs {
    /// Learning rate
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Batch size
    #[arg(long, default_value_t = 10)]
    batch: usize,
    /// Number of training iterations
    #[arg(long, default_value_t = 6000)]
    iters: usize,
    /// Number of epochs the iteration schedule may span
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    /// Singularity offset added to parameter deltas
    #[arg(long, default_value_t = 1e-8)]
    delta: f64,
    /// Which iteration's gradient the scaled update uses
    #[arg(long, value_enum, default_value_t = TimingModeArg::Synchronous)]
    timing_mode: TimingModeArg,
    /// Half-width of the uniform parameter initialization
    #[arg(long, default_value_t = 0.1)]
    init_range: f64,
    /// Directory with the four MNIST files (falls back to FRACNN_DATA_DIR, then ./data)
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl TrainArgs {
    fn to_config(&self, alpha: f64, seed: u64) -> Result<TrainConfig, fracnn::Error> {
        Ok(TrainConfig {
            frac: FracGradConfig::new(alpha, self.lr)?
                .with_delta_offset(self.delta)?
                .with_timing_mode(self.timing_mode.into()),
            batch_size: self.batch,
            iterations: self.iters,
            epochs: self.epochs,
            seed,
            init_range: self.init_range,
        })
    }
}

#[derive(Parser)]
#[command(
    name = "fracnn",
    version,
    about = "Train small CNNs whose parameter updates follow a fractional-order gradient rule"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the one-dimensional quadratic benchmark and write a trajectory CSV
    Quadratic {
        /// Fractional orders to sweep
        #[arg(long, value_delimiter = ',', default_value = "0.6,0.8,1.0,1.2,1.4")]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "quadratic.csv")]
        out: PathBuf,
    },
    /// Train one LeNet on MNIST and print its metrics
    Train {
        /// Fractional order of the update rule
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train a grid of (alpha, seed) runs and write summary + loss CSVs
    Sweep {
        /// Fractional orders (default: 0.1 through 1.9)
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// Seeds, one full training per (alpha, seed) pair
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        /// Maximum concurrent trainings
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Download and cache the four standard MNIST files
    Fetch {
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn run() -> Result<(), Box<dyn Error>> {
    match Cli::parse().command {
        Command::Quadratic {
            alphas,
            lr,
            iters,
            seed,
            out,
        } => {
            let points = run_quadratic_benchmark(&alphas, lr, iters, seed)?;
            write_string(&out, &quadratic_csv(&points))?;
            println!("wrote {} trajectory rows to {}", points.len(), out.display());
        }
        Command::Train { alpha, seed, train: targs } => {
            let data_dir = resolve_data_dir(targs.data_dir.clone());
            let data = MnistDataset::load(&data_dir)?;
            let cfg = targs.to_config(alpha, seed)?;
            let mut network = build_lenet(seed, cfg.init_range)?;
            let metrics = train(&mut network, &data.train, &data.test, &cfg)?;
            println!(
                "alpha {alpha} seed {seed}: train_acc {:.4} test_acc {:.4} final_loss {:.6} wall {:.1}s",
                metrics.train_accuracy,
                metrics.test_accuracy,
                metrics.loss_series.last().unwrap_or(&f64::NAN),
                metrics.wall_seconds,
            );
        }
        Command::Sweep {
            alphas,
            seeds,
            out,
            parallel,
            train: targs,
        } => {
            let alphas = alphas
                .unwrap_or_else(|| (1..=19).map(|i| f64::from(i) / 10.0).collect());
            let data_dir = resolve_data_dir(targs.data_dir.clone());
            let cfg = ExperimentConfig {
                data_dir: data_dir.clone(),
                alphas,
                seeds,
                train: targs.to_config(1.0, 0)?,
                output_path: out.clone(),
                parallel_runs: parallel,
            };
            cfg.validate()?;
            let data = MnistDataset::load(&data_dir)?;
            let results = run_alpha_sweep(&cfg, &data);
            write_string(&out, &sweep_csv(&results))?;
            let curves = loss_curve_path(&out);
            write_string(&curves, &loss_curve_csv(&results))?;
            let failures = results.records.iter().filter(|r| r.error.is_some()).count();
            println!(
                "wrote {} runs to {} (loss curves at {}), {failures} failed",
                results.records.len(),
                out.display(),
                curves.display()
            );
            for r in results.records.iter().filter(|r| r.error.is_some()) {
                eprintln!("run alpha {} seed {} failed: {}", r.alpha, r.seed, r.error.as_ref().unwrap());
            }
        }
        Command::Fetch { data_dir } => {
            let dir = resolve_data_dir(data_dir);
            let fetched = fetch_mnist(&dir)?;
            if fetched.is_empty() {
                println!("all four files already present in {}", dir.display());
            } else {
                println!("fetched {} file(s) into {}", fetched.len(), dir.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
