//! The order sweep: train a fresh LeNet for every (alpha, seed) pair and
//! collect accuracies, final losses, early-loss variance and wall time.
//! Individual run failures are recorded per row and never abort sibling
//! runs.

use std::path::PathBuf;

use fracnn::{build_lenet, train, FracGradConfig, Metrics, TimingMode, TrainConfig};
use rayon::prelude::*;

use crate::idx::MnistDataset;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Per-run settings; `frac.alpha` and `seed` are overwritten by the
    /// grid values.
    pub train: TrainConfig,
    pub output_path: PathBuf,
    pub parallel_runs: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), fracnn::Error> {
        if self.alphas.is_empty() || self.seeds.is_empty() {
            return Err(fracnn::Error::InvalidConfig(
                "alpha and seed lists must be nonempty".into(),
            ));
        }
        for &alpha in &self.alphas {
            if !(alpha > 0.0 && alpha < 2.0) {
                return Err(fracnn::Error::InvalidConfig(format!(
                    "sweep alpha {alpha} outside (0, 2)"
                )));
            }
        }
        if self.parallel_runs == 0 {
            return Err(fracnn::Error::InvalidConfig(
                "parallel_runs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Paper-table settings: learning rate 0.1, batch 10, 6000 iterations,
/// one epoch, initialization range 0.1, synchronous timing.
pub fn paper_train_config() -> TrainConfig {
    TrainConfig::paper_defaults(1.0, 0).expect("static defaults are valid")
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub alpha: f64,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResults {
    pub records: Vec<RunRecord>,
}

/// Population variance of the first `n` entries (or all, if shorter).
pub fn loss_variance_first_n(series: &[f64], n: usize) -> f64 {
    let slice = &series[..series.len().min(n)];
    if slice.is_empty() {
        return f64::NAN;
    }
    let mean = slice.iter().sum::<f64>() / slice.len() as f64;
    slice.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / slice.len() as f64
}

impl SweepResults {
    pub fn successful(&self, alpha: f64) -> impl Iterator<Item = &RunRecord> {
        self.records
            .iter()
            .filter(move |r| r.alpha == alpha && r.metrics.is_some())
    }

    pub fn average_test_accuracy(&self, alpha: f64) -> f64 {
        let accs: Vec<f64> = self
            .successful(alpha)
            .map(|r| r.metrics.as_ref().unwrap().test_accuracy)
            .collect();
        if accs.is_empty() {
            f64::NAN
        } else {
            accs.iter().sum::<f64>() / accs.len() as f64
        }
    }

    pub fn average_train_accuracy(&self, alpha: f64) -> f64 {
        let accs: Vec<f64> = self
            .successful(alpha)
            .map(|r| r.metrics.as_ref().unwrap().train_accuracy)
            .collect();
        if accs.is_empty() {
            f64::NAN
        } else {
            accs.iter().sum::<f64>() / accs.len() as f64
        }
    }

    /// Mean over seeds of the per-run early-loss variance.
    pub fn average_loss_variance(&self, alpha: f64, first_n: usize) -> f64 {
        let vars: Vec<f64> = self
            .successful(alpha)
            .map(|r| loss_variance_first_n(&r.metrics.as_ref().unwrap().loss_series, first_n))
            .collect();
        if vars.is_empty() {
            f64::NAN
        } else {
            vars.iter().sum::<f64>() / vars.len() as f64
        }
    }

    /// Mean loss per iteration across the successful runs of one order.
    pub fn mean_loss_curve(&self, alpha: f64) -> Vec<f64> {
        let runs: Vec<&Metrics> = self
            .successful(alpha)
            .map(|r| r.metrics.as_ref().unwrap())
            .collect();
        if runs.is_empty() {
            return Vec::new();
        }
        let len = runs.iter().map(|m| m.loss_series.len()).min().unwrap_or(0);
        (0..len)
            .map(|i| runs.iter().map(|m| m.loss_series[i]).sum::<f64>() / runs.len() as f64)
            .collect()
    }
}

/// Runs one (alpha, seed) training from scratch.
pub fn run_single(
    data: &MnistDataset,
    base: &TrainConfig,
    alpha: f64,
    seed: u64,
) -> Result<Metrics, fracnn::Error> {
    let mut cfg = base.clone();
    cfg.frac = FracGradConfig {
        alpha,
        ..cfg.frac
    };
    cfg.frac.validate()?;
    cfg.seed = seed;
    let mut network = build_lenet(seed, cfg.init_range)?;
    train(&mut network, &data.train, &data.test, &cfg)
}

/// Runs the full grid, alpha ascending then seed ascending, spreading the
/// runs over at most `parallel_runs` worker threads.
pub fn run_alpha_sweep(cfg: &ExperimentConfig, data: &MnistDataset) -> SweepResults {
    // with the paper-table settings one run is exactly one epoch
    if cfg.train.batch_size == 10 && cfg.train.iterations == 6000 && cfg.train.epochs == 1 {
        assert_eq!(
            cfg.train.batch_size * cfg.train.iterations,
            data.train.len(),
            "paper settings must cover exactly one epoch"
        );
    }
    let mut grid: Vec<(f64, u64)> = Vec::new();
    let mut alphas = cfg.alphas.clone();
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    for &alpha in &alphas {
        for &seed in &seeds {
            grid.push((alpha, seed));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel_runs)
        .build()
        .expect("thread pool");
    let records: Vec<RunRecord> = pool.install(|| {
        grid.par_iter()
            .map(|&(alpha, seed)| match run_single(data, &cfg.train, alpha, seed) {
                Ok(metrics) => RunRecord {
                    alpha,
                    seed,
                    metrics: Some(metrics),
                    error: None,
                },
                Err(e) => RunRecord {
                    alpha,
                    seed,
                    metrics: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });
    SweepResults { records }
}

/// Per-iteration timing of a short training prefix, used for the
/// integer-versus-fractional overhead comparison.
pub fn time_iterations(
    data: &MnistDataset,
    alpha: f64,
    seed: u64,
    iterations: usize,
    timing_mode: TimingMode,
) -> Result<f64, fracnn::Error> {
    let mut cfg = paper_train_config();
    cfg.frac = FracGradConfig::new(alpha, cfg.frac.mu)?.with_timing_mode(timing_mode);
    cfg.seed = seed;
    cfg.iterations = iterations;
    let mut network = build_lenet(seed, cfg.init_range)?;
    let metrics = train(&mut network, &data.train, &data.test, &cfg)?;
    Ok(metrics.wall_seconds / iterations.max(1) as f64)
}
