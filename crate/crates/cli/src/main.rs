use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use acgp::hyperopt::TuneConfig;
use acgp::{EstimatorMode, KernelFamily, KernelSpec, StopConfig};
use acgp_cli::dataset::{gen_synthetic, load_csv, Dataset, SyntheticKind, TargetColumn};
use acgp_cli::experiments::{
    bench_overhead, check_memory, fit, run_bound_sweep, run_lml_curve, run_tune, ModelSetting,
    SweepConfig,
};
use acgp_cli::records::{write_records, ExperimentRecord};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "acgp",
    version,
    about = "Adaptive Cholesky Gaussian process regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bounds of every block along full decompositions, with exact values.
    BoundSweep(SweepArgs),
    /// Log-marginal likelihood of every prefix of the dataset.
    LmlCurve(CurveArgs),
    /// One decomposition with early stopping and optional test RMSE.
    Fit(FitArgs),
    /// Hyperparameter tuning on the estimated negative LML.
    Tune(TuneArgs),
    /// Write a synthetic dataset as CSV.
    GenData(GenArgs),
    /// Time bound evaluation against the factorization work per block.
    BenchOverhead(BenchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long, conflicts_with = "synthetic")]
    csv: Option<PathBuf>,
    /// Target column of the CSV, by name or 0-based index.
    #[arg(long, default_value = "y")]
    target_col: String,
    /// Training fraction of the CSV rows.
    #[arg(long, default_value_t = 2.0 / 3.0)]
    split: f64,
    /// Synthetic dataset kind: fig1, fig-visualization or iid.
    #[arg(long)]
    synthetic: Option<String>,
    /// Size of the synthetic dataset.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Seed for splitting, shuffling and synthetic data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Upper limit for the factor buffer in MiB.
    #[arg(long, default_value_t = 4096)]
    memory_cap_mb: u64,
}

impl DataArgs {
    fn load(&self) -> Result<(Dataset, Option<Dataset>)> {
        match (&self.csv, &self.synthetic) {
            (Some(path), _) => {
                let target: TargetColumn = self.target_col.parse().expect("infallible");
                let (train, test) = load_csv(path, &target, self.split, self.seed)
                    .with_context(|| format!("loading {}", path.display()))?;
                Ok((train, Some(test)))
            }
            (None, Some(kind)) => {
                let kind: SyntheticKind = kind.parse()?;
                Ok((gen_synthetic(kind, self.n, self.seed)?, None))
            }
            (None, None) => bail!("either --csv or --synthetic is required"),
        }
    }

    fn check(&self, max_n: usize) -> Result<()> {
        check_memory(max_n, self.memory_cap_mb as u128 * 1024 * 1024).map_err(anyhow::Error::msg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Midpoint,
    Extrapolation,
}

impl From<Estimator> for EstimatorMode {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::Midpoint => EstimatorMode::Midpoint,
            Estimator::Extrapolation => EstimatorMode::Extrapolation,
        }
    }
}

fn parse_kernel(s: &str) -> Result<KernelFamily, String> {
    s.parse::<KernelFamily>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct ModelArgs {
    /// Kernel: se, ou, matern32 or matern52.
    #[arg(long, value_parser = parse_kernel, default_value = "se")]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    log_lengthscale: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    log_amplitude: f64,
    /// Observation noise variance.
    #[arg(long, default_value_t = 0.1)]
    sigma2: f64,
}

impl ModelArgs {
    fn setting(&self) -> Result<ModelSetting> {
        Ok(ModelSetting {
            kernel: KernelSpec::from_log(self.kernel, self.log_lengthscale, self.log_amplitude)?,
            sigma2: self.sigma2,
        })
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Kernels to sweep (repeatable).
    #[arg(long = "kernel", value_parser = parse_kernel, default_values = ["se", "ou"])]
    kernels: Vec<KernelFamily>,
    /// Log lengthscales to sweep (repeatable).
    #[arg(long = "log-lengthscale", allow_hyphen_values = true, default_values = ["-1", "0", "1", "2", "3"])]
    log_lengthscales: Vec<f64>,
    #[arg(long, default_value_t = 1e-3)]
    sigma2: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 256)]
    block_size: usize,
    /// Report only blocks ending at or before this index.
    #[arg(long)]
    max_n: Option<usize>,
    /// Number of shuffles; seeds are `seed..seed+shuffles`.
    #[arg(long, default_value_t = 1)]
    shuffles: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 256)]
    block_size: usize,
    /// Target relative error; 0 disables stopping.
    #[arg(long, default_value_t = 0.1)]
    rtol: f64,
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(long, value_enum, default_value_t = Estimator::Midpoint)]
    estimator: Estimator,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Kernel and initial hyperparameters.
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 256)]
    block_size: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    budget_secs: Option<f64>,
    /// Optimize the exact LML instead of the early-stopped estimate.
    #[arg(long)]
    exact: bool,
    /// Points used for the exact LML of each accepted step; 0 disables.
    #[arg(long, default_value_t = 0)]
    exact_cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// fig1, fig-visualization or iid.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 8192)]
    n: usize,
    /// Block sizes (repeatable).
    #[arg(long = "block-size", default_values = ["128", "256", "512", "1024"])]
    block_sizes: Vec<usize>,
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn emit(records: &[ExperimentRecord], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            write_records(file, records)?;
        }
        None => write_records(std::io::stdout().lock(), records)?,
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::BoundSweep(a) => {
            let (data, _) = a.data.load()?;
            a.data.check(data.len())?;
            let cfg = SweepConfig {
                kernels: a.kernels,
                log_lengthscales: a.log_lengthscales,
                sigma2: a.sigma2,
                amplitude: a.amplitude,
                block_size: a.block_size,
                max_n: a.max_n,
                seeds: (a.data.seed..a.data.seed + a.shuffles).collect(),
                ..SweepConfig::default()
            };
            emit(&run_bound_sweep(&data, &cfg)?, a.out.as_ref())
        }
        Command::LmlCurve(a) => {
            let (data, _) = a.data.load()?;
            a.data.check(data.len())?;
            emit(
                &run_lml_curve(&data, &[a.model.setting()?])?,
                a.out.as_ref(),
            )
        }
        Command::Fit(a) => {
            let (train, test) = a.data.load()?;
            let mut cfg = StopConfig::new(a.rtol, a.block_size).with_estimator(a.estimator.into());
            cfg.max_n = a.max_n;
            a.data.check(cfg.effective_max_n(train.len())?)?;
            let summary = fit(&train, test.as_ref(), &a.model.setting()?, &cfg)?;
            let r = &summary.result;
            eprintln!(
                "processed {} of {} points, stopped: {}, estimate {}, bounds {:?}, rmse {:?}",
                r.processed(),
                train.len(),
                r.stopped,
                r.estimate,
                r.bounds_at_stop,
                summary.rmse
            );
            emit(std::slice::from_ref(&summary.record), a.out.as_ref())
        }
        Command::Tune(a) => {
            let (train, test) = a.data.load()?;
            a.data.check(train.len())?;
            let cfg = TuneConfig {
                family: a.model.kernel,
                max_restarts: a.restarts,
                max_steps_per_restart: a.steps,
                exact: a.exact,
                block_size: a.block_size,
                budget: a.budget_secs.map(Duration::from_secs_f64),
                ..TuneConfig::default()
            };
            let init = [
                a.model.log_lengthscale,
                a.model.log_amplitude,
                a.model.sigma2.ln(),
            ];
            let (res, rows) = run_tune(&train, test.as_ref(), init, &cfg, a.exact_cap)?;
            eprintln!(
                "final log-space parameters {:?}, objective {}, budget exhausted: {}",
                res.params, res.objective, res.budget_exhausted
            );
            emit(&rows, a.out.as_ref())
        }
        Command::GenData(a) => {
            let kind: SyntheticKind = a.kind.parse()?;
            gen_synthetic(kind, a.n, a.seed)?.write_csv(&a.out)?;
            Ok(())
        }
        Command::BenchOverhead(a) => {
            let data = gen_synthetic(SyntheticKind::Visualization, a.n, a.seed)?;
            let rows = bench_overhead(&data, &a.block_sizes, a.max_n, a.reps)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "block_size,blocks,median_bounds_s,median_block_s,median_ratio,max_ratio,median_eval_s")?;
            for r in rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.block_size,
                    r.blocks,
                    r.median_bounds_s,
                    r.median_block_s,
                    r.median_ratio,
                    r.max_ratio,
                    r.median_eval_s
                )?;
            }
            Ok(())
        }
    }
}
