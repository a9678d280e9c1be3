//! Experiment runners producing [`ExperimentRecord`] rows.

use std::time::Instant;

use acgp::hyperopt::{model_for, tune, LogParams, TuneConfig, TuneResult};
use acgp::{
    acgp_run, evaluate_bounds, lml_curve, predict, AcgpResult, BoundsOptions, BoundsReport,
    KernelFamily, KernelSpec, MeanModel, NoiseModel, Result, StopConfig,
};

use crate::dataset::Dataset;
use crate::records::ExperimentRecord;

/// Bytes of the preallocated factor buffer for `max_n` points.
pub fn buffer_bytes(max_n: usize) -> u128 {
    8 * (max_n as u128) * (max_n as u128)
}

/// Refuses runs whose `max_n × max_n` buffer exceeds `cap_bytes`.
pub fn check_memory(max_n: usize, cap_bytes: u128) -> std::result::Result<(), String> {
    let need = buffer_bytes(max_n);
    if need > cap_bytes {
        Err(format!(
            "a {max_n}x{max_n} factor buffer needs {need} bytes, above the memory cap of {cap_bytes} bytes"
        ))
    } else {
        Ok(())
    }
}

fn base_record(
    experiment: &str,
    kernel: &KernelSpec,
    noise_var: f64,
    seed: u64,
) -> ExperimentRecord {
    ExperimentRecord {
        experiment: experiment.to_string(),
        kernel: kernel.family.name().to_string(),
        log_lengthscale: kernel.log_lengthscale(),
        log_amplitude: kernel.log_amplitude(),
        log_noise: noise_var.ln(),
        seed,
        ..Default::default()
    }
}

fn with_report(mut rec: ExperimentRecord, rep: &BoundsReport) -> ExperimentRecord {
    let (lower, upper) = rep.lml_bounds();
    rec.s = Some(rep.s);
    rec.t = Some(rep.t);
    rec.ld = Some(rep.ld);
    rec.ud = Some(rep.ud);
    rec.lq = Some(rep.lq);
    rec.uq = Some(rep.uq);
    rec.lower = Some(lower);
    rec.upper = Some(upper);
    rec
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub kernels: Vec<KernelFamily>,
    pub log_lengthscales: Vec<f64>,
    pub sigma2: f64,
    pub amplitude: f64,
    pub block_size: usize,
    /// Only blocks ending at or before this index are reported.
    pub max_n: Option<usize>,
    pub seeds: Vec<u64>,
    pub bounds: BoundsOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kernels: vec![
                KernelFamily::SquaredExponential,
                KernelFamily::OrnsteinUhlenbeck,
            ],
            log_lengthscales: vec![-1.0, 0.0, 1.0, 2.0, 3.0],
            sigma2: 1e-3,
            amplitude: 1.0,
            block_size: 256,
            max_n: None,
            seeds: vec![0],
            bounds: BoundsOptions::default(),
        }
    }
}

/// Bound quality along the decomposition.
///
/// For every kernel, lengthscale and shuffle seed, one full decomposition
/// without stopping records the bounds of every block together with the
/// exact log-determinant and quadratic form of the whole dataset. The last
/// row of each configuration is the collapsed report at `s = N`.
pub fn run_bound_sweep(data: &Dataset, cfg: &SweepConfig) -> Result<Vec<ExperimentRecord>> {
    let mut rows = Vec::new();
    for &family in &cfg.kernels {
        for &log_l in &cfg.log_lengthscales {
            let kernel = KernelSpec::from_log(family, log_l, cfg.amplitude.ln())?;
            let noise = NoiseModel::homoskedastic(cfg.sigma2)?;
            for &seed in &cfg.seeds {
                let d = data.shuffled(seed);
                let mut stop = StopConfig::exact(cfg.block_size.min(d.len()).max(2));
                stop.bounds = cfg.bounds;
                let res = acgp_run(&kernel, &MeanModel::Zero, &noise, &d.x, &d.y, &stop)?;
                let finish = |mut rec: ExperimentRecord, elapsed: f64, processed: usize| {
                    rec.elapsed_s = elapsed;
                    rec.processed = processed;
                    rec.exact_logdet = Some(res.logdet);
                    rec.exact_quad = Some(res.quad);
                    rec.exact_lml = Some(res.estimate);
                    rec.rtol = Some(0.0);
                    rec
                };
                for tr in &res.trace {
                    if cfg.max_n.is_some_and(|m| tr.report.t > m) {
                        continue;
                    }
                    let rec = with_report(
                        base_record("bound-sweep", &kernel, cfg.sigma2, seed),
                        &tr.report,
                    );
                    rows.push(finish(rec, tr.elapsed.as_secs_f64(), tr.report.s));
                }
                let collapsed = BoundsReport::collapsed(d.len(), res.logdet, res.quad);
                let rec = with_report(
                    base_record("bound-sweep", &kernel, cfg.sigma2, seed),
                    &collapsed,
                );
                rows.push(finish(rec, res.elapsed.as_secs_f64(), d.len()));
            }
        }
    }
    Ok(rows)
}

/// A kernel plus homoskedastic noise variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSetting {
    pub kernel: KernelSpec,
    pub sigma2: f64,
}

/// `log p(y[:n])` for every `n` and every setting, one row per point.
pub fn run_lml_curve(data: &Dataset, settings: &[ModelSetting]) -> Result<Vec<ExperimentRecord>> {
    let mut rows = Vec::new();
    for setting in settings {
        let noise = NoiseModel::homoskedastic(setting.sigma2)?;
        let start = Instant::now();
        let curve = lml_curve(&setting.kernel, &MeanModel::Zero, &noise, &data.x, &data.y)?;
        let elapsed = start.elapsed().as_secs_f64();
        for (i, v) in curve.into_iter().enumerate() {
            let mut rec = base_record(
                "lml-curve",
                &setting.kernel,
                setting.sigma2,
                data.shuffle_seed,
            );
            rec.processed = i + 1;
            rec.elapsed_s = elapsed;
            rec.exact_lml = Some(v);
            rows.push(rec);
        }
    }
    Ok(rows)
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Mean rolling standard deviation of the per-point increments of an LML
/// curve over the final 20% of points divided by the same quantity over the
/// first 20%. Small values mean the curve has settled into a linear trend.
pub fn linear_trend_ratio(curve: &[f64], window: usize) -> f64 {
    let mut increments = Vec::with_capacity(curve.len());
    let mut prev = 0.0;
    for &v in curve {
        increments.push(v - prev);
        prev = v;
    }
    let n = increments.len();
    let fifth = n / 5;
    assert!(
        window >= 2 && fifth >= window,
        "curve too short for window {window}"
    );
    let rolling = |seg: &[f64]| {
        let stds: Vec<f64> = seg.windows(window).map(std_dev).collect();
        stds.iter().sum::<f64>() / stds.len() as f64
    };
    rolling(&increments[n - fifth..]) / rolling(&increments[..fifth])
}

#[derive(Clone, Debug)]
pub struct FitSummary {
    pub result: AcgpResult,
    pub rmse: Option<f64>,
    pub record: ExperimentRecord,
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (sse / truth.len() as f64).sqrt()
}

/// One decomposition with stopping, plus the test RMSE of the resulting
/// predictor when a test set is given.
pub fn fit(
    train: &Dataset,
    test: Option<&Dataset>,
    setting: &ModelSetting,
    cfg: &StopConfig,
) -> Result<FitSummary> {
    let noise = NoiseModel::homoskedastic(setting.sigma2)?;
    let result = acgp_run(
        &setting.kernel,
        &MeanModel::Zero,
        &noise,
        &train.x,
        &train.y,
        cfg,
    )?;
    let rmse = match test {
        Some(t) if !t.is_empty() => {
            let (mu, _) = predict(
                &result,
                &setting.kernel,
                &MeanModel::Zero,
                &noise,
                &train.x,
                &t.x,
            )?;
            Some(rmse(&mu, &t.y))
        }
        _ => None,
    };
    let mut record = base_record("fit", &setting.kernel, setting.sigma2, train.shuffle_seed);
    if let Some(tr) = result.trace.last() {
        record = with_report(record, &tr.report);
    }
    record.processed = result.processed();
    record.elapsed_s = result.elapsed.as_secs_f64();
    record.estimate = Some(result.estimate);
    record.rmse = rmse;
    record.rtol = Some(cfg.rtol);
    record.stopped = Some(result.stopped);
    if !result.stopped && result.processed() == train.len() {
        record.exact_logdet = Some(result.logdet);
        record.exact_quad = Some(result.quad);
        record.exact_lml = Some(result.estimate);
    }
    Ok(FitSummary {
        result,
        rmse,
        record,
    })
}

/// Exact LML of `data[:cap]` without stopping.
pub fn exact_prefix_lml(
    data: &Dataset,
    family: KernelFamily,
    params: &LogParams,
    cap: usize,
    block: usize,
) -> Result<f64> {
    let (kernel, noise) = model_for(family, params)?;
    let d = data.head(cap);
    let res = acgp_run(
        &kernel,
        &MeanModel::Zero,
        &noise,
        &d.x,
        &d.y,
        &StopConfig::exact(block.min(d.len()).max(2)),
    )?;
    Ok(res.estimate)
}

/// Tuning trajectory as records. The exact LML of each accepted point is
/// evaluated afterwards on the first `exact_cap` points (`0` disables it),
/// outside the timed optimization.
pub fn run_tune(
    train: &Dataset,
    test: Option<&Dataset>,
    init: LogParams,
    cfg: &TuneConfig,
    exact_cap: usize,
) -> Result<(TuneResult, Vec<ExperimentRecord>)> {
    let res = tune(&train.x, &train.y, init, cfg)?;
    let mut rows = Vec::with_capacity(res.trajectory.len());
    for p in &res.trajectory {
        let (kernel, _) = model_for(cfg.family, &p.params)?;
        let mut rec = base_record("tune", &kernel, p.params[2].exp(), train.shuffle_seed);
        rec.restart = Some(p.restart);
        rec.processed = p.processed;
        rec.elapsed_s = p.time.as_secs_f64();
        rec.estimate = Some(-p.objective);
        rec.rtol = Some(p.rtol);
        rec.exact_lml = match (p.exact_lml, exact_cap) {
            (Some(v), _) => Some(v),
            (None, 0) => None,
            (None, cap) => Some(exact_prefix_lml(
                train,
                cfg.family,
                &p.params,
                cap,
                cfg.block_size,
            )?),
        };
        rows.push(rec);
    }
    if let (Some(test), Some(last)) = (test, rows.last_mut()) {
        let (kernel, noise) = model_for(cfg.family, &res.params)?;
        let setting = ModelSetting {
            kernel,
            sigma2: noise.floor(),
        };
        let stop = StopConfig::new(
            cfg.rtol(cfg.max_restarts.saturating_sub(1)),
            cfg.block_size.min(train.len()).max(2),
        );
        last.rmse = fit(train, Some(test), &setting, &stop)?.rmse;
    }
    Ok((res, rows))
}

/// Timing of one block size in [`bench_overhead`].
#[derive(Clone, Debug, PartialEq)]
pub struct OverheadRow {
    pub block_size: usize,
    pub blocks: usize,
    /// Median over blocks of the in-run bound evaluation time.
    pub median_bounds_s: f64,
    /// Median over blocks of triangular solve, downdate and factorization.
    pub median_block_s: f64,
    /// Largest per-block ratio of bound time to block time.
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// Median time of one `evaluate_bounds` call on the recorded snapshots,
    /// each repeated `reps` times.
    pub median_eval_s: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Measures bound evaluation against the factorization work per block.
/// Only full-size blocks are counted.
pub fn bench_overhead(
    data: &Dataset,
    block_sizes: &[usize],
    max_n: Option<usize>,
    reps: usize,
) -> Result<Vec<OverheadRow>> {
    let kernel = KernelSpec::new(KernelFamily::Matern52, 1.0, 1.0)?;
    let noise = NoiseModel::homoskedastic(0.1)?;
    let mut rows = Vec::new();
    for &m in block_sizes {
        let mut cfg = StopConfig::exact(m);
        cfg.max_n = max_n;
        cfg.record_snapshots = true;
        let res = acgp_run(&kernel, &MeanModel::Zero, &noise, &data.x, &data.y, &cfg)?;
        let full: Vec<_> = res
            .trace
            .iter()
            .filter(|t| t.report.t - t.report.s == m)
            .collect();
        let bounds: Vec<f64> = full.iter().map(|t| t.bounds_time.as_secs_f64()).collect();
        let block: Vec<f64> = full
            .iter()
            .map(|t| (t.solve_time + t.factor_time).as_secs_f64())
            .collect();
        let ratios: Vec<f64> = bounds.iter().zip(&block).map(|(b, f)| b / f).collect();
        let mut evals = Vec::with_capacity(full.len());
        for t in &full {
            let snap = t.snapshot.as_ref().expect("snapshots recorded");
            let start = Instant::now();
            for _ in 0..reps.max(1) {
                std::hint::black_box(evaluate_bounds(
                    std::hint::black_box(snap),
                    &cfg.bounds,
                    None,
                )?);
            }
            evals.push(start.elapsed().as_secs_f64() / reps.max(1) as f64);
        }
        rows.push(OverheadRow {
            block_size: m,
            blocks: full.len(),
            median_bounds_s: median(bounds),
            median_block_s: median(block),
            max_ratio: ratios.iter().copied().fold(f64::NAN, f64::max),
            median_ratio: median(ratios),
            median_eval_s: median(evals),
        });
    }
    Ok(rows)
}
