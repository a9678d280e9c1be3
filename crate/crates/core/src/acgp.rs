//! Blocked Cholesky of the kernel matrix with bound evaluation between the
//! downdate and the factorization of each block, and early stopping.
//!
//! Per block `s..t` the driver
//! 1. evaluates `k(X[s:t], X[:s])` and solves `T = K[s:t,:s] L⁻ᵀ`,
//! 2. evaluates the diagonal block plus noise and downdates it by `T Tᵀ`,
//!    which leaves the posterior covariance (plus noise) of the block given
//!    the first `s` points; the residuals `y - m*` follow from `T α`,
//! 3. evaluates the bounds and stops if the requested accuracy is reached,
//! 4. otherwise factorizes the block and finishes the forward solve.
//!
//! Kernel entries are only ever requested for rows `< t`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use crate::bounds::{
    evaluate_bounds, extrapolation_estimator, midpoint_estimator, stop_condition, AlphaMode,
    BlockSnapshot, BoundsOptions, BoundsReport, EstimatorMode, QuadStats,
};
use crate::error::{AcgpError, Result};
use crate::kernel::{Kernel, MeanModel, NoiseModel};
use crate::linalg::{
    chol_in_place, dot, downdate_pending_block, forward_solve_in_place, solve_right_transposed,
    FactorBuffer, MatMut, MatRef, Matrix,
};

#[derive(Clone, Debug, PartialEq)]
pub struct StopConfig {
    /// Target relative error of the LML estimate; `0` never stops early.
    pub rtol: f64,
    /// Rows per block.
    pub block_size: usize,
    /// Cap on processed points; `None` means the whole dataset.
    pub max_n: Option<usize>,
    pub estimator: EstimatorMode,
    pub bounds: BoundsOptions,
    /// Keep a copy of every block snapshot in the trace.
    pub record_snapshots: bool,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            rtol: 0.1,
            block_size: 256,
            max_n: None,
            estimator: EstimatorMode::Midpoint,
            bounds: BoundsOptions::default(),
            record_snapshots: false,
        }
    }
}

impl StopConfig {
    pub fn new(rtol: f64, block_size: usize) -> Self {
        Self {
            rtol,
            block_size,
            ..Default::default()
        }
    }

    /// Stopping disabled: the run is an exact blocked Cholesky.
    pub fn exact(block_size: usize) -> Self {
        Self::new(0.0, block_size)
    }

    pub fn with_max_n(mut self, max_n: usize) -> Self {
        self.max_n = Some(max_n);
        self
    }

    pub fn with_estimator(mut self, estimator: EstimatorMode) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_alpha_mode(mut self, mode: AlphaMode) -> Self {
        self.bounds.alpha_mode = mode;
        self
    }

    /// Resolved cap on processed points for a dataset of `n` points.
    pub fn effective_max_n(&self, n: usize) -> Result<usize> {
        if !(self.rtol >= 0.0) || !self.rtol.is_finite() {
            return Err(AcgpError::InvalidConfig(format!(
                "rtol must be finite and >= 0, got {}",
                self.rtol
            )));
        }
        if self.block_size < 2 {
            return Err(AcgpError::InvalidConfig(format!(
                "block size must be >= 2, got {}",
                self.block_size
            )));
        }
        let max_n = self.max_n.unwrap_or(n);
        if max_n == 0 || max_n > n {
            return Err(AcgpError::InvalidConfig(format!(
                "max_n must be in 1..={n}, got {max_n}"
            )));
        }
        Ok(max_n)
    }
}

/// One evaluated block.
#[derive(Clone, Debug)]
pub struct BlockTrace {
    pub report: BoundsReport,
    /// LML-scale bounds.
    pub lower: f64,
    pub upper: f64,
    /// Time since the start of the run when the bounds were available.
    pub elapsed: Duration,
    /// Kernel evaluation for the block.
    pub kernel_time: Duration,
    /// Triangular solve, downdate and residual update.
    pub solve_time: Duration,
    /// Bound evaluation including snapshot extraction.
    pub bounds_time: Duration,
    /// Block factorization and forward substitution; zero for the block
    /// that triggered the stop.
    pub factor_time: Duration,
    pub snapshot: Option<BlockSnapshot>,
}

#[derive(Clone, Debug)]
pub struct AcgpResult {
    /// Dataset size.
    pub n: usize,
    /// LML estimate (see [`acgp_run`] for which one).
    pub estimate: f64,
    pub stopped: bool,
    /// Bounds of the block that triggered the stop.
    pub bounds_at_stop: Option<(f64, f64)>,
    /// `log|K[:M,:M]|`.
    pub logdet: f64,
    /// `y[:M]ᵀ K[:M,:M]⁻¹ y[:M]`.
    pub quad: f64,
    pub trace: Vec<BlockTrace>,
    pub elapsed: Duration,
    buffer: FactorBuffer,
}

impl AcgpResult {
    /// Number of fully processed points `M`.
    pub fn processed(&self) -> usize {
        self.buffer.processed()
    }

    /// `L[:M,:M]`.
    pub fn factor(&self) -> MatRef<'_> {
        self.buffer.factor()
    }

    /// `L[:M,:M]⁻¹ (y[:M] - mean)`.
    pub fn alpha(&self) -> &[f64] {
        self.buffer.alpha()
    }

    /// `log p(y[:M])`.
    pub fn processed_lml(&self) -> f64 {
        -0.5 * self.logdet - 0.5 * self.quad - 0.5 * self.processed() as f64 * (2.0 * PI).ln()
    }

    pub fn buffer(&self) -> &FactorBuffer {
        &self.buffer
    }
}

fn noise_values(noise: &NoiseModel, x: MatRef<'_>) -> Result<Vec<f64>> {
    (0..x.nrows())
        .map(|i| noise.checked_variance_at(x.row(i)))
        .collect()
}

fn reindex(err: AcgpError, offset: usize) -> AcgpError {
    match err {
        AcgpError::NotPositiveDefinite { index, pivot } => AcgpError::NotPositiveDefinite {
            index: index + offset,
            pivot,
        },
        other => other,
    }
}

/// Extracts the bound inputs from the pending block rows `s..s+m`.
fn snapshot_from_slab(
    slab: &[f64],
    stride: usize,
    alpha: &[f64],
    noise: Vec<f64>,
    (n, s, m): (usize, usize, usize),
    (logdet, quad, noise_floor): (f64, f64, f64),
) -> BlockSnapshot {
    BlockSnapshot {
        n,
        s,
        t: s + m,
        logdet,
        quad,
        variances: (0..m).map(|j| slab[j * stride + s + j]).collect(),
        covariances: (0..m.saturating_sub(1))
            .map(|j| slab[(j + 1) * stride + s + j])
            .collect(),
        residuals: alpha[s..s + m].to_vec(),
        noise,
        noise_floor,
    }
}

/// Runs the blocked Cholesky with early stopping.
///
/// On a stop, `estimate` is the midpoint of the LML-scale bounds or, in
/// [`EstimatorMode::Extrapolation`], `(N/M) log p(y[:M])`. Without a stop
/// the estimate is the exact `log p(y[:M])` of the processed points, which is
/// the exact LML when `M = N`.
pub fn acgp_run<K: Kernel + ?Sized>(
    kernel: &K,
    mean: &MeanModel,
    noise: &NoiseModel,
    x: &Matrix,
    y: &[f64],
    cfg: &StopConfig,
) -> Result<AcgpResult> {
    let n = y.len();
    if x.nrows() != n {
        return Err(AcgpError::DimensionMismatch(format!(
            "{} inputs but {} targets",
            x.nrows(),
            n
        )));
    }
    if n == 0 {
        return Err(AcgpError::InvalidInput("empty dataset".into()));
    }
    let max_n = cfg.effective_max_n(n)?;
    let m = cfg.block_size;
    let p = x.ncols();
    let xv = x.view();
    let floor = noise.floor();
    let start = Instant::now();

    let mut buffer = FactorBuffer::with_capacity(max_n);
    let cap = max_n;
    let mut trace = Vec::new();

    // first block: factorized without a stopping check
    let first = m.min(max_n);
    let mut prev_stats: Option<QuadStats> = None;
    {
        let (a, alpha) = buffer.raw_mut();
        let xb = xv.submatrix(0, 0, first, p);
        let nv = noise_values(noise, xb)?;
        let mut blk = MatMut::new(a, first, first, cap);
        kernel.block_into(xb, xb, &mut blk);
        for j in 0..first {
            blk.set(j, j, blk.get(j, j) + nv[j]);
            alpha[j] = y[j] - mean.value_at(xb.row(j));
        }
        if cfg.bounds.alpha_mode == AlphaMode::PreviousBlock && first >= 2 {
            let snap = snapshot_from_slab(a, cap, alpha, nv, (n, 0, first), (0.0, 0.0, floor));
            prev_stats = Some(QuadStats::from_snapshot_with(
                &snap,
                cfg.bounds.correlation,
            )?);
        }
        let mut blk = MatMut::new(a, first, first, cap);
        chol_in_place(&mut blk)?;
        forward_solve_in_place(blk.rb(), &mut alpha[..first])?;
    }
    let mut logdet = 0.0;
    let mut quad = 0.0;
    {
        let (a, alpha) = buffer.raw();
        for j in 0..first {
            logdet += 2.0 * a[j * cap + j].ln();
            quad += alpha[j] * alpha[j];
        }
    }
    let mut s = first;
    buffer.set_counts(s, s);

    while s < max_n {
        let t = (s + m).min(max_n);
        let b = t - s;
        let (a, alpha) = buffer.raw_mut();
        let (top, slab) = a.split_at_mut(s * cap);
        let lfac = MatRef::new(top, s, s, cap);
        let xb = xv.submatrix(s, 0, b, p);

        let tk = Instant::now();
        {
            let mut tblk = MatMut::new(slab, b, s, cap);
            kernel.block_into(xb, xv.submatrix(0, 0, s, p), &mut tblk);
        }
        let nv = noise_values(noise, xb)?;
        {
            let mut dblk = MatMut::new(&mut slab[s..], b, b, cap);
            kernel.block_into(xb, xb, &mut dblk);
            for j in 0..b {
                dblk.set(j, j, dblk.get(j, j) + nv[j]);
            }
        }
        let kernel_time = tk.elapsed();

        let ts = Instant::now();
        {
            let mut tblk = MatMut::new(slab, b, s, cap);
            solve_right_transposed(&mut tblk, lfac)?;
        }
        downdate_pending_block(slab, cap, s, b);
        for j in 0..b {
            let row = &slab[j * cap..j * cap + s];
            alpha[s + j] = y[s + j] - mean.value_at(xb.row(j)) - dot(row, &alpha[..s]);
        }
        let solve_time = ts.elapsed();

        if b >= 2 {
            let tb = Instant::now();
            let snap = snapshot_from_slab(slab, cap, alpha, nv, (n, s, b), (logdet, quad, floor));
            let report = evaluate_bounds(&snap, &cfg.bounds, prev_stats.as_ref())?;
            let (lower, upper) = report.lml_bounds();
            let stop = stop_condition(lower, upper, cfg.rtol);
            let bounds_time = tb.elapsed();
            prev_stats = Some(report.quad_stats);
            trace.push(BlockTrace {
                report,
                lower,
                upper,
                elapsed: start.elapsed(),
                kernel_time,
                solve_time,
                bounds_time,
                factor_time: Duration::ZERO,
                snapshot: cfg.record_snapshots.then_some(snap),
            });
            if stop {
                buffer.set_counts(s, s);
                let processed_lml = -0.5 * logdet - 0.5 * quad - 0.5 * s as f64 * (2.0 * PI).ln();
                let estimate = match cfg.estimator {
                    EstimatorMode::Midpoint => midpoint_estimator(lower, upper),
                    EstimatorMode::Extrapolation => extrapolation_estimator(processed_lml, s, n),
                };
                return Ok(AcgpResult {
                    n,
                    estimate,
                    stopped: true,
                    bounds_at_stop: Some((lower, upper)),
                    logdet,
                    quad,
                    trace,
                    elapsed: start.elapsed(),
                    buffer,
                });
            }
        }

        let tf = Instant::now();
        {
            let mut dblk = MatMut::new(&mut slab[s..], b, b, cap);
            chol_in_place(&mut dblk).map_err(|e| reindex(e, s))?;
            forward_solve_in_place(dblk.rb(), &mut alpha[s..t])?;
            for j in 0..b {
                logdet += 2.0 * dblk.get(j, j).ln();
                quad += alpha[s + j] * alpha[s + j];
            }
        }
        if b >= 2 {
            if let Some(last) = trace.last_mut() {
                last.factor_time = tf.elapsed();
            }
        }
        s = t;
        buffer.set_counts(s, s);
    }

    buffer.truncate_pending();
    let processed_lml = -0.5 * logdet - 0.5 * quad - 0.5 * s as f64 * (2.0 * PI).ln();
    Ok(AcgpResult {
        n,
        estimate: processed_lml,
        stopped: false,
        bounds_at_stop: None,
        logdet,
        quad,
        trace,
        elapsed: start.elapsed(),
        buffer,
    })
}

/// Posterior mean and predictive variance (latent variance plus noise) from
/// the `M` processed points of `result`. `x_train` is the full training
/// input matrix; only its first `M` rows are read.
pub fn predict<K: Kernel + ?Sized>(
    result: &AcgpResult,
    kernel: &K,
    mean: &MeanModel,
    noise: &NoiseModel,
    x_train: &Matrix,
    x_star: &Matrix,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mm = result.processed();
    if x_train.nrows() < mm || x_train.ncols() != x_star.ncols() {
        return Err(AcgpError::DimensionMismatch(format!(
            "training inputs {}x{} do not match {} processed points / test dimension {}",
            x_train.nrows(),
            x_train.ncols(),
            mm,
            x_star.ncols()
        )));
    }
    let ns = x_star.nrows();
    let mut w = Matrix::zeros(ns, mm);
    if mm > 0 {
        kernel.block_into(
            x_star.view(),
            x_train.view().submatrix(0, 0, mm, x_train.ncols()),
            &mut w.view_mut(),
        );
        solve_right_transposed(&mut w.view_mut(), result.factor())?;
    }
    let alpha = result.alpha();
    let mut means = Vec::with_capacity(ns);
    let mut vars = Vec::with_capacity(ns);
    for r in 0..ns {
        let xs = x_star.row(r);
        let wr = w.row(r);
        means.push(mean.value_at(xs) + dot(wr, alpha));
        vars.push(kernel.eval(xs, xs) - dot(wr, wr) + noise.checked_variance_at(xs)?);
    }
    Ok((means, vars))
}

/// `log p(y[:n])` for `n = 1..=N` from one full decomposition.
pub fn lml_curve<K: Kernel + ?Sized>(
    kernel: &K,
    mean: &MeanModel,
    noise: &NoiseModel,
    x: &Matrix,
    y: &[f64],
) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(AcgpError::InvalidInput("empty dataset".into()));
    }
    let block = 256.min(y.len()).max(2);
    let res = acgp_run(kernel, mean, noise, x, y, &StopConfig::exact(block))?;
    let l = res.factor();
    let alpha = res.alpha();
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    let mut acc = 0.0;
    Ok((0..y.len())
        .map(|i| {
            acc += -l.get(i, i).ln() - 0.5 * alpha[i] * alpha[i] - half_log_2pi;
            acc
        })
        .collect())
}
