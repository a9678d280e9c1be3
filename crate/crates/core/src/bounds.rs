//! Bounds on the log-determinant and quadratic term of the full kernel matrix,
//! estimated from one block of the partially completed decomposition, and the
//! stopping rule built on them.
//!
//! All bounds hold in expectation over the ordering of an exchangeable
//! dataset, not pointwise: a single report may have `ld > ud`.

use std::f64::consts::PI;

use crate::error::{AcgpError, Result};

/// How the step size `α` of the quadratic lower bound is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AlphaMode {
    /// Maximize the bound using the statistics of the current block.
    #[default]
    CurrentBlock,
    /// Use the statistics of the previous block, so that `α` only depends on
    /// already conditioned points.
    PreviousBlock,
}

/// Variant of the quadratic upper bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UpperQuadMode {
    /// Correlation-corrected calibration up to a cutoff step, then the
    /// conservative noise-normalized error for the remaining points.
    #[default]
    CutoffRemark,
    /// Correlation-corrected calibration extrapolated over all remaining points.
    MainText,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EstimatorMode {
    /// `(L + U) / 2` of the LML-scale bounds.
    #[default]
    Midpoint,
    /// Processed-prefix LML scaled by `N / τ`.
    Extrapolation,
}

/// Which first off-diagonal entries of the block feed the correlation
/// estimates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CorrelationMode {
    /// All `m - 1` consecutive pairs.
    #[default]
    AllPairs,
    /// Only the disjoint pairs `(0,1), (2,3), ...`.
    DisjointPairs,
}

impl CorrelationMode {
    /// Mean of `f(j)` over the selected pair indices `j` (pair `(j, j+1)`).
    fn pair_mean(self, m: usize, f: impl Fn(usize) -> f64) -> f64 {
        match self {
            CorrelationMode::AllPairs => (0..m - 1).map(f).sum::<f64>() / (m - 1) as f64,
            CorrelationMode::DisjointPairs => {
                (0..m - 1).step_by(2).map(f).sum::<f64>() / (m / 2) as f64
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BoundsOptions {
    pub alpha_mode: AlphaMode,
    pub uq_mode: UpperQuadMode,
    pub correlation: CorrelationMode,
}

/// The quantities of one pending block that the bounds consume.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSnapshot {
    /// Dataset size.
    pub n: usize,
    /// Number of conditioned (fully factorized) points.
    pub s: usize,
    /// `s + m`, the end of the downdated block.
    pub t: usize,
    /// `log|K[:s,:s]|`.
    pub logdet: f64,
    /// `y[:s]ᵀ K[:s,:s]⁻¹ y[:s]` (mean-corrected).
    pub quad: f64,
    /// Posterior variance plus noise for `j in s..t`.
    pub variances: Vec<f64>,
    /// Posterior covariance between consecutive points `j, j+1`.
    pub covariances: Vec<f64>,
    /// Prediction errors `y_j - m*(x_j)` of the `s`-point posterior.
    pub residuals: Vec<f64>,
    /// `σ²(x_j)`.
    pub noise: Vec<f64>,
    /// `inf σ²`.
    pub noise_floor: f64,
}

impl BlockSnapshot {
    pub fn block_len(&self) -> usize {
        self.variances.len()
    }

    fn validate(&self) -> Result<()> {
        let m = self.variances.len();
        if self.s + m != self.t || self.t > self.n {
            return Err(AcgpError::InvalidInput(format!(
                "snapshot indices inconsistent: s={} m={} t={} n={}",
                self.s, m, self.t, self.n
            )));
        }
        if self.residuals.len() != m || self.noise.len() != m {
            return Err(AcgpError::DimensionMismatch(format!(
                "snapshot vectors: {} variances, {} residuals, {} noise values",
                m,
                self.residuals.len(),
                self.noise.len()
            )));
        }
        if m > 0 && self.covariances.len() != m - 1 {
            return Err(AcgpError::DimensionMismatch(format!(
                "snapshot has {} covariances for {} variances",
                self.covariances.len(),
                m
            )));
        }
        if !(self.noise_floor > 0.0) {
            return Err(AcgpError::InvalidInput(format!(
                "noise floor {} not positive",
                self.noise_floor
            )));
        }
        if let Some((j, v)) = self
            .variances
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0))
        {
            return Err(AcgpError::NotPositiveDefinite {
                index: self.s + j,
                pivot: *v,
            });
        }
        debug_assert!(self
            .covariances
            .iter()
            .enumerate()
            .all(|(j, c)| c * c <= self.variances[j] * self.variances[j + 1] * (1.0 + 1e-8)));
        Ok(())
    }
}

/// Block statistics that determine `α` for the quadratic lower bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadStats {
    /// `(1/m) Σ e_j²`.
    pub mean_sq_error: f64,
    /// `(1/m) Σ e_j² V_j`.
    pub weighted_sq_error: f64,
    /// `(1/(m-1)) Σ e_j e_{j+1} C_j`.
    pub cross: f64,
}

impl QuadStats {
    pub fn from_snapshot(snap: &BlockSnapshot) -> Result<Self> {
        Self::from_snapshot_with(snap, CorrelationMode::AllPairs)
    }

    pub fn from_snapshot_with(snap: &BlockSnapshot, correlation: CorrelationMode) -> Result<Self> {
        let m = snap.block_len();
        if m < 2 {
            return Err(AcgpError::InvalidInput(format!(
                "block of {m} points is too small for bound estimation"
            )));
        }
        let e = &snap.residuals;
        let mf = m as f64;
        let mean_sq_error = e.iter().map(|v| v * v).sum::<f64>() / mf;
        let weighted_sq_error = e
            .iter()
            .zip(&snap.variances)
            .map(|(ej, vj)| ej * ej * vj)
            .sum::<f64>()
            / mf;
        let cross = correlation.pair_mean(m, |j| e[j] * e[j + 1] * snap.covariances[j]);
        Ok(Self {
            mean_sq_error,
            weighted_sq_error,
            cross,
        })
    }

    /// Maximizer of the quadratic lower bound for `remaining = N - s` points.
    /// Zero when the curvature estimate is not positive.
    pub fn alpha(&self, remaining: usize) -> f64 {
        let denom = self.curvature(remaining);
        let a = self.mean_sq_error / denom;
        if denom > 0.0 && a.is_finite() {
            a
        } else {
            0.0
        }
    }

    fn curvature(&self, remaining: usize) -> f64 {
        self.weighted_sq_error + (remaining as f64 - 1.0) * self.cross
    }
}

/// Bounds and the intermediate statistics they were built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundsReport {
    pub n: usize,
    pub s: usize,
    pub t: usize,
    pub ld: f64,
    pub ud: f64,
    pub lq: f64,
    pub uq: f64,
    /// Average log posterior variance.
    pub mu_d: f64,
    /// Average squared noise-normalized cross-covariance.
    pub rho_d: f64,
    pub psi_d: usize,
    /// Average error calibration `e²/V`.
    pub mu_q: f64,
    /// Correlation correction of the calibration.
    pub rho_q_upper: f64,
    pub psi_q: usize,
    /// Average noise-normalized squared error `e²/σ²`.
    pub tail_q: f64,
    pub quad_stats: QuadStats,
    pub alpha: f64,
}

impl BoundsReport {
    /// The bounds of an empty remainder: both collapse to the exact values.
    pub fn collapsed(n: usize, logdet: f64, quad: f64) -> Self {
        Self {
            n,
            s: n,
            t: n,
            ld: logdet,
            ud: logdet,
            lq: quad,
            uq: quad,
            mu_d: 0.0,
            rho_d: 0.0,
            psi_d: n,
            mu_q: 0.0,
            rho_q_upper: 0.0,
            psi_q: n,
            tail_q: 0.0,
            quad_stats: QuadStats {
                mean_sq_error: 0.0,
                weighted_sq_error: 0.0,
                cross: 0.0,
            },
            alpha: 0.0,
        }
    }

    /// `(L, U)` on the log-marginal-likelihood scale.
    pub fn lml_bounds(&self) -> (f64, f64) {
        lml_scale(self.ld, self.ud, self.lq, self.uq, self.n)
    }
}

/// Largest step `ψ ∈ [s, n]` for which a linearly decaying per-step estimate
/// with average `slack` above its floor and decay `rho` stays useful.
fn cutoff_step(s: usize, n: usize, slack: f64, rho: f64) -> usize {
    if !(rho > 0.0) || !rho.is_finite() {
        return n;
    }
    let raw = (s as f64 - 1.0 + 2.0 * slack / rho).floor();
    if raw.is_nan() || raw <= s as f64 {
        s
    } else if raw >= n as f64 {
        n
    } else {
        raw as usize
    }
}

/// Computes all four bounds from a block snapshot.
///
/// `previous` supplies the statistics of the preceding block and is only
/// consulted in [`AlphaMode::PreviousBlock`]; without it `α = 0` and the
/// quadratic lower bound degenerates to the processed quadratic form.
pub fn evaluate_bounds(
    snap: &BlockSnapshot,
    opts: &BoundsOptions,
    previous: Option<&QuadStats>,
) -> Result<BoundsReport> {
    if snap.s == snap.n {
        if !snap.variances.is_empty() {
            return Err(AcgpError::InvalidInput(
                "snapshot at s = N must have an empty block".into(),
            ));
        }
        return Ok(BoundsReport::collapsed(snap.n, snap.logdet, snap.quad));
    }
    snap.validate()?;
    let m = snap.block_len();
    if m < 2 {
        return Err(AcgpError::InvalidInput(format!(
            "block of {m} points is too small for bound estimation"
        )));
    }
    let (n, s) = (snap.n, snap.s);
    let mf = m as f64;
    let remaining = (n - s) as f64;
    let log_floor = snap.noise_floor.ln();
    let (v, c, e, noise) = (
        &snap.variances,
        &snap.covariances,
        &snap.residuals,
        &snap.noise,
    );

    // log-determinant
    let mu_d = v.iter().map(|x| x.ln()).sum::<f64>() / mf;
    let rho_d = opts
        .correlation
        .pair_mean(m, |j| c[j] * c[j] / (noise[j] * noise[j + 1]));
    let ud = snap.logdet + remaining * mu_d;
    let psi_d = cutoff_step(s, n, mu_d - log_floor, rho_d);
    let steps = (psi_d - s) as f64;
    let ld =
        snap.logdet + steps * (mu_d - 0.5 * (steps - 1.0) * rho_d) + (n - psi_d) as f64 * log_floor;

    // quadratic upper bound
    let mu_q = e.iter().zip(v).map(|(ej, vj)| ej * ej / vj).sum::<f64>() / mf;
    let rho_q_upper = opts.correlation.pair_mean(m, |j| {
        e[j] * e[j] * c[j] * c[j] / (v[j] * noise[j] * noise[j + 1])
    });
    let tail_q = e
        .iter()
        .zip(noise)
        .map(|(ej, sj)| ej * ej / sj)
        .sum::<f64>()
        / mf;
    let (uq, psi_q) = match opts.uq_mode {
        UpperQuadMode::CutoffRemark => {
            let psi_q = cutoff_step(s, n, tail_q - mu_q, rho_q_upper);
            let steps = (psi_q - s) as f64;
            let uq = snap.quad
                + steps * (mu_q + 0.5 * (steps - 1.0) * rho_q_upper)
                + (n - psi_q) as f64 * tail_q;
            (uq, psi_q)
        }
        UpperQuadMode::MainText => {
            let uq = snap.quad + remaining * (mu_q + 0.5 * (remaining - 1.0) * rho_q_upper);
            (uq, n)
        }
    };

    // quadratic lower bound
    let stats = QuadStats::from_snapshot_with(snap, opts.correlation)?;
    let alpha = match opts.alpha_mode {
        AlphaMode::CurrentBlock => stats.alpha(n - s),
        AlphaMode::PreviousBlock => previous.map_or(0.0, |p| p.alpha(n - s)),
    };
    let lq = snap.quad
        + alpha * remaining * (2.0 * stats.mean_sq_error - alpha * stats.curvature(n - s));

    Ok(BoundsReport {
        n,
        s,
        t: snap.t,
        ld,
        ud,
        lq,
        uq,
        mu_d,
        rho_d,
        psi_d,
        mu_q,
        rho_q_upper,
        psi_q,
        tail_q,
        quad_stats: stats,
        alpha,
    })
}

/// Converts log-determinant and quadratic bounds to LML-scale `(L, U)`.
/// The upper LML bound comes from the lower bounds on both terms.
pub fn lml_scale(ld: f64, ud: f64, lq: f64, uq: f64, n: usize) -> (f64, f64) {
    let c = 0.5 * n as f64 * (2.0 * PI).ln();
    (-0.5 * ud - 0.5 * uq - c, -0.5 * ld - 0.5 * lq - c)
}

/// Stopping test on LML-scale bounds: same nonzero sign and
/// `(U - L) / (2 min(|U|, |L|)) < r`. Inverted bounds never stop.
pub fn stop_condition(lower: f64, upper: f64, r: f64) -> bool {
    if !(lower.is_finite() && upper.is_finite()) || upper < lower {
        return false;
    }
    let same_sign = (lower > 0.0 && upper > 0.0) || (lower < 0.0 && upper < 0.0);
    same_sign && (upper - lower) / (2.0 * lower.abs().min(upper.abs())) < r
}

pub fn check_stop(report: &BoundsReport, r: f64) -> bool {
    let (l, u) = report.lml_bounds();
    stop_condition(l, u, r)
}

pub fn midpoint_estimator(lower: f64, upper: f64) -> f64 {
    0.5 * (lower + upper)
}

/// `(N / τ) log p(y[:τ])`.
pub fn extrapolation_estimator(lml_processed: f64, tau: usize, n: usize) -> f64 {
    assert!(tau >= 1, "extrapolation needs at least one processed point");
    n as f64 / tau as f64 * lml_processed
}
