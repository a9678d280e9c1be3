//! Dense exact GP regression used as a reference.
//!
//! Deliberately shares nothing with the blocked path in [`crate::linalg`]
//! beyond the matrix container: the factorization is a plain row-by-row
//! Cholesky with sequential summation, and all solves are written out here.

use std::f64::consts::PI;

use crate::bounds::{
    evaluate_bounds, AlphaMode, BlockSnapshot, BoundsOptions, BoundsReport, QuadStats,
};
use crate::error::{AcgpError, Result};
use crate::kernel::{kernel_block, Kernel, KernelSpec, MeanModel, NoiseModel};
use crate::linalg::Matrix;

/// Unblocked Cholesky–Banachiewicz with sequential sums. Reads the lower
/// triangle of `k`; returns `L` with zero strict upper triangle.
pub fn reference_cholesky(k: &Matrix) -> Result<Matrix> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(AcgpError::DimensionMismatch(
            "reference Cholesky needs a square matrix".into(),
        ));
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = k[(i, j)] - lane_dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                if !(s > 0.0) {
                    return Err(AcgpError::NotPositiveDefinite { index: i, pivot: s });
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Plain eight-accumulator dot product, kept separate from the blocked
/// kernels so the reference shares no arithmetic code with them.
fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, ta) = a.split_at(a.len() / 8 * 8);
    let (cb, tb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(8).zip(cb.chunks_exact(8)) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = acc.iter().sum::<f64>();
    for (x, y) in ta.iter().zip(tb) {
        s += x * y;
    }
    s
}

/// Solves `L[:s,:s] x = b` in place by sequential forward substitution.
fn lower_solve(l: &Matrix, s: usize, b: &mut [f64]) {
    for i in 0..s {
        let row = l.row(i);
        let mut acc = b[i];
        for p in 0..i {
            acc -= row[p] * b[p];
        }
        b[i] = acc / row[i];
    }
}

/// Exact GP fitted on the full dataset.
#[derive(Clone, Debug)]
pub struct ExactModel {
    pub kernel: KernelSpec,
    pub mean: MeanModel,
    pub noise: NoiseModel,
    x: Matrix,
    y: Vec<f64>,
    chol: Matrix,
    alpha: Vec<f64>,
}

impl ExactModel {
    pub fn fit(
        kernel: KernelSpec,
        mean: MeanModel,
        noise: NoiseModel,
        x: &Matrix,
        y: &[f64],
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(AcgpError::DimensionMismatch(format!(
                "{} inputs but {} targets",
                x.nrows(),
                y.len()
            )));
        }
        let n = y.len();
        let mut k = kernel_block(&kernel, x, x)?;
        for i in 0..n {
            k[(i, i)] += noise.checked_variance_at(x.row(i))?;
        }
        let chol = reference_cholesky(&k)?;
        let mut alpha: Vec<f64> = (0..n).map(|i| y[i] - mean.value_at(x.row(i))).collect();
        lower_solve(&chol, n, &mut alpha);
        Ok(Self {
            kernel,
            mean,
            noise,
            x: x.clone(),
            y: y.to_vec(),
            chol,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn cholesky(&self) -> &Matrix {
        &self.chol
    }

    /// `L⁻¹ (y - mean)`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `log|K[:s,:s]|`; the leading block of the full factor is the factor of
    /// the leading block.
    pub fn prefix_logdet(&self, s: usize) -> f64 {
        (0..s).map(|i| 2.0 * self.chol[(i, i)].ln()).sum()
    }

    /// `y[:s]ᵀ K[:s,:s]⁻¹ y[:s]` (mean-corrected).
    pub fn prefix_quad(&self, s: usize) -> f64 {
        self.alpha[..s].iter().map(|a| a * a).sum()
    }

    pub fn prefix_lml(&self, s: usize) -> f64 {
        -0.5 * self.prefix_logdet(s) - 0.5 * self.prefix_quad(s) - 0.5 * s as f64 * (2.0 * PI).ln()
    }

    pub fn logdet(&self) -> f64 {
        self.prefix_logdet(self.len())
    }

    pub fn quad(&self) -> f64 {
        self.prefix_quad(self.len())
    }

    /// `log p(y) = -½ log|K| - ½ yᵀK⁻¹y - (N/2) log 2π`.
    pub fn lml(&self) -> f64 {
        self.prefix_lml(self.len())
    }

    /// `L[:s,:s]⁻¹ k(X[:s], X_rest)` column by column, stored as rows.
    fn projected_cross(&self, s: usize, x_rest: &Matrix) -> Result<Matrix> {
        let prefix = self.x.row_range(0, s);
        let mut cross = kernel_block(&self.kernel, x_rest, &prefix)?;
        for r in 0..x_rest.nrows() {
            lower_solve(&self.chol, s, cross.row_mut(r));
        }
        Ok(cross)
    }

    /// Posterior covariance `Σ*⁽ˢ⁾(X_rest, X_rest)` of the latent function
    /// conditioned on the first `s` observations (noise excluded).
    pub fn posterior_cov(&self, s: usize, x_rest: &Matrix) -> Result<Matrix> {
        if s > self.len() {
            return Err(AcgpError::InvalidInput(format!(
                "prefix {s} exceeds dataset size {}",
                self.len()
            )));
        }
        let mut prior = kernel_block(&self.kernel, x_rest, x_rest)?;
        if s == 0 {
            return Ok(prior);
        }
        let v = self.projected_cross(s, x_rest)?;
        let r = x_rest.nrows();
        for a in 0..r {
            for b in 0..r {
                let (va, vb) = (v.row(a), v.row(b));
                let mut acc = 0.0;
                for p in 0..s {
                    acc += va[p] * vb[p];
                }
                prior[(a, b)] -= acc;
            }
        }
        Ok(prior)
    }

    /// Posterior mean `m*⁽ˢ⁾(X_rest)` including the prior mean.
    pub fn posterior_mean(&self, s: usize, x_rest: &Matrix) -> Result<Vec<f64>> {
        if s > self.len() {
            return Err(AcgpError::InvalidInput(format!(
                "prefix {s} exceeds dataset size {}",
                self.len()
            )));
        }
        let v = if s == 0 {
            Matrix::zeros(x_rest.nrows(), 0)
        } else {
            self.projected_cross(s, x_rest)?
        };
        Ok((0..x_rest.nrows())
            .map(|r| {
                let mut acc = self.mean.value_at(x_rest.row(r));
                for p in 0..s {
                    acc += v[(r, p)] * self.alpha[p];
                }
                acc
            })
            .collect())
    }

    /// Posterior mean and predictive variance (latent variance plus noise)
    /// after conditioning on all `N` points.
    pub fn predict(&self, x_star: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.len();
        let mean = self.posterior_mean(n, x_star)?;
        let mut var = Vec::with_capacity(x_star.nrows());
        let v = if n == 0 {
            Matrix::zeros(x_star.nrows(), 0)
        } else {
            self.projected_cross(n, x_star)?
        };
        for r in 0..x_star.nrows() {
            let x = x_star.row(r);
            let mut acc = self.kernel.eval(x, x);
            for p in 0..n {
                acc -= v[(r, p)] * v[(r, p)];
            }
            var.push(acc + self.noise.checked_variance_at(x)?);
        }
        Ok((mean, var))
    }

    /// `σ²(x_n) + Σ*⁽ⁿ⁾(x_n, x_n)` for the point at 0-based index `n`,
    /// conditioned on the `n` points before it.
    pub fn sequential_variance(&self, n: usize) -> Result<f64> {
        let xn = self.x.row_range(n, n + 1);
        let cov = self.posterior_cov(n, &xn)?;
        Ok(cov[(0, 0)] + self.noise.checked_variance_at(xn.row(0))?)
    }

    /// `y_n - m*⁽ⁿ⁾(x_n)` for the point at 0-based index `n`.
    pub fn sequential_residual(&self, n: usize) -> Result<f64> {
        let xn = self.x.row_range(n, n + 1);
        Ok(self.y[n] - self.posterior_mean(n, &xn)?[0])
    }

    /// Snapshot of block `s..t` built from the definitions: dense posterior
    /// covariance and mean of the first `s` points.
    pub fn brute_force_snapshot(&self, s: usize, t: usize) -> Result<BlockSnapshot> {
        if !(s < t && t <= self.len()) {
            return Err(AcgpError::InvalidInput(format!(
                "need s < t <= N, got s={s} t={t}"
            )));
        }
        let rest = self.x.row_range(s, t);
        let cov = self.posterior_cov(s, &rest)?;
        let mean = self.posterior_mean(s, &rest)?;
        let m = t - s;
        let noise: Vec<f64> = (0..m)
            .map(|j| self.noise.checked_variance_at(rest.row(j)))
            .collect::<Result<_>>()?;
        Ok(BlockSnapshot {
            n: self.len(),
            s,
            t,
            logdet: self.prefix_logdet(s),
            quad: self.prefix_quad(s),
            variances: (0..m).map(|j| cov[(j, j)] + noise[j]).collect(),
            covariances: (0..m.saturating_sub(1)).map(|j| cov[(j + 1, j)]).collect(),
            residuals: (0..m).map(|j| self.y[s + j] - mean[j]).collect(),
            noise,
            noise_floor: self.noise.floor(),
        })
    }

    /// Bounds evaluated on [`Self::brute_force_snapshot`]. In
    /// [`AlphaMode::PreviousBlock`] the block `s-m..s` supplies `α` when it
    /// exists.
    pub fn brute_force_bounds(
        &self,
        s: usize,
        t: usize,
        opts: &BoundsOptions,
    ) -> Result<BoundsReport> {
        if s == self.len() {
            return Ok(BoundsReport::collapsed(s, self.logdet(), self.quad()));
        }
        if t < s + 2 {
            return Err(AcgpError::InvalidInput(format!(
                "block {s}..{t} is too small for bound estimation"
            )));
        }
        let snap = self.brute_force_snapshot(s, t)?;
        let m = t - s;
        let prev = if opts.alpha_mode == AlphaMode::PreviousBlock && s >= m {
            Some(QuadStats::from_snapshot_with(
                &self.brute_force_snapshot(s - m, s)?,
                opts.correlation,
            )?)
        } else {
            None
        };
        evaluate_bounds(&snap, opts, prev.as_ref())
    }
}
