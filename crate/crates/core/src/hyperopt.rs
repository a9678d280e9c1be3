//! Hyperparameter tuning of `(log ℓ, log θ, log σ²)` against the negative
//! LML estimate.
//!
//! Gradients are central finite differences in log space. Steps follow the
//! normalized negative gradient with a backtracking (Armijo) line search.
//! Each restart continues from the best point so far with a tighter
//! tolerance `base^(restart+1)`, and the same value is used as the stopping
//! accuracy `r` of the decomposition unless the objective is exact.
//!
//! A restart converges when one accepted step reduces the objective by less
//! than `tol · max(|f_old|, |f_new|, 1)`, or when the line search fails.

use std::time::{Duration, Instant};

use crate::acgp::{acgp_run, StopConfig};
use crate::bounds::EstimatorMode;
use crate::error::{AcgpError, Result};
use crate::kernel::{KernelFamily, KernelSpec, MeanModel, NoiseModel};
use crate::linalg::Matrix;

/// Log-space hyperparameters `[log ℓ, log θ, log σ²]`.
pub type LogParams = [f64; 3];

pub const PARAM_NAMES: [&str; 3] = ["log_lengthscale", "log_amplitude", "log_noise"];

#[derive(Clone, Debug, PartialEq)]
pub struct TuneConfig {
    pub family: KernelFamily,
    pub max_restarts: usize,
    pub max_steps_per_restart: usize,
    /// Tolerance of restart `i` is `tolerance_base^(i+1)`.
    pub tolerance_base: f64,
    /// Use `r = 0` for every objective evaluation instead of the schedule.
    pub exact: bool,
    pub fd_step: f64,
    /// Initial line-search step length in log space.
    pub initial_step: f64,
    pub max_backtracks: usize,
    pub block_size: usize,
    pub budget: Option<Duration>,
    /// Parameters that are optimized; the others stay at their initial value.
    pub free: [bool; 3],
    /// Also record the exact LML at every accepted point.
    pub track_exact: bool,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            family: KernelFamily::Matern52,
            max_restarts: 5,
            max_steps_per_restart: 50,
            tolerance_base: 2.0 / 3.0,
            exact: false,
            fd_step: 1e-4,
            initial_step: 0.5,
            max_backtracks: 30,
            block_size: 256,
            budget: None,
            free: [true; 3],
            track_exact: false,
        }
    }
}

impl TuneConfig {
    pub fn tolerance(&self, restart: usize) -> f64 {
        self.tolerance_base.powi(restart as i32 + 1)
    }

    /// Stopping accuracy used for the objective during `restart`.
    pub fn rtol(&self, restart: usize) -> f64 {
        if self.exact {
            0.0
        } else {
            self.tolerance(restart)
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance_base > 0.0 && self.tolerance_base < 1.0) {
            return Err(AcgpError::InvalidConfig(format!(
                "tolerance base must lie in (0, 1), got {}",
                self.tolerance_base
            )));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(AcgpError::InvalidConfig(format!(
                "finite-difference step must be positive, got {}",
                self.fd_step
            )));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(AcgpError::InvalidConfig(format!(
                "initial step must be positive, got {}",
                self.initial_step
            )));
        }
        if self.block_size < 2 {
            return Err(AcgpError::InvalidConfig(format!(
                "block size must be >= 2, got {}",
                self.block_size
            )));
        }
        Ok(())
    }
}

/// Builds the kernel and noise model for log-space parameters.
pub fn model_for(family: KernelFamily, params: &LogParams) -> Result<(KernelSpec, NoiseModel)> {
    if params.iter().any(|p| !p.is_finite()) {
        return Err(AcgpError::InvalidInput(format!(
            "non-finite hyperparameters {params:?}"
        )));
    }
    let kernel = KernelSpec::from_log(family, params[0], params[1])?;
    let noise = NoiseModel::homoskedastic(params[2].exp())?;
    Ok((kernel, noise))
}

/// Negative LML estimate (extrapolation estimator) and the number of
/// processed points. Factorization failures give `+∞`.
pub fn objective(
    params: &LogParams,
    family: KernelFamily,
    x: &Matrix,
    y: &[f64],
    rtol: f64,
    block_size: usize,
) -> Result<(f64, usize)> {
    let (kernel, noise) = model_for(family, params)?;
    let cfg = StopConfig::new(rtol, block_size.min(y.len()).max(2))
        .with_estimator(EstimatorMode::Extrapolation);
    match acgp_run(&kernel, &MeanModel::Zero, &noise, x, y, &cfg) {
        Ok(res) if res.estimate.is_finite() => Ok((-res.estimate, res.processed())),
        Ok(res) => Ok((f64::INFINITY, res.processed())),
        Err(AcgpError::NotPositiveDefinite { index, .. }) => Ok((f64::INFINITY, index)),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TunePoint {
    pub time: Duration,
    pub restart: usize,
    pub params: LogParams,
    pub objective: f64,
    pub processed: usize,
    pub rtol: f64,
    pub exact_lml: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TuneResult {
    /// Initial point followed by every accepted step.
    pub trajectory: Vec<TunePoint>,
    pub params: LogParams,
    pub objective: f64,
    pub budget_exhausted: bool,
}

struct Evaluator<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    cfg: &'a TuneConfig,
    start: Instant,
}

impl Evaluator<'_> {
    fn out_of_budget(&self) -> bool {
        self.cfg.budget.is_some_and(|b| self.start.elapsed() >= b)
    }

    fn eval(&self, p: &LogParams, rtol: f64) -> Result<(f64, usize)> {
        objective(
            p,
            self.cfg.family,
            self.x,
            self.y,
            rtol,
            self.cfg.block_size,
        )
    }

    fn point(
        &self,
        restart: usize,
        params: LogParams,
        objective: f64,
        processed: usize,
        rtol: f64,
    ) -> Result<TunePoint> {
        let exact_lml = if self.cfg.track_exact {
            Some(-self.eval(&params, 0.0)?.0)
        } else {
            None
        };
        Ok(TunePoint {
            time: self.start.elapsed(),
            restart,
            params,
            objective,
            processed,
            rtol,
            exact_lml,
        })
    }

    fn gradient(&self, p: &LogParams, f0: f64, rtol: f64) -> Result<[f64; 3]> {
        let h = self.cfg.fd_step;
        let mut g = [0.0; 3];
        for i in 0..3 {
            if !self.cfg.free[i] {
                continue;
            }
            let mut plus = *p;
            plus[i] += h;
            let mut minus = *p;
            minus[i] -= h;
            let fp = self.eval(&plus, rtol)?.0;
            let fm = self.eval(&minus, rtol)?.0;
            g[i] = match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - f0) / h,
                (false, true) => (f0 - fm) / h,
                (false, false) => 0.0,
            };
        }
        Ok(g)
    }
}

/// Minimizes the negative LML estimate starting from `init`.
pub fn tune(x: &Matrix, y: &[f64], init: LogParams, cfg: &TuneConfig) -> Result<TuneResult> {
    cfg.validate()?;
    if y.is_empty() || x.nrows() != y.len() {
        return Err(AcgpError::DimensionMismatch(format!(
            "{} inputs, {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if init.iter().any(|p| !p.is_finite()) {
        return Err(AcgpError::InvalidInput(format!(
            "non-finite initial hyperparameters {init:?}"
        )));
    }
    let ev = Evaluator {
        x,
        y,
        cfg,
        start: Instant::now(),
    };

    let rtol0 = cfg.rtol(0);
    let (f_init, m_init) = ev.eval(&init, rtol0)?;
    let mut trajectory = vec![ev.point(0, init, f_init, m_init, rtol0)?];
    let mut params = init;
    let mut budget_exhausted = false;

    'restarts: for restart in 0..cfg.max_restarts {
        if cfg.max_steps_per_restart == 0 {
            break;
        }
        let rtol = cfg.rtol(restart);
        let tol = cfg.tolerance(restart);
        // the objective changes with r, so re-evaluate at the start point
        let (mut f, _) = ev.eval(&params, rtol)?;
        if !f.is_finite() {
            break;
        }
        let mut step = cfg.initial_step;
        for _ in 0..cfg.max_steps_per_restart {
            if ev.out_of_budget() {
                budget_exhausted = true;
                break 'restarts;
            }
            let g = ev.gradient(&params, f, rtol)?;
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(gnorm > 0.0) || !gnorm.is_finite() {
                break;
            }
            let mut accepted = None;
            let mut eta = step;
            for _ in 0..=cfg.max_backtracks {
                if ev.out_of_budget() {
                    budget_exhausted = true;
                    break 'restarts;
                }
                let mut cand = params;
                for i in 0..3 {
                    cand[i] -= eta * g[i] / gnorm;
                }
                let (fc, mc) = ev.eval(&cand, rtol)?;
                if fc.is_finite() && fc <= f - 1e-4 * eta * gnorm {
                    accepted = Some((cand, fc, mc));
                    break;
                }
                eta *= 0.5;
            }
            let Some((cand, fc, mc)) = accepted else {
                break;
            };
            let decrease = f - fc;
            params = cand;
            trajectory.push(ev.point(restart, cand, fc, mc, rtol)?);
            let scale = f.abs().max(fc.abs()).max(1.0);
            f = fc;
            step = (2.0 * eta).min(4.0 * cfg.initial_step);
            if decrease <= tol * scale {
                break;
            }
        }
    }

    let last = trajectory
        .last()
        .expect("trajectory holds the initial point");
    Ok(TuneResult {
        params: last.params,
        objective: last.objective,
        trajectory,
        budget_exhausted,
    })
}
