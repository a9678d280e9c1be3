//! Stationary covariance functions plus the mean and noise models that turn
//! them into the regularized kernel matrix `K = k(X, X) + diag(σ²(X))`.

use std::fmt;
use std::sync::Arc;

use crate::error::{AcgpError, Result};
use crate::linalg::{dot, MatMut, MatRef, Matrix};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    SquaredExponential,
    OrnsteinUhlenbeck,
    Matern32,
    Matern52,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::SquaredExponential,
        KernelFamily::OrnsteinUhlenbeck,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::OrnsteinUhlenbeck => "ou",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = AcgpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "rbf" | "squared-exponential" => Ok(KernelFamily::SquaredExponential),
            "ou" | "exponential" | "ornstein-uhlenbeck" => Ok(KernelFamily::OrnsteinUhlenbeck),
            "matern32" | "matern-3/2" => Ok(KernelFamily::Matern32),
            "matern52" | "matern-5/2" => Ok(KernelFamily::Matern52),
            other => Err(AcgpError::InvalidInput(format!(
                "unknown kernel family '{other}'"
            ))),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Anything that can fill kernel blocks.
///
/// The adaptive driver only ever asks for blocks between rows it has already
/// reached, so wrapping a kernel is enough to audit which inputs were touched.
pub trait Kernel: Sync {
    fn eval(&self, x: &[f64], z: &[f64]) -> f64;

    /// Fills `out[i, j] = k(rows_i, cols_j)`.
    fn block_into(&self, rows: MatRef<'_>, cols: MatRef<'_>, out: &mut MatMut<'_>) {
        for i in 0..rows.nrows() {
            let x = rows.row(i);
            for j in 0..cols.nrows() {
                out.set(i, j, self.eval(x, cols.row(j)));
            }
        }
    }
}

/// Kernel family with hyperparameters held in log space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    log_lengthscale: f64,
    log_amplitude: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscale: f64, amplitude: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(AcgpError::InvalidInput(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(AcgpError::InvalidInput(format!(
                "amplitude must be positive, got {amplitude}"
            )));
        }
        Ok(Self {
            family,
            log_lengthscale: lengthscale.ln(),
            log_amplitude: amplitude.ln(),
        })
    }

    pub fn from_log(
        family: KernelFamily,
        log_lengthscale: f64,
        log_amplitude: f64,
    ) -> Result<Self> {
        if !log_lengthscale.is_finite() || !log_amplitude.is_finite() {
            return Err(AcgpError::InvalidInput(
                "log hyperparameters must be finite".into(),
            ));
        }
        Ok(Self {
            family,
            log_lengthscale,
            log_amplitude,
        })
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn amplitude(&self) -> f64 {
        self.log_amplitude.exp()
    }

    pub fn log_lengthscale(&self) -> f64 {
        self.log_lengthscale
    }

    pub fn log_amplitude(&self) -> f64 {
        self.log_amplitude
    }

    /// Covariance as a function of the squared distance.
    #[inline]
    pub fn from_sq_dist(&self, d2: f64) -> f64 {
        let theta = self.amplitude();
        let ell = self.lengthscale();
        match self.family {
            KernelFamily::SquaredExponential => theta * (-0.5 * d2 / (ell * ell)).exp(),
            KernelFamily::OrnsteinUhlenbeck => theta * (-d2.sqrt() / ell).exp(),
            KernelFamily::Matern32 => {
                let r = SQRT3 * d2.sqrt() / ell;
                theta * (1.0 + r) * (-r).exp()
            }
            KernelFamily::Matern52 => {
                let r = SQRT5 * d2.sqrt() / ell;
                theta * (1.0 + r + r * r / 3.0) * (-r).exp()
            }
        }
    }
}

#[inline]
fn sq_dist(x: &[f64], z: &[f64], xx: f64, zz: f64) -> f64 {
    (xx + zz - 2.0 * dot(x, z)).max(0.0)
}

impl Kernel for KernelSpec {
    fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        self.from_sq_dist(sq_dist(x, z, dot(x, x), dot(z, z)))
    }

    fn block_into(&self, rows: MatRef<'_>, cols: MatRef<'_>, out: &mut MatMut<'_>) {
        let rn: Vec<f64> = (0..rows.nrows())
            .map(|i| dot(rows.row(i), rows.row(i)))
            .collect();
        let cn: Vec<f64> = (0..cols.nrows())
            .map(|j| dot(cols.row(j), cols.row(j)))
            .collect();
        for (i, &xx) in rn.iter().enumerate() {
            let x = rows.row(i);
            let orow = out.row_mut(i);
            for (j, &zz) in cn.iter().enumerate() {
                orow[j] = self.from_sq_dist(sq_dist(x, cols.row(j), xx, zz));
            }
        }
    }
}

/// Observation noise variance `σ²(x)`.
#[derive(Clone)]
pub enum NoiseModel {
    Homoskedastic(f64),
    /// Input-dependent variance with a declared infimum `floor > 0`.
    Heteroskedastic {
        variance: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        floor: f64,
    },
}

impl fmt::Debug for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Homoskedastic(v) => f.debug_tuple("Homoskedastic").field(v).finish(),
            NoiseModel::Heteroskedastic { floor, .. } => f
                .debug_struct("Heteroskedastic")
                .field("floor", floor)
                .finish_non_exhaustive(),
        }
    }
}

impl NoiseModel {
    pub fn homoskedastic(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(AcgpError::InvalidInput(format!(
                "noise variance must be positive, got {variance}"
            )));
        }
        Ok(NoiseModel::Homoskedastic(variance))
    }

    pub fn heteroskedastic<F>(variance: F, floor: f64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(AcgpError::InvalidInput(format!(
                "noise floor must be positive, got {floor}"
            )));
        }
        Ok(NoiseModel::Heteroskedastic {
            variance: Arc::new(variance),
            floor,
        })
    }

    pub fn variance_at(&self, x: &[f64]) -> f64 {
        match self {
            NoiseModel::Homoskedastic(v) => *v,
            NoiseModel::Heteroskedastic { variance, .. } => variance(x),
        }
    }

    /// `inf_x σ²(x)`; the variance itself for homoskedastic noise.
    pub fn floor(&self) -> f64 {
        match self {
            NoiseModel::Homoskedastic(v) => *v,
            NoiseModel::Heteroskedastic { floor, .. } => *floor,
        }
    }

    /// Noise variance at `x`, rejecting values below the declared floor.
    pub fn checked_variance_at(&self, x: &[f64]) -> Result<f64> {
        let v = self.variance_at(x);
        if !(v >= self.floor()) || !v.is_finite() {
            return Err(AcgpError::InvalidInput(format!(
                "noise variance {v} below declared floor {}",
                self.floor()
            )));
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum MeanModel {
    #[default]
    Zero,
    Constant(f64),
}

impl MeanModel {
    pub fn value_at(&self, _x: &[f64]) -> f64 {
        match self {
            MeanModel::Zero => 0.0,
            MeanModel::Constant(c) => *c,
        }
    }
}

/// `k(rows, cols)` as a dense matrix.
pub fn kernel_block<K: Kernel + ?Sized>(
    kernel: &K,
    rows: &Matrix,
    cols: &Matrix,
) -> Result<Matrix> {
    if rows.ncols() != cols.ncols() {
        return Err(AcgpError::DimensionMismatch(format!(
            "inputs have {} and {} columns",
            rows.ncols(),
            cols.ncols()
        )));
    }
    let mut out = Matrix::zeros(rows.nrows(), cols.nrows());
    kernel.block_into(rows.view(), cols.view(), &mut out.view_mut());
    Ok(out)
}

/// `k(X, X) + diag(σ²(X))` for a non-empty block.
pub fn regularized_diag_block<K: Kernel + ?Sized>(
    kernel: &K,
    noise: &NoiseModel,
    x: &Matrix,
) -> Result<Matrix> {
    if x.nrows() == 0 {
        return Err(AcgpError::InvalidInput("empty input block".into()));
    }
    let mut out = kernel_block(kernel, x, x)?;
    for i in 0..x.nrows() {
        out[(i, i)] += noise.checked_variance_at(x.row(i))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn se(ell: f64, theta: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::SquaredExponential, ell, theta).unwrap()
    }

    #[test]
    fn se_at_zero_distance() {
        let k = se(1.0, 1.0);
        assert_eq!(k.eval(&[0.3, -2.0], &[0.3, -2.0]), 1.0);
    }

    #[test]
    fn ou_at_unit_distance() {
        let k = KernelSpec::new(KernelFamily::OrnsteinUhlenbeck, 1.0, 1.0).unwrap();
        let v = k.eval(&[0.0], &[1.0]);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn se_grid_matches_scalar_loop() {
        let k = se(1.0, 1.0);
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let kb = kernel_block(&k, &x, &x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let d = i as f64 - j as f64;
                let oracle = (-d * d / 2.0).exp();
                assert!((kb[(i, j)] - oracle).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn matern_closed_forms() {
        let m32 = KernelSpec::new(KernelFamily::Matern32, 2.0, 3.0).unwrap();
        let m52 = KernelSpec::new(KernelFamily::Matern52, 2.0, 3.0).unwrap();
        let r: f64 = 1.5 / 2.0;
        let e32 = 3.0 * (1.0 + 3f64.sqrt() * r) * (-(3f64.sqrt()) * r).exp();
        let e52 = 3.0 * (1.0 + 5f64.sqrt() * r + 5.0 * r * r / 3.0) * (-(5f64.sqrt()) * r).exp();
        assert!((m32.eval(&[0.0], &[1.5]) - e32).abs() < 1e-14);
        assert!((m52.eval(&[0.0], &[1.5]) - e52).abs() < 1e-14);
        // amplitude round-trips through log space
        assert!((m32.eval(&[4.0], &[4.0]) - 3.0).abs() < 3e-15);
        assert_eq!(m52.eval(&[4.0], &[4.0]), m52.amplitude());
    }

    #[test]
    fn diag_block_adds_noise() {
        let k = se(1.0, 1.0);
        let noise = NoiseModel::homoskedastic(1e-3).unwrap();
        let x = Matrix::from_rows(&[[0.25, 7.0]]).unwrap();
        let b = regularized_diag_block(&k, &noise, &x).unwrap();
        assert!((b[(0, 0)] - 1.001).abs() < 1e-15);
    }

    #[test]
    fn diag_block_rejects_empty() {
        let k = se(1.0, 1.0);
        let noise = NoiseModel::homoskedastic(1e-3).unwrap();
        let x = Matrix::zeros(0, 2);
        assert!(regularized_diag_block(&k, &noise, &x).is_err());
    }

    #[test]
    fn ou_grid_diag_block_matches_oracle() {
        let k = KernelSpec::new(KernelFamily::OrnsteinUhlenbeck, 1.0, 1.0).unwrap();
        let noise = NoiseModel::homoskedastic(0.1).unwrap();
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let b = regularized_diag_block(&k, &noise, &x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = (i as f64 - j as f64).abs();
                let oracle = (-d).exp() + if i == j { 0.1 } else { 0.0 };
                assert!((b[(i, j)] - oracle).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let k = se(1.0, 1.0);
        let a = Matrix::zeros(2, 1);
        let b = Matrix::zeros(2, 2);
        assert!(matches!(
            kernel_block(&k, &a, &b),
            Err(AcgpError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn invalid_hyperparameters() {
        assert!(KernelSpec::new(KernelFamily::Matern52, 0.0, 1.0).is_err());
        assert!(KernelSpec::new(KernelFamily::Matern52, 1.0, -1.0).is_err());
        assert!(NoiseModel::homoskedastic(0.0).is_err());
        assert!(NoiseModel::heteroskedastic(|_| 1.0, 0.0).is_err());
    }

    #[test]
    fn heteroskedastic_floor_enforced() {
        let noise = NoiseModel::heteroskedastic(|x: &[f64]| 0.1 + x[0].abs(), 0.1).unwrap();
        assert_eq!(noise.floor(), 0.1);
        assert!((noise.variance_at(&[2.0]) - 2.1).abs() < 1e-15);
        let bad = NoiseModel::heteroskedastic(|_| 0.05, 0.1).unwrap();
        assert!(bad.checked_variance_at(&[0.0]).is_err());
    }

    #[test]
    fn family_parsing() {
        for f in KernelFamily::ALL {
            assert_eq!(f.name().parse::<KernelFamily>().unwrap(), f);
        }
        assert!("poly".parse::<KernelFamily>().is_err());
    }
}
