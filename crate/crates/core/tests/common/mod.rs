#![allow(dead_code)]

use acgp::{ExactModel, KernelFamily, KernelSpec, Matrix, MeanModel, NoiseModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Instance {
    pub kernel: KernelSpec,
    pub mean: MeanModel,
    pub noise: NoiseModel,
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Instance {
    pub fn exact(&self) -> ExactModel {
        ExactModel::fit(
            self.kernel.clone(),
            self.mean,
            self.noise.clone(),
            &self.x,
            &self.y,
        )
        .unwrap()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random inputs in `dim` dimensions with targets from a smooth function
/// plus noise.
pub fn random_data(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Matrix, Vec<f64>) {
    let data: Vec<f64> = (0..n * dim).map(|_| 2.0 * normal(rng)).collect();
    let x = Matrix::from_vec(n, dim, data).unwrap();
    let y = (0..n)
        .map(|i| x.row(i).iter().sum::<f64>().sin() + 0.3 * normal(rng))
        .collect();
    (x, y)
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, family: KernelFamily) -> Instance {
    let dim = rng.random_range(1..=3);
    let (x, y) = random_data(rng, n, dim);
    let kernel = KernelSpec::from_log(
        family,
        rng.random_range(-1.0..1.5),
        rng.random_range(-1.0..1.0),
    )
    .unwrap();
    let noise = NoiseModel::homoskedastic(rng.random_range(-4.0f64..0.0).exp()).unwrap();
    let mean = if rng.random_bool(0.3) {
        MeanModel::Constant(rng.random_range(-1.0..1.0))
    } else {
        MeanModel::Zero
    };
    Instance {
        kernel,
        mean,
        noise,
        x,
        y,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
