mod common;

use acgp::hyperopt::{objective, tune, TuneConfig};
use acgp::{ExactModel, KernelFamily, KernelSpec, Matrix, MeanModel, NoiseModel};
use common::{random_data, rng};

fn exact_neg_lml(family: KernelFamily, p: [f64; 3], x: &Matrix, y: &[f64]) -> f64 {
    let kernel = KernelSpec::from_log(family, p[0], p[1]).unwrap();
    let noise = NoiseModel::homoskedastic(p[2].exp()).unwrap();
    -ExactModel::fit(kernel, MeanModel::Zero, noise, x, y)
        .unwrap()
        .lml()
}

#[test]
fn objective_without_stopping_is_exact_negative_lml() {
    let mut r = rng(31);
    let (x, y) = random_data(&mut r, 200, 2);
    let p = [0.2, -0.1, -2.0];
    let (f, m) = objective(&p, KernelFamily::Matern52, &x, &y, 0.0, 64).unwrap();
    assert_eq!(m, 200);
    let want = exact_neg_lml(KernelFamily::Matern52, p, &x, &y);
    assert!((f - want).abs() <= 1e-9 * want.abs());
}

#[test]
fn objective_difference_agrees_with_exact_central_difference() {
    let mut r = rng(32);
    for family in [KernelFamily::SquaredExponential, KernelFamily::Matern32] {
        let (x, y) = random_data(&mut r, 256, 1);
        let p = [0.3, 0.1, -1.5];
        let central = |d: f64| {
            let mut hi = p;
            hi[1] += d;
            let mut lo = p;
            lo[1] -= d;
            (exact_neg_lml(family, hi, &x, &y) - exact_neg_lml(family, lo, &x, &y)) / (2.0 * d)
        };
        let delta = 1e-5;
        let mut hi = p;
        hi[1] += delta;
        let f0 = objective(&p, family, &x, &y, 0.0, 64).unwrap().0;
        let f1 = objective(&hi, family, &x, &y, 0.0, 64).unwrap().0;
        let forward = (f1 - f0) / delta;
        // the exact oracle at two step sizes agrees with itself
        let (c1, c2) = (central(delta), central(1e-4));
        assert!((c1 - c2).abs() <= 1e-4 * c2.abs(), "{c1} vs {c2}");
        assert!(
            (forward - c1).abs() <= 1e-4 * c1.abs(),
            "{family}: {forward} vs {c1}"
        );
    }
}

#[test]
fn scalar_noise_optimum_is_stationary_point() {
    let x = Matrix::from_rows(&[[0.0]]).unwrap();
    let y = [1.5];
    let theta = (-20.0f64).exp();
    let cfg = TuneConfig {
        family: KernelFamily::SquaredExponential,
        exact: true,
        max_restarts: 40,
        free: [false, false, true],
        ..TuneConfig::default()
    };
    let res = tune(&x, &y, [0.0, -20.0, 0.0], &cfg).unwrap();
    let sigma2 = res.params[2].exp();
    assert!(
        ((sigma2 + theta) - y[0] * y[0]).abs() <= 1e-3 * y[0] * y[0],
        "sigma2 = {sigma2}"
    );
    assert_eq!(res.params[0], 0.0);
    assert_eq!(res.params[1], -20.0);
}

#[test]
fn accepted_steps_never_increase_objective_within_a_restart() {
    let mut r = rng(33);
    let (x, y) = random_data(&mut r, 400, 1);
    let cfg = TuneConfig {
        family: KernelFamily::Matern52,
        max_restarts: 3,
        max_steps_per_restart: 15,
        block_size: 64,
        ..TuneConfig::default()
    };
    let res = tune(&x, &y, [1.0, 0.5, 0.0], &cfg).unwrap();
    assert!(res.trajectory.len() > 1);
    for w in res.trajectory.windows(2) {
        if w[0].restart == w[1].restart {
            assert!(
                w[1].objective <= w[0].objective,
                "{} -> {}",
                w[0].objective,
                w[1].objective
            );
        }
    }
    let exact_start = exact_neg_lml(KernelFamily::Matern52, [1.0, 0.5, 0.0], &x, &y);
    let exact_end = exact_neg_lml(KernelFamily::Matern52, res.params, &x, &y);
    assert!(exact_end < exact_start);
}
