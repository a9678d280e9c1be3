mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use acgp::{
    acgp_run, lml_curve, predict, ExactModel, Kernel, KernelFamily, KernelSpec, Matrix, MeanModel,
    NoiseModel, StopConfig,
};
use common::{close, random_instance, rel_err, rng};
use rand::Rng;

#[test]
fn stopping_disabled_reproduces_exact_lml_and_factor() {
    let mut r = rng(11);
    for case in 0..24 {
        let family = KernelFamily::ALL[case % 4];
        let n = r.random_range(2..=300);
        let inst = random_instance(&mut r, n, family);
        let block = r.random_range(2..=80);
        let res = acgp_run(
            &inst.kernel,
            &inst.mean,
            &inst.noise,
            &inst.x,
            &inst.y,
            &StopConfig::exact(block),
        )
        .unwrap();
        let exact = inst.exact();
        assert!(!res.stopped);
        assert_eq!(res.processed(), n);
        assert!(
            rel_err(res.estimate, exact.lml()) < 1e-8,
            "case {case}: {} vs {}",
            res.estimate,
            exact.lml()
        );

        let l = res.factor().to_matrix();
        let llt = l.matmul(&l.transpose()).unwrap();
        let mut k = acgp::kernel::kernel_block(&inst.kernel, &inst.x, &inst.x).unwrap();
        for i in 0..n {
            k[(i, i)] += inst.noise.variance_at(inst.x.row(i));
        }
        let kmax = k.max_abs();
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (llt[(i, j)] - k[(i, j)]).abs() <= 1e-10 * kmax,
                    "case {case} entry ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn squared_diagonal_is_sequential_predictive_variance() {
    let mut r = rng(12);
    for case in 0..8 {
        let n = r.random_range(2..=64);
        let inst = random_instance(&mut r, n, KernelFamily::ALL[case % 4]);
        let res = acgp_run(
            &inst.kernel,
            &inst.mean,
            &inst.noise,
            &inst.x,
            &inst.y,
            &StopConfig::exact(7),
        )
        .unwrap();
        let exact = inst.exact();
        let l = res.factor();
        let mut logdet = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            let var = exact.sequential_variance(i).unwrap();
            let err = exact.sequential_residual(i).unwrap();
            assert!(
                rel_err(l.get(i, i) * l.get(i, i), var) < 1e-8,
                "case {case} point {i}"
            );
            logdet += var.ln();
            quad += err * err / var;
        }
        assert!(
            close(res.logdet, logdet, 1e-8),
            "{} vs {logdet}",
            res.logdet
        );
        assert!(close(res.quad, quad, 1e-8), "{} vs {quad}", res.quad);
    }
}

#[test]
fn lml_curve_matches_exact_prefixes() {
    let mut r = rng(13);
    let inst = random_instance(&mut r, 150, KernelFamily::Matern32);
    let curve = lml_curve(&inst.kernel, &inst.mean, &inst.noise, &inst.x, &inst.y).unwrap();
    let exact = inst.exact();
    assert_eq!(curve.len(), 150);
    for (i, v) in curve.iter().enumerate() {
        assert!(close(*v, exact.prefix_lml(i + 1), 1e-9), "prefix {}", i + 1);
    }
}

#[test]
fn prediction_matches_exact_model_on_processed_prefix() {
    let mut r = rng(14);
    let inst = random_instance(&mut r, 120, KernelFamily::SquaredExponential);
    let (xs, _) = common::random_data(&mut r, 9, inst.x.ncols());
    let cfg = StopConfig::exact(16).with_max_n(80);
    let res = acgp_run(
        &inst.kernel,
        &inst.mean,
        &inst.noise,
        &inst.x,
        &inst.y,
        &cfg,
    )
    .unwrap();
    assert_eq!(res.processed(), 80);
    let (mu, var) = predict(&res, &inst.kernel, &inst.mean, &inst.noise, &inst.x, &xs).unwrap();
    let prefix = ExactModel::fit(
        inst.kernel,
        inst.mean,
        inst.noise.clone(),
        &inst.x.row_range(0, 80),
        &inst.y[..80],
    )
    .unwrap();
    let (emu, evar) = prefix.predict(&xs).unwrap();
    for i in 0..xs.nrows() {
        assert!(close(mu[i], emu[i], 1e-9));
        assert!(close(var[i], evar[i], 1e-9));
    }
}

#[test]
fn heteroskedastic_noise_matches_exact() {
    let mut r = rng(15);
    let (x, y) = common::random_data(&mut r, 90, 2);
    let kernel = KernelSpec::new(KernelFamily::Matern52, 1.3, 0.8).unwrap();
    let noise = NoiseModel::heteroskedastic(|x: &[f64]| 0.05 + 0.1 * x[0].abs(), 0.05).unwrap();
    let res = acgp_run(
        &kernel,
        &MeanModel::Zero,
        &noise,
        &x,
        &y,
        &StopConfig::exact(10),
    )
    .unwrap();
    let exact = ExactModel::fit(kernel, MeanModel::Zero, noise, &x, &y).unwrap();
    assert!(rel_err(res.estimate, exact.lml()) < 1e-10);
}

#[test]
fn max_n_factor_is_leading_block_of_full_factor() {
    let mut r = rng(16);
    let inst = random_instance(&mut r, 100, KernelFamily::OrnsteinUhlenbeck);
    let res = acgp_run(
        &inst.kernel,
        &inst.mean,
        &inst.noise,
        &inst.x,
        &inst.y,
        &StopConfig::exact(9).with_max_n(47),
    )
    .unwrap();
    let exact = inst.exact();
    assert_eq!(res.processed(), 47);
    for i in 0..47 {
        for j in 0..=i {
            assert!((res.factor().get(i, j) - exact.cholesky()[(i, j)]).abs() < 1e-10);
        }
        assert!((res.alpha()[i] - exact.alpha()[i]).abs() < 1e-9);
    }
    assert!(close(res.estimate, exact.prefix_lml(47), 1e-10));
}

/// Inputs hold their own row index in the first coordinate, so the spy can
/// see which rows the decomposition touched.
struct Spy {
    inner: KernelSpec,
    max_row: AtomicUsize,
    calls: AtomicUsize,
}

impl Kernel for Spy {
    fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        let hi = x[0].max(z[0]) as usize;
        self.max_row.fetch_max(hi, Ordering::Relaxed);
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.eval(&x[1..], &z[1..])
    }
}

#[test]
fn stopped_run_only_touches_rows_before_the_checked_block_end() {
    let mut r = rng(17);
    let n = 4000;
    let data: Vec<f64> = (0..n)
        .flat_map(|i| [i as f64, 3.0 * common::normal(&mut r)])
        .collect();
    let x = Matrix::from_vec(n, 2, data).unwrap();
    let y: Vec<f64> = (0..n)
        .map(|i| (x[(i, 1)]).sin() + 0.2 * common::normal(&mut r))
        .collect();
    let spy = Spy {
        inner: KernelSpec::new(KernelFamily::SquaredExponential, 1.0, 1.0).unwrap(),
        max_row: AtomicUsize::new(0),
        calls: AtomicUsize::new(0),
    };
    let noise = NoiseModel::homoskedastic(0.04).unwrap();
    let res = acgp_run(
        &spy,
        &MeanModel::Zero,
        &noise,
        &x,
        &y,
        &StopConfig::new(0.1, 128),
    )
    .unwrap();
    assert!(res.stopped, "expected an early stop");
    let t = res.trace.last().unwrap().report.t;
    assert!(t < n);
    assert!(spy.max_row.load(Ordering::Relaxed) < t);
    // full rows of the lower triangle up to t, never the N² matrix
    assert!(spy.calls.load(Ordering::Relaxed) <= t * t);
}

#[test]
fn constant_mean_shift_is_equivalent_to_centering() {
    let mut r = rng(18);
    let inst = random_instance(&mut r, 60, KernelFamily::Matern32);
    let shifted: Vec<f64> = inst.y.iter().map(|v| v + 2.5).collect();
    let a = acgp_run(
        &inst.kernel,
        &MeanModel::Zero,
        &inst.noise,
        &inst.x,
        &inst.y,
        &StopConfig::exact(8),
    )
    .unwrap();
    let b = acgp_run(
        &inst.kernel,
        &MeanModel::Constant(2.5),
        &inst.noise,
        &inst.x,
        &shifted,
        &StopConfig::exact(8),
    )
    .unwrap();
    assert!(close(a.estimate, b.estimate, 1e-12));
}
