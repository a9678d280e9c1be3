use std::path::Path;
use std::process::Command;

use acgp::hyperopt::TuneConfig;
use acgp::{ExactModel, KernelFamily, KernelSpec, MeanModel, NoiseModel, StopConfig};
use acgp_cli::experiments::rmse;
use acgp_cli::records::read_records_from_path;
use acgp_cli::{
    fit, gen_synthetic, run_bound_sweep, run_lml_curve, run_tune, ModelSetting, SweepConfig,
    SyntheticKind,
};

#[test]
fn bound_sweep_rows_and_collapse() {
    let data = gen_synthetic(SyntheticKind::Iid, 300, 3).unwrap();
    let cfg = SweepConfig {
        log_lengthscales: vec![-1.0, 0.0, 1.0],
        block_size: 64,
        seeds: vec![1, 2],
        ..SweepConfig::default()
    };
    let rows = run_bound_sweep(&data, &cfg).unwrap();
    // blocks 64..128, ..., 256..300 checked plus the collapsed row
    let per_config = 4 + 1;
    assert_eq!(rows.len(), 2 * 3 * 2 * per_config);
    for chunk in rows.chunks(per_config) {
        let last = chunk.last().unwrap();
        assert_eq!(last.s, Some(300));
        assert_eq!(last.ld, last.exact_logdet);
        assert_eq!(last.ud, last.exact_logdet);
        assert_eq!(last.lq, last.exact_quad);
        assert_eq!(last.uq, last.exact_quad);
        assert!(chunk.iter().all(|r| r.exact_logdet == last.exact_logdet));
    }
    let capped = run_bound_sweep(
        &data,
        &SweepConfig {
            max_n: Some(200),
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(capped.len(), 2 * 3 * 2 * 3);
}

#[test]
fn lml_curve_has_one_row_per_point() {
    let data = gen_synthetic(SyntheticKind::Fig1, 120, 1).unwrap();
    let setting = ModelSetting {
        kernel: KernelSpec::new(KernelFamily::SquaredExponential, 1.0, 1.0).unwrap(),
        sigma2: 0.5,
    };
    let rows = run_lml_curve(&data, &[setting, setting]).unwrap();
    assert_eq!(rows.len(), 240);
    assert_eq!(rows[119].processed, 120);
    assert_eq!(rows[120].processed, 1);
}

#[test]
fn rmse_through_prediction_matches_exact_model() {
    let data = gen_synthetic(SyntheticKind::Visualization, 450, 5).unwrap();
    let (train, test) = (data.head(300), data.slice(300, 450));
    let setting = ModelSetting {
        kernel: KernelSpec::new(KernelFamily::Matern52, 1.5, 4.0).unwrap(),
        sigma2: 2.25,
    };
    let summary = fit(&train, Some(&test), &setting, &StopConfig::exact(64)).unwrap();
    let exact = ExactModel::fit(
        setting.kernel,
        MeanModel::Zero,
        NoiseModel::homoskedastic(2.25).unwrap(),
        &train.x,
        &train.y,
    )
    .unwrap();
    let (mu, _) = exact.predict(&test.x).unwrap();
    let want = rmse(&mu, &test.y);
    assert!((summary.rmse.unwrap() - want).abs() <= 1e-6 * want);
    assert_eq!(summary.record.exact_lml, Some(summary.result.estimate));
}

#[test]
fn tune_trajectory_is_monotone_within_restarts() {
    let data = gen_synthetic(SyntheticKind::Visualization, 400, 6).unwrap();
    let cfg = TuneConfig {
        family: KernelFamily::Matern52,
        max_restarts: 2,
        max_steps_per_restart: 10,
        block_size: 64,
        ..TuneConfig::default()
    };
    let (res, rows) = run_tune(&data, Some(&data.head(50)), [0.0, 0.0, 0.0], &cfg, 200).unwrap();
    assert_eq!(rows.len(), res.trajectory.len());
    for w in rows.windows(2) {
        if w[0].restart == w[1].restart {
            assert!(w[1].estimate.unwrap() >= w[0].estimate.unwrap());
        }
    }
    assert!(rows.iter().all(|r| r.exact_lml.is_some()));
    assert!(rows.last().unwrap().rmse.is_some());
}

fn run_cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_acgp"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn cli_outputs_parse_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    run_cli(&[
        "gen-data",
        "--kind",
        "fig-visualization",
        "--n",
        "600",
        "--seed",
        "3",
        "--out",
        p(&data),
    ]);

    let commands: Vec<(&str, Vec<&str>)> = vec![
        (
            "sweep",
            vec![
                "bound-sweep",
                "--synthetic",
                "iid",
                "--n",
                "200",
                "--block-size",
                "32",
                "--shuffles",
                "2",
            ],
        ),
        (
            "curve",
            vec![
                "lml-curve",
                "--csv",
                p(&data),
                "--target-col",
                "y",
                "--kernel",
                "ou",
                "--log-lengthscale",
                "-0.5",
            ],
        ),
        (
            "fit",
            vec![
                "fit",
                "--csv",
                p(&data),
                "--kernel",
                "matern32",
                "--rtol",
                "0.2",
                "--block-size",
                "32",
                "--estimator",
                "extrapolation",
                "--max-n",
                "300",
            ],
        ),
        (
            "tune",
            vec![
                "tune",
                "--synthetic",
                "fig-visualization",
                "--n",
                "200",
                "--restarts",
                "1",
                "--steps",
                "3",
                "--block-size",
                "32",
            ],
        ),
    ];
    for (name, args) in commands {
        let mut files = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("{name}-{rep}.csv"));
            let mut full = args.clone();
            full.extend(["--out", p(&out)]);
            run_cli(&full);
            files.push(out);
        }
        let rows = read_records_from_path(&files[0]).unwrap();
        assert!(!rows.is_empty(), "{name}");
        if name != "tune" {
            // timings differ between runs; every other field must match
            let again = read_records_from_path(&files[1]).unwrap();
            assert_eq!(rows.len(), again.len());
            for (a, b) in rows.iter().zip(&again) {
                let (mut a, mut b) = (a.clone(), b.clone());
                a.elapsed_s = 0.0;
                b.elapsed_s = 0.0;
                assert_eq!(a, b, "{name}");
            }
        }
    }
}

#[test]
fn cli_rejects_bad_input() {
    let out = Command::new(env!("CARGO_BIN_EXE_acgp"))
        .args(["fit", "--synthetic", "nope"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_acgp"))
        .args([
            "fit",
            "--synthetic",
            "iid",
            "--n",
            "3000",
            "--memory-cap-mb",
            "1",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("memory cap"));
}
