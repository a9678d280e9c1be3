use std::io::Write;

use acgp_cli::dataset::{fig1_signal, periodic_trend, VISUALIZATION_NOISE};
use acgp_cli::{gen_synthetic, load_csv, DataError, SyntheticKind, TargetColumn};

fn write_tmp(content: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
    f.write_all(content.as_bytes()).unwrap();
    f
}

const TOY: &str = "a,b,y\n1,10,0.5\n2,20,1.5\n3,30,2.5\n4,45,3.0\n5,50,4.5\n6,61,5.5\n";

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
}

#[test]
fn toy_csv_splits_two_thirds() {
    let f = write_tmp(TOY);
    let (train, test) = load_csv(f.path(), &TargetColumn::Name("y".into()), 2.0 / 3.0, 5).unwrap();
    assert_eq!(train.len(), 4);
    assert_eq!(test.len(), 2);
    assert_eq!(train.dim(), 2);
    assert!(train.standardized);
}

#[test]
fn same_seed_gives_identical_split() {
    let f = write_tmp(TOY);
    let a = load_csv(f.path(), &TargetColumn::Index(2), 2.0 / 3.0, 7).unwrap();
    let b = load_csv(f.path(), &TargetColumn::Index(2), 2.0 / 3.0, 7).unwrap();
    assert_eq!(a, b);
}

#[test]
fn training_split_is_standardized() {
    let mut text = String::from("u,v,w,target\n");
    for i in 0..300 {
        let t = i as f64;
        text += &format!(
            "{},{},{},{}\n",
            t * 0.37 + 4.0,
            (t * 1.3).sin() * 50.0,
            7.0 - t * t * 1e-3,
            t * 2.0 - 11.0
        );
    }
    let f = write_tmp(&text);
    let (train, test) =
        load_csv(f.path(), &TargetColumn::Name("target".into()), 2.0 / 3.0, 3).unwrap();
    assert_eq!(train.len() + test.len(), 300);
    for j in 0..train.dim() {
        let col: Vec<f64> = (0..train.len()).map(|i| train.x[(i, j)]).collect();
        let (m, v) = mean_var(&col);
        assert!(
            m.abs() < 1e-6 && (v - 1.0).abs() < 1e-6,
            "column {j}: mean {m}, var {v}"
        );
    }
    let (m, v) = mean_var(&train.y);
    assert!(m.abs() < 1e-6 && (v - 1.0).abs() < 1e-6);
}

#[test]
fn missing_value_is_rejected_with_row_index() {
    let f = write_tmp("a,y\n1,2\n3,\n5,6\n");
    match load_csv(f.path(), &TargetColumn::Name("y".into()), 0.5, 0) {
        Err(DataError::Missing { row, column }) => assert_eq!((row, column.as_str()), (1, "y")),
        other => panic!("unexpected {other:?}"),
    }
    let f = write_tmp("a,y\n1,2\nNA,4\n");
    assert!(matches!(
        load_csv(f.path(), &TargetColumn::Name("y".into()), 0.5, 0),
        Err(DataError::Missing { row: 1, .. })
    ));
}

#[test]
fn non_numeric_value_is_rejected() {
    let f = write_tmp("a,y\n1,2\nthree,4\n");
    match load_csv(f.path(), &TargetColumn::Name("y".into()), 0.5, 0) {
        Err(DataError::NonNumeric { row, value, .. }) => {
            assert_eq!((row, value.as_str()), (1, "three"))
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn bad_arguments_are_rejected() {
    let f = write_tmp(TOY);
    assert!(matches!(
        load_csv(f.path(), &TargetColumn::Name("z".into()), 0.5, 0),
        Err(DataError::UnknownColumn(_))
    ));
    assert!(matches!(
        load_csv(f.path(), &TargetColumn::Index(2), 1.0, 0),
        Err(DataError::InvalidSplit(_))
    ));
    let f = write_tmp("a,y\n");
    assert!(matches!(
        load_csv(f.path(), &TargetColumn::Index(1), 0.5, 0),
        Err(DataError::Empty)
    ));
}

#[test]
fn fig1_inputs_have_variance_100() {
    let d = gen_synthetic(SyntheticKind::Fig1, 10_000, 1).unwrap();
    let (_, vx) = mean_var(d.x.as_slice());
    assert!((vx - 100.0).abs() <= 5.0, "input variance {vx}");
    let (my, vy) = mean_var(&d.y);
    assert!((my + 2.5).abs() < 0.25, "target mean {my}");
    assert!((vy - 25.0).abs() < 2.5, "target variance {vy}");
    // signal has unit variance under the input distribution
    let s: Vec<f64> = d.x.as_slice().iter().map(|&x| fig1_signal(x)).collect();
    assert!((mean_var(&s).1 - 1.0).abs() < 0.05);
}

#[test]
fn visualization_residual_variance() {
    let d = gen_synthetic(SyntheticKind::Visualization, 5000, 2).unwrap();
    let res: Vec<f64> = (0..d.len())
        .map(|i| d.y[i] - periodic_trend(d.x[(i, 0)]))
        .collect();
    let (_, v) = mean_var(&res);
    assert!(
        (v - VISUALIZATION_NOISE).abs() <= 0.1 * VISUALIZATION_NOISE,
        "residual variance {v}"
    );
    let (_, vx) = mean_var(d.x.as_slice());
    assert!((vx - 25.0).abs() < 2.5);
}

#[test]
fn generators_are_deterministic() {
    for kind in [
        SyntheticKind::Fig1,
        SyntheticKind::Visualization,
        SyntheticKind::Iid,
    ] {
        assert_eq!(
            gen_synthetic(kind, 100, 4).unwrap(),
            gen_synthetic(kind, 100, 4).unwrap()
        );
        assert_ne!(
            gen_synthetic(kind, 100, 4).unwrap().y,
            gen_synthetic(kind, 100, 5).unwrap().y
        );
    }
}
