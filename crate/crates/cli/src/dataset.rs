//! Dataset ingestion and synthetic generators.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use acgp::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing value in row {row}, column '{column}'")]
    Missing { row: usize, column: String },
    #[error("non-numeric value '{value}' in row {row}, column '{column}'")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("unknown target column '{0}'")]
    UnknownColumn(String),
    #[error("dataset has no rows")]
    Empty,
    #[error("dataset needs at least one input column besides the target")]
    NoInputs,
    #[error("split fraction must lie in (0, 1), got {0}")]
    InvalidSplit(f64),
    #[error("unknown synthetic dataset kind '{0}' (expected fig1, fig-visualization or iid)")]
    UnknownKind(String),
    #[error("dataset size must be at least 1")]
    ZeroSize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub shuffle_seed: u64,
    pub standardized: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows reordered by a seeded permutation.
    pub fn shuffled(&self, seed: u64) -> Dataset {
        let idx = permutation(self.len(), seed);
        Dataset {
            name: self.name.clone(),
            x: self.x.select_rows(&idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            shuffle_seed: seed,
            standardized: self.standardized,
        }
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        self.slice(0, n.min(self.len()))
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            name: self.name.clone(),
            x: self.x.row_range(start, end),
            y: self.y[start..end].to_vec(),
            shuffle_seed: self.shuffle_seed,
            standardized: self.standardized,
        }
    }

    /// Writes the inputs as `x0..x{p-1}` followed by `y`.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            row.push(self.y[i].to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Target column by header name or 0-based index.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

/// Per-column mean and population standard deviation; constant columns
/// keep a scale of one.
fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Reads a numeric CSV with a header, shuffles the rows by `seed`, puts the
/// first `split` fraction into the training set and standardizes inputs and
/// targets of both sets by the training statistics.
pub fn load_csv(
    path: &Path,
    target: &TargetColumn,
    split: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(split > 0.0 && split < 1.0) {
        return Err(DataError::InvalidSplit(split));
    }
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_idx = match target {
        TargetColumn::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::UnknownColumn(name.clone()))?,
        TargetColumn::Index(i) if *i < header.len() => *i,
        TargetColumn::Index(i) => return Err(DataError::UnknownColumn(i.to_string())),
    };
    if header.len() < 2 {
        return Err(DataError::NoInputs);
    }

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        for (col, field) in rec.iter().enumerate() {
            let column = header.get(col).cloned().unwrap_or_else(|| col.to_string());
            if field.is_empty()
                || field.eq_ignore_ascii_case("na")
                || field.eq_ignore_ascii_case("nan")
            {
                return Err(DataError::Missing { row, column });
            }
            let v: f64 = field.parse().map_err(|_| DataError::NonNumeric {
                row,
                column: column.clone(),
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonNumeric {
                    row,
                    column,
                    value: field.to_string(),
                });
            }
            if col == target_idx {
                targets.push(v);
            } else {
                inputs.push(v);
            }
        }
    }
    let n = targets.len();
    if n == 0 {
        return Err(DataError::Empty);
    }
    let p = header.len() - 1;
    let x = Matrix::from_vec(n, p, inputs).expect("CSV reader enforces equal row lengths");

    let idx = permutation(n, seed);
    let n_train = ((split * n as f64).round() as usize).clamp(1, n);
    let (train_idx, test_idx) = idx.split_at(n_train);
    let mut x_train = x.select_rows(train_idx);
    let mut x_test = x.select_rows(test_idx);
    let mut y_train: Vec<f64> = train_idx.iter().map(|&i| targets[i]).collect();
    let mut y_test: Vec<f64> = test_idx.iter().map(|&i| targets[i]).collect();

    for j in 0..p {
        let (mean, sd) = moments((0..n_train).map(|i| x_train[(i, j)]));
        for i in 0..x_train.nrows() {
            x_train[(i, j)] = (x_train[(i, j)] - mean) / sd;
        }
        for i in 0..x_test.nrows() {
            x_test[(i, j)] = (x_test[(i, j)] - mean) / sd;
        }
    }
    let (mean, sd) = moments(y_train.iter().copied());
    for v in y_train.iter_mut().chain(y_test.iter_mut()) {
        *v = (*v - mean) / sd;
    }

    let stem = path
        .file_stem()
        .map_or("data".into(), |s| s.to_string_lossy().into_owned());
    let make = |suffix: &str, x: Matrix, y: Vec<f64>| Dataset {
        name: format!("{stem}-{suffix}"),
        x,
        y,
        shuffle_seed: seed,
        standardized: true,
    };
    Ok((
        make("train", x_train, y_train),
        make("test", x_test, y_test),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Inputs `N(0, 100)`, targets with mean `-2.5` and variance `25`.
    Fig1,
    /// Inputs `5 N(0, 1)`, periodic function with linear trend plus noise of
    /// variance `2.25`.
    Visualization,
    /// One-dimensional i.i.d. inputs `N(0, 1)` with `sin(2x)` plus noise of
    /// variance `0.01`.
    Iid,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Fig1 => "fig1",
            SyntheticKind::Visualization => "fig-visualization",
            SyntheticKind::Iid => "iid",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1" => Ok(SyntheticKind::Fig1),
            "fig-visualization" | "visualization" => Ok(SyntheticKind::Visualization),
            "iid" => Ok(SyntheticKind::Iid),
            other => Err(DataError::UnknownKind(other.to_string())),
        }
    }
}

pub const VISUALIZATION_NOISE: f64 = 2.25;

/// Noiseless target of the visualization dataset.
pub fn periodic_trend(x: f64) -> f64 {
    2.0 * (2.0 * PI * x / 5.0).sin() + 0.5 * x
}

/// Noiseless target of the fig1 dataset. `sqrt(2) sin(x/2)` has unit
/// variance for inputs with standard deviation 10.
pub fn fig1_signal(x: f64) -> f64 {
    2f64.sqrt() * (0.5 * x).sin()
}

/// Seeded synthetic dataset.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, seed: u64) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::ZeroSize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = match kind {
            SyntheticKind::Fig1 => {
                let x = 10.0 * normal();
                let latent = 0.99f64.sqrt() * fig1_signal(x) + 0.1 * normal();
                (x, -2.5 + 5.0 * latent)
            }
            SyntheticKind::Visualization => {
                let x = 5.0 * normal();
                (x, periodic_trend(x) + VISUALIZATION_NOISE.sqrt() * normal())
            }
            SyntheticKind::Iid => {
                let x = normal();
                (x, (2.0 * x).sin() + 0.1 * normal())
            }
        };
        xs.push(x);
        ys.push(y);
    }
    Ok(Dataset {
        name: kind.name().to_string(),
        x: Matrix::column(&xs),
        y: ys,
        shuffle_seed: seed,
        standardized: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_dataset() {
        for kind in [
            SyntheticKind::Fig1,
            SyntheticKind::Visualization,
            SyntheticKind::Iid,
        ] {
            let d = gen_synthetic(kind, 1, 3).unwrap();
            assert_eq!(d.len(), 1);
            assert_eq!(d.dim(), 1);
        }
        assert!(matches!(
            gen_synthetic(SyntheticKind::Iid, 0, 3),
            Err(DataError::ZeroSize)
        ));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in [
            SyntheticKind::Fig1,
            SyntheticKind::Visualization,
            SyntheticKind::Iid,
        ] {
            assert_eq!(kind.name().parse::<SyntheticKind>().unwrap(), kind);
        }
        assert!("sine".parse::<SyntheticKind>().is_err());
    }

    #[test]
    fn target_column_parsing() {
        assert_eq!("3".parse::<TargetColumn>().unwrap(), TargetColumn::Index(3));
        assert_eq!(
            "y".parse::<TargetColumn>().unwrap(),
            TargetColumn::Name("y".into())
        );
    }

    #[test]
    fn shuffle_is_a_seeded_permutation() {
        let d = gen_synthetic(SyntheticKind::Iid, 50, 1).unwrap();
        let a = d.shuffled(9);
        assert_eq!(a, d.shuffled(9));
        let mut ys = a.y.clone();
        ys.sort_by(f64::total_cmp);
        let mut orig = d.y.clone();
        orig.sort_by(f64::total_cmp);
        assert_eq!(ys, orig);
    }
}
