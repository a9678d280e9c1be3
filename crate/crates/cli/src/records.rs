//! Fixed-schema CSV rows shared by all experiment runners.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a file gives back the exact values. Missing values are empty fields.

use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header {found:?}")]
    Header { found: Vec<String> },
    #[error("row {row}: field '{field}' has invalid value '{value}'")]
    Field {
        row: usize,
        field: &'static str,
        value: String,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    Width {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub const HEADER: [&str; 24] = [
    "experiment",
    "kernel",
    "log_lengthscale",
    "log_amplitude",
    "log_noise",
    "seed",
    "restart",
    "s",
    "t",
    "processed",
    "elapsed_s",
    "ld",
    "ud",
    "lq",
    "uq",
    "lower",
    "upper",
    "exact_logdet",
    "exact_quad",
    "estimate",
    "exact_lml",
    "rmse",
    "rtol",
    "stopped",
];

/// One row of experiment output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub kernel: String,
    pub log_lengthscale: f64,
    pub log_amplitude: f64,
    pub log_noise: f64,
    pub seed: u64,
    pub restart: Option<usize>,
    pub s: Option<usize>,
    pub t: Option<usize>,
    pub processed: usize,
    pub elapsed_s: f64,
    pub ld: Option<f64>,
    pub ud: Option<f64>,
    pub lq: Option<f64>,
    pub uq: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub exact_logdet: Option<f64>,
    pub exact_quad: Option<f64>,
    pub estimate: Option<f64>,
    pub exact_lml: Option<f64>,
    pub rmse: Option<f64>,
    pub rtol: Option<f64>,
    pub stopped: Option<bool>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

impl ExperimentRecord {
    fn fields(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            self.kernel.clone(),
            self.log_lengthscale.to_string(),
            self.log_amplitude.to_string(),
            self.log_noise.to_string(),
            self.seed.to_string(),
            opt(&self.restart),
            opt(&self.s),
            opt(&self.t),
            self.processed.to_string(),
            self.elapsed_s.to_string(),
            opt(&self.ld),
            opt(&self.ud),
            opt(&self.lq),
            opt(&self.uq),
            opt(&self.lower),
            opt(&self.upper),
            opt(&self.exact_logdet),
            opt(&self.exact_quad),
            opt(&self.estimate),
            opt(&self.exact_lml),
            opt(&self.rmse),
            opt(&self.rtol),
            opt(&self.stopped),
        ]
    }

    fn from_fields(row: usize, rec: &csv::StringRecord) -> Result<Self, RecordError> {
        if rec.len() != HEADER.len() {
            return Err(RecordError::Width {
                row,
                expected: HEADER.len(),
                found: rec.len(),
            });
        }
        let get = |i: usize| &rec[i];
        fn parse<T: std::str::FromStr>(row: usize, i: usize, s: &str) -> Result<T, RecordError> {
            s.parse().map_err(|_| RecordError::Field {
                row,
                field: HEADER[i],
                value: s.to_string(),
            })
        }
        fn parse_opt<T: std::str::FromStr>(
            row: usize,
            i: usize,
            s: &str,
        ) -> Result<Option<T>, RecordError> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse(row, i, s).map(Some)
            }
        }
        Ok(Self {
            experiment: get(0).to_string(),
            kernel: get(1).to_string(),
            log_lengthscale: parse(row, 2, get(2))?,
            log_amplitude: parse(row, 3, get(3))?,
            log_noise: parse(row, 4, get(4))?,
            seed: parse(row, 5, get(5))?,
            restart: parse_opt(row, 6, get(6))?,
            s: parse_opt(row, 7, get(7))?,
            t: parse_opt(row, 8, get(8))?,
            processed: parse(row, 9, get(9))?,
            elapsed_s: parse(row, 10, get(10))?,
            ld: parse_opt(row, 11, get(11))?,
            ud: parse_opt(row, 12, get(12))?,
            lq: parse_opt(row, 13, get(13))?,
            uq: parse_opt(row, 14, get(14))?,
            lower: parse_opt(row, 15, get(15))?,
            upper: parse_opt(row, 16, get(16))?,
            exact_logdet: parse_opt(row, 17, get(17))?,
            exact_quad: parse_opt(row, 18, get(18))?,
            estimate: parse_opt(row, 19, get(19))?,
            exact_lml: parse_opt(row, 20, get(20))?,
            rmse: parse_opt(row, 21, get(21))?,
            rtol: parse_opt(row, 22, get(22))?,
            stopped: parse_opt(row, 23, get(23))?,
        })
    }
}

pub fn write_records<W: Write>(out: W, records: &[ExperimentRecord]) -> Result<(), RecordError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a result file and checks it against the fixed header.
pub fn read_records<R: Read>(input: R) -> Result<Vec<ExperimentRecord>, RecordError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(RecordError::Header { found: header });
    }
    reader
        .records()
        .enumerate()
        .map(|(row, rec)| ExperimentRecord::from_fields(row, &rec?))
        .collect()
}

pub fn write_records_to_path(path: &Path, records: &[ExperimentRecord]) -> Result<(), RecordError> {
    write_records(std::fs::File::create(path)?, records)
}

pub fn read_records_from_path(path: &Path) -> Result<Vec<ExperimentRecord>, RecordError> {
    read_records(std::fs::File::open(path)?)
}
