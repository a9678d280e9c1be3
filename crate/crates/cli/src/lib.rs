//! Experiment harness for adaptive Cholesky GP regression: dataset
//! ingestion, synthetic generators, experiment runners and their CSV output.

pub mod dataset;
pub mod experiments;
pub mod records;

pub use dataset::{gen_synthetic, load_csv, DataError, Dataset, SyntheticKind, TargetColumn};
pub use experiments::{
    bench_overhead, fit, linear_trend_ratio, run_bound_sweep, run_lml_curve, run_tune,
    ModelSetting, OverheadRow, SweepConfig,
};
pub use records::{read_records, write_records, ExperimentRecord, RecordError, HEADER};
