//! Synthetic interpolation and extrapolation benchmarks.
//!
//! Datasets are drawn from one sampling domain for training, validation and
//! interpolation testing, and from a shifted domain for extrapolation testing.
//! An autoregressive fully connected network and per-sample AutoODE fits are
//! scored on both test sets.

mod data;
mod eval;
mod fc;
mod spec;

pub use data::{
    generate, read_archive, shift_data_domain, write_archive, MinMax, Sample, SplitResult,
    MAX_RETRIES, SPLIT_NAMES,
};
pub use eval::{
    autoode_forecast, evaluate_split, predict_set, write_predictions_csv, AutoOdeBench, EvalReport,
    Evaluator, FcBench, SamplePrediction, SplitScore,
};
pub use fc::{predict_fc, rmse, train_fc, FcBaseline, BATCH_SIZE, VAL_EVERY};
pub use spec::{
    BenchmarkSpec, Detrend, Normalization, ShiftKind, System, LV_SPECIES, SEIR_POPULATION,
};
