//! Label-harmonizing training loop.

mod export;
mod run;
mod schedule;

pub use export::{apply_harmonized, harmonized_intervals, HarmonizedInterval};
pub use run::{
    evaluate_samples, labels_digest, predict_samples, prepare_data, tile_records, train,
    EpochLog, EvalSample, PreparedData, TrainLog, TrainOutcome, TrainRunConfig, TrainSample,
};
pub use schedule::{
    curriculum_active_levels, eta, harmonized_target, omega, omega_weights, LabelState, Schedule,
    HISTORY_LEN,
};
