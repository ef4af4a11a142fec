//! Error-rate sweeps, detection timing and the result audit.

mod audit;
mod config;
mod record;
mod sweep;
mod timing;

pub use audit::{audit, AuditReport};
pub use config::{
    default_configs, desk, paper_full, AutoencoderSettings, Axis, BaselineSettings, PointConfig, SampleCounts,
    Scheme, SignalConfig, SweepAxis, SweepSpec, SPEC_VERSION,
};
pub use record::{
    decisions_path, load_decisions, load_records, read_decisions, read_records, save_decisions, save_records,
    summarize, write_decisions, write_records, DecisionEntry, RecordKey, Summary, SweepRecord, CSV_SCHEMA_VERSION,
};
pub use sweep::{
    configure_threads, evaluate_scheme, measure_samples, run_sweep, score_blocks, thread_cap, PointData,
    SweepOutput, TrainedModel,
};
pub use timing::{time_detection, time_passes};
