//! Data-generating processes, truth values and the Monte Carlo harness.

mod metrics;
pub mod oracle;
mod record;
mod runner;
mod scenario;

pub use metrics::{metrics, metrics_table, MetricRow};
pub use oracle::{oracle_contrast, OracleValue};
pub use record::{
    read_records, write_long_format, write_metrics, write_records, SimulationRecord, METRIC_HEADER, METRIC_NAMES,
    RECORD_HEADER,
};
pub use runner::{data_stream, run_grid, run_replication, EstimatorConfig, GridSpec, Profile};
pub use scenario::{dgp_sample, true_value, Effect, Method, Scenario, ScenarioId};
