//! Simulation designs, the Monte Carlo and bootstrap evaluation pipelines,
//! and synthetic stand-ins for the real data sets.

pub mod bootstrap;
pub mod pipeline;
pub mod scenario;
pub mod simulate;

pub use bootstrap::{bootstrap_evaluate, synthetic_eye, synthetic_pollution, BootstrapOptions, BootstrapReport, SyntheticData};
pub use pipeline::{evaluate, fit_methods, FitOptions, Method, MethodFits, Metrics, TuningReport};
pub use scenario::{generate_replicate, Covariance, Replicate, Scenario, SCENARIO_NAMES};
pub use simulate::{
    aggregate, delta_grid, delta_sweep, run_replicate, run_table_scenario, write_metric_rows, write_sweep_rows,
    MetricRow, SweepMetric, SweepRow, TableResult,
};
