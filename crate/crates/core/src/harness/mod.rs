//! Synthetic multi-domain tasks, experiment orchestration and reporting.

mod config;
mod experiment;
mod io;
mod plot;
mod results;
mod suite;

pub use config::{ExperimentConfig, SuiteConfig, OUT_DIR_ENV};
pub use experiment::{
    run_experiment, run_single, train_and_select, write_outcome, CkaReport, DomainMetrics, ExperimentOutcome, RunFailure, RunResult,
    Selection, SharpnessReport, StepSummary,
};
pub use io::write_atomic;
pub use plot::{domains_with_tag, emit_scatter_plot, scatter_data, ScatterPlot, ScatterPoint, Trend};
pub use results::{
    aggregate, domain_correlations, emit_results, sharpness_correlations, Column, ResultsTable, TableFormat, TableMetric,
    TableRow,
};
pub use suite::{make_domain_suite, Domain, DomainSuite, DomainTag, Shift, SuiteParams, NUM_CLASSES};
