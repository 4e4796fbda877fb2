//! Scenario configs, dataset files, the end-to-end pipeline and its reports.

mod config;
mod dataset;
mod pipeline;
mod report;

pub use config::{
    builtin_names, builtin_scenario, CandidateConfig, ConditionConfig, CoverageConfig, DataConfig, ExperimentConfig,
    GridConfig, ModelConfig, ObserveConfig, OrderingConfig, Overrides, PredictionConfig, PropositionConfig, Scenario,
    ScenarioConfig, SequenceConfig, SolverConfig, Stage, TruthConfig, ValidateConfig,
};
pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use pipeline::{load_scenario_data, run_pipeline};
pub use report::{emit_plot_data, PlotRow, Report, SeriesKind, StageFailure, ValidationReport};
