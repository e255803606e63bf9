//! Simulation: data generators and the Monte Carlo harness.

pub mod experiment;
pub mod generators;
pub mod presets;
pub mod rng;

pub use experiment::{
    fit_estimator, run_experiment, simulate_dataset, Dataset, Design, ErrorModel, Estimator,
    ExperimentConfig, ExperimentSummary, FitDraw, SummaryRow, TrueParams,
};
pub use generators::{
    balanced_membership, factor_block_matrix, gaussian_rows, generate_covariates,
    generate_replicates, generate_sar_outcome, generate_sbm,
};
pub use presets::{preset, preset_names};
pub use rng::{stream_rng, SimRng};
