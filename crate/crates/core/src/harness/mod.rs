//! Experiment harness: configuration, matrix execution and reporting.

pub mod config;
pub mod matrix;
pub mod report;

pub use config::{ExperimentConfig, Mode, SEED_ENV};
pub use matrix::{build_scenarios, cells, run_cell, run_matrix, Cell, CellSummary, MatrixOutcome, Scenario};
pub use report::{convergence_analysis, heatmap, load_cells, profile_snapshot, summarize, Convergence, Raster, SummaryRow};
