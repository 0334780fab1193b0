//! Motion-sensor placement optimization for indoor activity recognition.
//!
//! The pipeline is `floorplan` → `simulator` (or `dataset` for recorded
//! CASAS logs) → `classifier` → `objective`, searched by the strategies in
//! `optimizers`: vanilla Bayesian optimization, distribution-guided Bayesian
//! optimization (DGBO), a genetic algorithm and a greedy sweep. `harness`
//! runs experiment matrices and writes reports.

pub mod acquisition;
pub mod bits;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod floorplan;
pub mod harness;
pub mod objective;
pub mod optimizers;
pub mod scenarios;
pub mod seed;
pub mod simulator;
pub mod surrogate;

pub use error::{Error, Result};
pub use floorplan::{build_grid, ActivationRegion, CandidateGrid, FloorPlan, Point, Segment, Zone};
pub use objective::{BudgetedObjective, Evaluator, Observation, Placement, PriorBudgetMode};
pub use optimizers::{Method, RunReport};
pub use simulator::{AdlPlanSpec, Simulator, SimulatorConfig, TraceDataset};
