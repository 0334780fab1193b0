//! Built-in scenarios shipped under `data/`: the T1 suite, the T2 studio and
//! the default 23-activity daily plan.

use crate::error::Result;
use crate::floorplan::{build_grid, FloorPlan};
use crate::simulator::{AdlPlanSpec, Simulator, SimulatorConfig};

pub const T1_TOML: &str = include_str!("../../../data/t1.toml");
pub const T2_TOML: &str = include_str!("../../../data/t2.toml");
pub const ADL_DEFAULT_TOML: &str = include_str!("../../../data/adl_default.toml");

pub fn t1() -> FloorPlan {
    FloorPlan::from_toml_str(T1_TOML, "data/t1.toml").expect("bundled T1 plan is valid")
}

pub fn t2() -> FloorPlan {
    FloorPlan::from_toml_str(T2_TOML, "data/t2.toml").expect("bundled T2 plan is valid")
}

pub fn default_adl_plan() -> AdlPlanSpec {
    AdlPlanSpec::from_toml_str(ADL_DEFAULT_TOML, "data/adl_default.toml").expect("bundled ADL plan is valid")
}

/// Simulator for T1 with the default plan and settings at grid spacing `epsilon`.
pub fn t1_simulator(epsilon: f64) -> Result<Simulator> {
    let plan = t1();
    let grid = build_grid(&plan, epsilon)?;
    Simulator::new(plan, grid, default_adl_plan(), SimulatorConfig::default())
}

pub fn t2_simulator(epsilon: f64) -> Result<Simulator> {
    let plan = t2();
    let grid = build_grid(&plan, epsilon)?;
    Simulator::new(plan, grid, default_adl_plan(), SimulatorConfig::default())
}
