//! Shared fixtures for the criterion benchmarks.

use greyplace_core::classifier::LabeledMatrix;
use greyplace_core::objective::Placement;
use greyplace_core::scenarios;
use greyplace_core::simulator::Simulator;

/// T1 at ε = 1 (49 locations) with default settings.
pub fn t1_coarse() -> Simulator {
    scenarios::t1_simulator(1.0).expect("bundled scenario")
}

/// A spread-out placement of `d` sensors on `l` locations.
pub fn spread_placement(d: usize, l: usize) -> Placement {
    let idx: Vec<usize> = (0..d).map(|k| k * l / d).collect();
    Placement::new(idx, l).expect("valid placement")
}

/// Simulated training matrix for `d` spread sensors on T1.
pub fn t1_matrix(d: usize, seed: u64) -> LabeledMatrix {
    let sim = t1_coarse();
    let p = spread_placement(d, sim.grid().len());
    let ds = sim.generate_dataset(p.indices(), seed).expect("simulation");
    LabeledMatrix::from_dataset(&ds)
}
