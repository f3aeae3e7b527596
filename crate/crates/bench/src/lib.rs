//! Criterion benchmarks for the split-step solver live under `benches/`.

use std::sync::Arc;

use wzlab_core::grid::{ComplexField, SpatialGrid};
use wzlab_core::noise::{build_standard_noise, ModeDescriptor, NoiseModel};
use wzlab_core::InitialData;

/// Default two-mode noise and Gaussian datum on `num_points` nodes over |x| ≤ 16.
pub fn default_setup(num_points: usize) -> (Arc<SpatialGrid>, NoiseModel, ComplexField) {
    let grid = SpatialGrid::new(num_points, 16.0).expect("power of two");
    let model = build_standard_noise(
        &grid,
        &[ModeDescriptor::new(0.5, -1.5, 1.0), ModeDescriptor::new(0.5, 1.5, 1.0)],
        3.0,
    )
    .expect("default modes fit the window");
    let datum = InitialData::default().sample(&grid, 0, 0);
    (grid, model, datum)
}
