//! Shared fixtures for the kernel benchmarks.

use caustica_core::raytrace::{SoundspeedModel, Vec3};

/// Lens model and source used by the flow benchmarks.
pub fn lens_fixture() -> (SoundspeedModel, Vec3) {
    (SoundspeedModel::standard_lens([0.0, -0.3, 2.0]), [0.0, 0.3, 0.0])
}

/// Unit take-off direction toward the lens axis.
pub fn takeoff() -> Vec3 {
    let d: Vec3 = [0.0, -0.3, 2.0];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    [d[0] / n, d[1] / n, d[2] / n]
}
