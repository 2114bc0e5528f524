//! Reference geometries and scenes used by the tests, benches and CLI.

use crate::error::Result;
use crate::grids::{AcquisitionGeometry, Pixel, RadarParams, SceneGrid, Trajectory, VelocityGrid};
use crate::scenegen::{ExtendedTarget, GroundTruthScene, PointTarget};

/// Circular orbit of radius 11 km at 6.5 km altitude, 262.5 s aperture.
pub fn orbit() -> Trajectory {
    Trajectory::circular([11_000.0, 11_000.0], 11_000.0, 6_500.0, 262.5).expect("valid orbit")
}

/// 15 x 15 pixels, 7 x 7 velocities over [-18, 18] m/s, 128 x 64 samples.
///
/// With 64 x 32 samples the approximate gradient leaves crosstalk of about
/// `sqrt(K / 2P)` of the mover amplitude in every cell, which at
/// `lambda = 0.2` survives thresholding as scattered false alarms even at
/// high SNR. Four times the samples halves that floor.
pub fn desk_geometry() -> AcquisitionGeometry {
    desk_geometry_with(DESK_N_SLOW, DESK_N_FREQ)
}

pub const DESK_N_SLOW: usize = 128;
pub const DESK_N_FREQ: usize = 64;

/// [`desk_geometry`] with a different sampling.
pub fn desk_geometry_with(n_slow: usize, n_freq: usize) -> AcquisitionGeometry {
    AcquisitionGeometry::new(
        SceneGrid::new(DESK_EXTENT, DESK_EXTENT, 15, 15).expect("grid"),
        VelocityGrid::new([-18.0, -18.0], [18.0, 18.0], 7, 7).expect("velocities"),
        orbit(),
        RadarParams::new(9.45e9, 50e6, n_freq).expect("radar"),
        n_slow,
    )
    .expect("desk geometry")
}

pub const DESK_EXTENT: f64 = 100.0;

/// 31 x 31 pixels over 100 m, 21 x 21 velocities over [-20, 20] m/s,
/// 512 x 100 samples.
pub fn full_geometry() -> AcquisitionGeometry {
    AcquisitionGeometry::new(
        SceneGrid::new(100.0, 100.0, 31, 31).expect("grid"),
        VelocityGrid::new([-20.0, -20.0], [20.0, 20.0], 21, 21).expect("velocities"),
        orbit(),
        RadarParams::new(9.45e9, 50e6, 100).expect("radar"),
        512,
    )
    .expect("full geometry")
}

/// 9 x 9 pixels, 5 x 5 velocities, 64 x 32 samples.
pub fn toy_geometry() -> AcquisitionGeometry {
    AcquisitionGeometry::new(
        SceneGrid::new(TOY_EXTENT, TOY_EXTENT, 9, 9).expect("grid"),
        VelocityGrid::new([-12.0, -12.0], [12.0, 12.0], 5, 5).expect("velocities"),
        orbit(),
        RadarParams::new(9.45e9, 50e6, 32).expect("radar"),
        64,
    )
    .expect("toy geometry")
}

pub const TOY_EXTENT: f64 = 40.0;

/// Two stationary points, a 2 x 2 stationary block, and two movers.
pub fn toy_scene(geometry: &AcquisitionGeometry) -> Result<GroundTruthScene> {
    let _ = geometry;
    Ok(GroundTruthScene {
        point_targets: vec![
            PointTarget::new(Pixel::new(1, 1), [0.0, 0.0], 1.0),
            PointTarget::new(Pixel::new(7, 2), [0.0, 0.0], 0.8),
            PointTarget::new(Pixel::new(2, 6), [6.0, -6.0], 1.0),
            PointTarget::new(Pixel::new(5, 3), [-12.0, 6.0], 0.9),
        ],
        extended_targets: vec![ExtendedTarget::new(Pixel::new(5, 6), 2, 2, 0.7)],
        clutter: None,
        seed: 0,
    })
}
