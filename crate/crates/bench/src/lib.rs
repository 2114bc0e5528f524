//! Shared fixtures for the criterion benches.

use psr_gmti::forward::{LiftedOperator, Measurements};
use psr_gmti::grids::AcquisitionGeometry;
use psr_gmti::instances::toy_scene;
use psr_gmti::psr::build_psr;

/// Operator on `geometry` and noiseless data of the toy scene.
pub fn toy_data(geometry: AcquisitionGeometry) -> (LiftedOperator, Measurements) {
    let truth = build_psr(&toy_scene(&geometry).expect("scene"), &geometry)
        .expect("psr")
        .total();
    let op = LiftedOperator::new(geometry);
    let d = op.forward(truth.values()).expect("forward");
    (op, d)
}
