//! Ground moving target imaging with synthetic aperture radar, posed as
//! recovery of a phase-space reflectivity (PSR) matrix.
//!
//! The PSR matrix `Q` has one row per candidate velocity and one column
//! per scene pixel. Stationary scatterers live on the zero-velocity row
//! (`Qs`), movers are sparse entries elsewhere (`Qv`). [`forward`] maps `Q`
//! to stepped-frequency SAR data, [`solvers`] recovers `(Qs, Qv)` from data,
//! and [`harness`] runs whole noise and clutter sweeps.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod formats;
pub mod forward;
pub mod grids;
pub mod harness;
pub mod instances;
pub mod metrics;
pub mod psr;
pub mod scenegen;
pub mod solvers;

pub use error::{Error, Result};
pub use forward::{GradientMode, LiftedOperator, Measurements};
pub use grids::{AcquisitionGeometry, Pixel};
pub use harness::{run_experiment, run_sweep, ExperimentConfig, ExperimentRecord};
pub use psr::{PsrDecomposition, PsrMatrix};
pub use scenegen::GroundTruthScene;
pub use solvers::{RecoveryProblem, RecoveryResult, Solver, SolverConfig};
