//! Trajectory optimization for planar vehicles, posed as MAP inference on a
//! factor graph. A constant-velocity Gaussian-process prior ties consecutive
//! states together; obstacle likelihoods come from a signed distance field
//! (static geometry) and speed-calibrated Gaussian safe areas (moving
//! traffic). Levenberg-Marquardt over the block-tridiagonal normal equations
//! does the optimization.
//!
//! Everything numeric is generic over the scalar type; `f64` aliases are
//! exported at the crate root.

pub mod dynfield;
pub mod error;
pub mod gp;
pub mod graph;
pub mod grid;
pub mod sdf;
pub mod solver;
pub mod trajectory;

pub use error::Error;

use nalgebra::RealField;
use num_traits::FromPrimitive;

/// Scalar type the planner math runs on. Implemented by `f32` and `f64`.
pub trait Real: RealField + FromPrimitive + Copy {}

impl<T: RealField + FromPrimitive + Copy> Real for T {}

/// Shorthand for lifting an `f64` literal into the working scalar type.
pub(crate) fn cst<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub type TrajectoryState64 = trajectory::TrajectoryState<f64>;
pub type Trajectory64 = trajectory::Trajectory<f64>;
pub type TimeGrid64 = trajectory::TimeGrid<f64>;
pub type GpPriorParams64 = gp::GpPriorParams<f64>;
pub type OccupancyGrid64 = sdf::OccupancyGrid<f64>;
pub type SdfGrid64 = sdf::SdfGrid<f64>;
pub type ObstacleTrack64 = dynfield::ObstacleTrack<f64>;
pub type SafeAreaModel64 = dynfield::SafeAreaModel<f64>;
pub type CombinedField64 = dynfield::CombinedField<f64>;
pub type FactorGraph64<'a> = graph::FactorGraph<'a, f64>;
pub type LmSettings64 = solver::LmSettings<f64>;
