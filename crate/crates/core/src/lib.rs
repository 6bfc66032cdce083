//! Support-function estimation of density-weighted average derivatives when
//! the outcome is only known to lie in an interval.
//!
//! The identified set of average derivatives is convex; it is described by
//! its support function on a grid of unit directions. The crate provides the
//! population closed forms, leave-one-out kernel estimators of the support
//! function, a multiplier bootstrap for confidence sets, and a Monte Carlo
//! harness for a linear interval design.

pub mod density;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod inference;
pub mod kernel;
pub mod model;
pub mod numeric;
pub mod population;
pub mod simulation;

pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, SetEstimate, SupportEstimator};
pub use kernel::{build_kernel, required_order, verify_moments, KernelFunction, MomentReport};
pub use model::{
    make_direction_grid, validate_sample, ConvexSetRepr, DirectionGrid, IntervalSample, KernelFamily, KernelSpec,
    RawRow, SupportFunctionValues,
};
