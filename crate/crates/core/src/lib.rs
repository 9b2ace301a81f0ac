//! Frank-Wolfe on lp balls: a double/extended-precision solver, the
//! centered slow-curve dynamics of the quadratic model and the experiment
//! drivers that produce the trajectory, heatmap, slow-curve and rate tables.

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod manifest;
pub mod numeric;
pub mod objective;
pub mod slow;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{lmo, lmo_offset_from_e1, lp_norm, BallSpec, Vector};
pub use numeric::{Ext, Precision, Real};
pub use objective::Objective;
pub use solver::{run, Problem, RunOutput, SolverConfig, StepRule, StopReason, TrajectoryRecord};
