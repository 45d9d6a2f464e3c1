//! Intrinsic minimal graphs in three-dimensional step-2 sub-Riemannian structures.
//!
//! The crate solves the ε-regularised minimal surface equation on a uniform grid,
//! continues the solutions toward ε → 0, and provides numerical checks of the
//! structural properties of the limit: horizontal foliation, frozen Taylor
//! approximation order and ε-uniform Sobolev bounds.

pub mod config;
pub mod diagnostics;
pub mod expr;
pub mod foliation;
pub mod frames;
pub mod grid;
pub mod lifting;
pub mod linalg;
pub mod projected;
pub mod solver;

pub use config::{ConfigError, RunConfig};
pub use foliation::{foliate, integrate_leaf, leaf_affinity_residual, FoliationReport, Leaf};
pub use frames::{builtin_heisenberg, builtin_roto_translation, Frame, FrameError};
pub use grid::{Grid, GridFunction, Rect};
pub use lifting::{approximation_order, frozen_coords, taylor_p, FrozenFrame, Probe};
pub use projected::ProjectedContext;
pub use solver::{
    solve_regularized, viscosity_continuation, SolverConfig, SolverError, SolverResult, ViscosityRun,
};
