//! Adiabatic elimination of strongly damped or strongly driven subsystems in
//! quantum input-output networks.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod catalog;
pub mod cli_io;
pub mod error;
pub mod operator_algebra;
pub mod slh_model;
pub mod zeno_elimination;
pub mod master_equation;
pub mod trajectories;
pub mod linear_systems;

pub use error::{Error, Result};
pub use operator_algebra::{CMatrix, HilbertSpace, Operator, SubspaceIsometry, ZenoSplit};
pub use slh_model::SlhTriple;
pub use zeno_elimination::{zeno_eliminate, ConditionTolerances, ScaledSlhFamily};
