//! Optimal price-adjustment bands for a retailer whose market share decays
//! with its price premium over a drifting wholesale reference.
//!
//! The state `x` is the premium. Inside a band `(x_low, x_high)` the retailer
//! leaves its price alone; on reaching either edge it pays a cost and resets
//! the premium to `x_star`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod base_solver;
pub mod error;
pub mod extended_solver;
pub mod model;
pub mod policy;
pub mod qvi;
pub mod roots;
pub mod simulator;

pub use base_solver::{solve_base, BaseSolution, ValueFunction};
pub use error::{Error, Result};
pub use extended_solver::{solve_extended, ExtendedSolution};
pub use model::{derive_coefficients, Model, ModelParams, PayoffCoefficients};
pub use policy::{Region, ThresholdPolicy};
pub use qvi::QviReport;
pub use simulator::{simulate, SimulationConfig, SimulationReport};
