use thiserror::Error;

use crate::extended_solver::{ConditionReport, ExtendedSolution};

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the solvers, the analysis routines and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: must satisfy {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error(
        "the symmetric model requires mu = 0 and lambda = 0 (got mu = {mu}, lambda = {lambda})"
    )]
    NotBaseModel { mu: f64, lambda: f64 },

    #[error("intervention cost c = {c} is not below the admissible threshold c_bar = {c_bar}")]
    CostTooLarge { c: f64, c_bar: f64 },

    #[error("argument `{name}` = {value} outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: String,
    },

    #[error("grid point {x} coincides with the free boundary {boundary}")]
    GridContainsBoundary { x: f64, boundary: f64 },

    #[error("root bracket [{lo}, {hi}] does not straddle a sign change")]
    NoBracket { lo: f64, hi: f64 },

    #[error("Newton iteration did not converge at homotopy level {level}: max residual {max_residual:e}")]
    NoConvergence {
        level: f64,
        max_residual: f64,
        residuals: [f64; 5],
        iterate: [f64; 5],
    },

    #[error("extended solution violates its sufficient conditions: {}", .report.summary())]
    ConditionViolation {
        report: Box<ConditionReport>,
        solution: Box<ExtendedSolution>,
    },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("path {path} exceeded {cap} interventions (dt too coarse or thresholds degenerate)")]
    InterventionCap { path: u64, cap: u64 },

    #[error("policy configs cannot be compared: {0}")]
    MismatchedConfigs(String),
}
