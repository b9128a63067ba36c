//! Pointwise check of `max{ L V - ρ V + R, M V - V } = 0`.

use serde::{Deserialize, Serialize};

use crate::policy::Region;

/// Both terms of the inequality at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QviPoint {
    pub x: f64,
    pub region: Region,
    /// Generator term `(σ²/2) V'' - μ V' - ρ V + R`.
    pub ode_term: f64,
    /// `M V - V`.
    pub intervention_term: f64,
}

impl QviPoint {
    pub fn residual(&self) -> f64 {
        self.ode_term.max(self.intervention_term)
    }

    /// The term that must vanish in this point's region.
    pub fn active_term(&self) -> f64 {
        match self.region {
            Region::Continuation => self.ode_term,
            Region::Action => self.intervention_term,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `max{..}` exceeded `+tol`.
    PositiveTerm,
    /// The region's active term fell below `-tol`.
    InactiveBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QviViolation {
    pub x: f64,
    pub kind: ViolationKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QviReport {
    pub tol: f64,
    pub points: Vec<QviPoint>,
    /// Largest `max{..}` over the grid.
    pub max_residual: f64,
    /// Largest `|max{..}|` over the grid.
    pub max_abs_residual: f64,
    /// Smallest active term over the grid.
    pub min_active_term: f64,
    pub violations: Vec<QviViolation>,
}

impl QviReport {
    pub(crate) fn assess(points: Vec<QviPoint>, tol: f64) -> Self {
        let mut max_residual = f64::NEG_INFINITY;
        let mut max_abs_residual = 0.0f64;
        let mut min_active_term = f64::INFINITY;
        let mut violations = Vec::new();
        for p in &points {
            let r = p.residual();
            let active = p.active_term();
            max_residual = max_residual.max(r);
            max_abs_residual = max_abs_residual.max(r.abs());
            min_active_term = min_active_term.min(active);
            if !(r <= tol) {
                violations.push(QviViolation {
                    x: p.x,
                    kind: ViolationKind::PositiveTerm,
                    value: r,
                });
            }
            if !(active >= -tol) {
                violations.push(QviViolation {
                    x: p.x,
                    kind: ViolationKind::InactiveBranch,
                    value: active,
                });
            }
        }
        Self {
            tol,
            points,
            max_residual,
            max_abs_residual,
            min_active_term,
            violations,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}
