//! Model with drift `mu` and state-dependent intervention cost
//! `K(x) = c + λ Φ(x)`, restricted to the state space `(0, Δ)`.
//!
//! On the continuation band the value function is
//! `φ(x) = A1 e^{m1 x} + A2 e^{m2 x} - k2 x² + k1 x - k̃0`, which solves
//! `(σ²/2) φ'' - μ φ' - ρ φ + f = 0`. Outside the band it is the affine
//! function `φ(x*) - c + (λ/Δ)(x - Δ)`. The five unknowns
//! `(A1, A2, x̲, x̄, x*)` are fixed by
//!
//! ```text
//! φ'(x*) = 0
//! φ'(x̲) = λ/Δ,   φ(x̲) = φ(x*) - c + (λ/Δ)(x̲ - Δ)
//! φ'(x̄) = λ/Δ,   φ(x̄) = φ(x*) - c + (λ/Δ)(x̄ - Δ)
//! ```
//!
//! and solved by damped Newton, continuing in `(μ, λ)` from the symmetric
//! solution.
//!
//! Internally the exponentials are anchored at `x_v`, i.e. the unknowns are
//! `B_i = A_i e^{m_i x_v}`; with `m1` of order 10 the raw `A1` is many orders
//! of magnitude smaller than `A2`.

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::base_solver::{solve_base, uniform_grid};
use crate::error::{Error, Result};
use crate::model::{derive_coefficients, Model, ModelParams, PayoffCoefficients};
use crate::policy::{Region, ThresholdPolicy};
use crate::qvi::{QviPoint, QviReport};
use crate::roots::{bisect, BisectionTol};

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_RESIDUAL_TOL: f64 = 1e-10;
const NEWTON_STEP_TOL: f64 = 1e-14;
/// Residual level below which a stalled step still counts as converged.
const STALL_ACCEPT_TOL: f64 = 1e-9;
const MAX_HALVINGS: u32 = 30;
const HOMOTOPY_STEP: f64 = 0.25;
const HOMOTOPY_MIN_STEP: f64 = 1.0 / 1024.0;
const CURVATURE_GRID: usize = 4001;

/// Value and first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiDerivs {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `φ_{A1,A2}` in the raw parametrisation `A1 e^{m1 x} + A2 e^{m2 x} + poly`.
pub fn phi_extended(x: f64, a1: f64, a2: f64, coeffs: &PayoffCoefficients) -> PhiDerivs {
    Anchored {
        b1: a1,
        b2: a2,
        x_ref: 0.0,
    }
    .eval(x, coeffs)
}

/// Exponential part anchored at `x_ref`: `b1 e^{m1 (x - x_ref)} + b2 e^{m2 (x - x_ref)}`.
#[derive(Debug, Clone, Copy)]
struct Anchored {
    b1: f64,
    b2: f64,
    x_ref: f64,
}

impl Anchored {
    #[inline]
    fn exps(&self, x: f64, k: &PayoffCoefficients) -> (f64, f64) {
        let z = x - self.x_ref;
        ((k.m1 * z).exp(), (k.m2 * z).exp())
    }

    fn eval(&self, x: f64, k: &PayoffCoefficients) -> PhiDerivs {
        let (e1, e2) = self.exps(x, k);
        let (t1, t2) = (self.b1 * e1, self.b2 * e2);
        PhiDerivs {
            value: t1 + t2 - k.k2 * x * x + k.k1 * x - k.k0_tilde,
            d1: k.m1 * t1 + k.m2 * t2 - 2.0 * k.k2 * x + k.k1,
            d2: k.m1 * k.m1 * t1 + k.m2 * k.m2 * t2 - 2.0 * k.k2,
        }
    }
}

/// Outcome of the sufficient-condition checks on a converged solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `0 < x̲ < x* < x̄ < Δ`.
    pub order_condition: bool,
    pub phi_d2_at_x_star: f64,
    /// `φ''(x*) < 0`.
    pub concave_at_x_star: bool,
    /// Sign changes of `φ''` on `[x̲, x̄]`, refined by bisection.
    pub x_tilde_1: Option<f64>,
    pub x_tilde_2: Option<f64>,
    /// `φ'' > 0` on `(x̲, x̃1) ∪ (x̃2, x̄)` and `< 0` on `(x̃1, x̃2)`, with
    /// `x̃1 < x* < x̃2`.
    pub sign_pattern: bool,
    /// `x_v - ρλ / (2αΔ)`.
    pub x_hat: f64,
    /// `x̲ < x̂ < x̄`.
    pub x_hat_inside: bool,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.order_condition && self.concave_at_x_star && self.sign_pattern && self.x_hat_inside
    }

    pub fn summary(&self) -> String {
        let mut failed = Vec::new();
        if !self.order_condition {
            failed.push("order condition");
        }
        if !self.concave_at_x_star {
            failed.push("phi''(x*) < 0");
        }
        if !self.sign_pattern {
            failed.push("phi'' sign pattern");
        }
        if !self.x_hat_inside {
            failed.push("x_hat inside band");
        }
        if failed.is_empty() {
            "all conditions hold".into()
        } else {
            format!("failed: {}", failed.join(", "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedSolution {
    pub a1: f64,
    pub a2: f64,
    pub x_low: f64,
    pub x_star: f64,
    pub x_high: f64,
    /// `A_i e^{m_i x_ref}`.
    pub b1: f64,
    pub b2: f64,
    pub x_ref: f64,
    pub coeffs: PayoffCoefficients,
    pub params: ModelParams,
    /// The five equations in the order listed in the module docs.
    pub residuals: [f64; 5],
    pub newton_iterations: usize,
    /// 2-norm of the residual after each accepted Newton step of the last
    /// stage, starting with the initial iterate.
    pub residual_history: Vec<f64>,
    pub condition_report: ConditionReport,
}

/// Five-equation residual and its analytic Jacobian, bound to one parameter
/// set.
#[derive(Debug, Clone, Copy)]
pub struct SmoothFitSystem {
    coeffs: PayoffCoefficients,
    c: f64,
    slope: f64,
    delta_cap: f64,
    x_ref: f64,
}

impl SmoothFitSystem {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let coeffs = derive_coefficients(params)?;
        Ok(Self {
            coeffs,
            c: params.c,
            slope: params.lambda / params.delta_cap,
            delta_cap: params.delta_cap,
            x_ref: coeffs.x_v,
        })
    }

    /// Unknowns are `[B1, B2, x̲, x̄, x*]`.
    fn phi(&self, z: &[f64; 5]) -> Anchored {
        Anchored {
            b1: z[0],
            b2: z[1],
            x_ref: self.x_ref,
        }
    }

    pub fn residual(&self, z: &[f64; 5]) -> [f64; 5] {
        let phi = self.phi(z);
        let k = &self.coeffs;
        let (lo, hi, star) = (phi.eval(z[2], k), phi.eval(z[3], k), phi.eval(z[4], k));
        [
            star.d1,
            lo.d1 - self.slope,
            hi.d1 - self.slope,
            lo.value - star.value + self.c - self.slope * (z[2] - self.delta_cap),
            hi.value - star.value + self.c - self.slope * (z[3] - self.delta_cap),
        ]
    }

    pub fn jacobian(&self, z: &[f64; 5]) -> [[f64; 5]; 5] {
        let phi = self.phi(z);
        let k = &self.coeffs;
        let (m1, m2) = (k.m1, k.m2);
        let (lo, hi, star) = (phi.eval(z[2], k), phi.eval(z[3], k), phi.eval(z[4], k));
        let (e1l, e2l) = phi.exps(z[2], k);
        let (e1h, e2h) = phi.exps(z[3], k);
        let (e1s, e2s) = phi.exps(z[4], k);
        [
            [m1 * e1s, m2 * e2s, 0.0, 0.0, star.d2],
            [m1 * e1l, m2 * e2l, lo.d2, 0.0, 0.0],
            [m1 * e1h, m2 * e2h, 0.0, hi.d2, 0.0],
            [e1l - e1s, e2l - e2s, lo.d1 - self.slope, 0.0, -star.d1],
            [e1h - e1s, e2h - e2s, 0.0, hi.d1 - self.slope, -star.d1],
        ]
    }
}

fn max_norm(r: &[f64; 5]) -> f64 {
    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn two_norm(r: &[f64; 5]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct NewtonOutcome {
    z: [f64; 5],
    residuals: [f64; 5],
    iterations: usize,
    history: Vec<f64>,
}

/// Damped Newton: full step, halved up to 30 times until the residual
/// 2-norm decreases.
fn newton(sys: &SmoothFitSystem, z0: [f64; 5], level: f64) -> Result<NewtonOutcome> {
    let fail = |z: [f64; 5], r: [f64; 5]| Error::NoConvergence {
        level,
        max_residual: max_norm(&r),
        residuals: r,
        iterate: z,
    };
    let mut z = z0;
    let mut r = sys.residual(&z);
    if !r.iter().all(|v| v.is_finite()) {
        return Err(fail(z, r));
    }
    let mut norm = two_norm(&r);
    let mut history = vec![norm];
    for iterations in 0..NEWTON_MAX_ITER {
        if max_norm(&r) <= NEWTON_RESIDUAL_TOL {
            return Ok(NewtonOutcome {
                z,
                residuals: r,
                iterations,
                history,
            });
        }
        let j = Matrix5::from_fn(|i, k| sys.jacobian(&z)[i][k]);
        let rhs = -Vector5::from_column_slice(&r);
        let Some(step) = j.lu().solve(&rhs) else {
            return Err(fail(z, r));
        };
        let mut damping = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: [f64; 5] = std::array::from_fn(|i| z[i] + damping * step[i]);
            let rt = sys.residual(&trial);
            let nt = two_norm(&rt);
            if nt.is_finite() && nt < norm {
                accepted = Some((trial, rt, nt));
                break;
            }
            damping *= 0.5;
        }
        let Some((trial, rt, nt)) = accepted else {
            if max_norm(&r) <= STALL_ACCEPT_TOL {
                return Ok(NewtonOutcome {
                    z,
                    residuals: r,
                    iterations,
                    history,
                });
            }
            return Err(fail(z, r));
        };
        let moved = (0..5)
            .map(|i| (trial[i] - z[i]).abs() / (1.0 + z[i].abs()))
            .fold(0.0, f64::max);
        z = trial;
        r = rt;
        norm = nt;
        history.push(norm);
        if moved <= NEWTON_STEP_TOL {
            if max_norm(&r) <= STALL_ACCEPT_TOL {
                return Ok(NewtonOutcome {
                    z,
                    residuals: r,
                    iterations: iterations + 1,
                    history,
                });
            }
            return Err(fail(z, r));
        }
    }
    if max_norm(&r) <= STALL_ACCEPT_TOL {
        return Ok(NewtonOutcome {
            z,
            residuals: r,
            iterations: NEWTON_MAX_ITER,
            history,
        });
    }
    Err(fail(z, r))
}

fn scaled(params: &ModelParams, t: f64) -> ModelParams {
    let mut p = *params;
    p.mu *= t;
    p.lambda *= t;
    p
}

/// Continuation in `t ∈ [0, 1]` over `(tμ, tλ)` from the symmetric solution;
/// a failed stage is retried with half the step.
fn homotopy(params: &ModelParams) -> Result<NewtonOutcome> {
    let base = solve_base(&scaled(params, 0.0))?;
    let mut z = [base.a, base.a, base.x_low, base.x_high, base.x_star];
    let mut t = 0.0;
    let mut step = HOMOTOPY_STEP;
    let mut last: Option<NewtonOutcome> = None;
    loop {
        let target = if last.is_none() {
            0.0
        } else {
            (t + step).min(1.0)
        };
        let sys = SmoothFitSystem::new(&scaled(params, target))?;
        match newton(&sys, z, target) {
            Ok(out) => {
                z = out.z;
                t = target;
                last = Some(out);
                if t >= 1.0 {
                    return Ok(last.unwrap());
                }
                step = (2.0 * step).min(HOMOTOPY_STEP);
            }
            Err(e) => {
                step *= 0.5;
                if step < HOMOTOPY_MIN_STEP || last.is_none() {
                    return Err(e);
                }
            }
        }
    }
}

/// Solves the five-equation system. A supplied `initial_guess` is tried
/// first; homotopy from the symmetric model is the fallback.
pub fn solve_extended(
    params: &ModelParams,
    initial_guess: Option<&ExtendedSolution>,
) -> Result<ExtendedSolution> {
    params.validate()?;
    let sys = SmoothFitSystem::new(params)?;

    let from_guess = initial_guess.and_then(|g| {
        // Re-anchor B_i at this model's x_v.
        let shift = sys.x_ref - g.x_ref;
        let z = [
            g.b1 * (sys.coeffs.m1 * shift).exp(),
            g.b2 * (sys.coeffs.m2 * shift).exp(),
            g.x_low,
            g.x_high,
            g.x_star,
        ];
        newton(&sys, z, 1.0).ok()
    });
    let out = match from_guess {
        Some(out) => out,
        None => homotopy(params)?,
    };

    let sol = assemble(params, &sys, out);
    if sol.condition_report.all_hold() {
        Ok(sol)
    } else {
        Err(Error::ConditionViolation {
            report: Box::new(sol.condition_report.clone()),
            solution: Box::new(sol),
        })
    }
}

fn assemble(params: &ModelParams, sys: &SmoothFitSystem, out: NewtonOutcome) -> ExtendedSolution {
    let k = sys.coeffs;
    let [b1, b2, x_low, x_high, x_star] = out.z;
    let phi = Anchored {
        b1,
        b2,
        x_ref: sys.x_ref,
    };
    let condition_report = check_conditions(&phi, &k, params, x_low, x_star, x_high);
    ExtendedSolution {
        a1: b1 * (-k.m1 * sys.x_ref).exp(),
        a2: b2 * (-k.m2 * sys.x_ref).exp(),
        x_low,
        x_star,
        x_high,
        b1,
        b2,
        x_ref: sys.x_ref,
        coeffs: k,
        params: *params,
        residuals: out.residuals,
        newton_iterations: out.iterations,
        residual_history: out.history,
        condition_report,
    }
}

fn check_conditions(
    phi: &Anchored,
    k: &PayoffCoefficients,
    params: &ModelParams,
    x_low: f64,
    x_star: f64,
    x_high: f64,
) -> ConditionReport {
    let order_condition =
        0.0 < x_low && x_low < x_star && x_star < x_high && x_high < params.delta_cap;
    let phi_d2_at_x_star = phi.eval(x_star, k).d2;
    let x_hat = k.x_v - params.rho * params.lambda / (2.0 * k.alpha * params.delta_cap);

    let mut x_tilde_1 = None;
    let mut x_tilde_2 = None;
    let mut sign_pattern = false;
    if order_condition {
        let d2 = |x: f64| phi.eval(x, k).d2;
        let grid = uniform_grid(x_low, x_high, CURVATURE_GRID);
        // interior samples only; the end points are the pasting points
        let inner = &grid[1..grid.len() - 1];
        let signs: Vec<bool> = inner.iter().map(|&x| d2(x) > 0.0).collect();
        let changes: Vec<usize> = (1..signs.len())
            .filter(|&i| signs[i] != signs[i - 1])
            .collect();
        let refine = |i: usize| {
            bisect(
                d2,
                inner[i - 1],
                inner[i],
                BisectionTol {
                    width: 1e-14,
                    max_iter: 200,
                },
            )
            .ok()
        };
        if let [first, second] = changes[..] {
            x_tilde_1 = refine(first);
            x_tilde_2 = refine(second);
            sign_pattern = signs[0]
                && !signs[first]
                && signs[second]
                && matches!((x_tilde_1, x_tilde_2), (Some(a), Some(b)) if a < x_star && x_star < b);
        } else {
            // report whatever crossings exist for diagnosis
            x_tilde_1 = changes.first().and_then(|&i| refine(i));
            x_tilde_2 = changes.get(1).and_then(|&i| refine(i));
        }
    }

    ConditionReport {
        order_condition,
        phi_d2_at_x_star,
        concave_at_x_star: phi_d2_at_x_star < 0.0,
        x_tilde_1,
        x_tilde_2,
        sign_pattern,
        x_hat,
        x_hat_inside: x_low < x_hat && x_hat < x_high,
    }
}

impl ExtendedSolution {
    fn anchored(&self) -> Anchored {
        Anchored {
            b1: self.b1,
            b2: self.b2,
            x_ref: self.x_ref,
        }
    }

    /// `φ_{A1,A2}` and its derivatives on all of ℝ.
    pub fn phi(&self, x: f64) -> PhiDerivs {
        self.anchored().eval(x, &self.coeffs)
    }

    pub fn policy(&self) -> ThresholdPolicy {
        ThresholdPolicy {
            x_low: self.x_low,
            x_star: self.x_star,
            x_high: self.x_high,
        }
    }

    pub fn model(&self) -> Model {
        Model::new(self.params).expect("solution parameters were validated")
    }

    pub fn region(&self, x: f64) -> Region {
        if x > self.x_low && x < self.x_high {
            Region::Continuation
        } else {
            Region::Action
        }
    }

    fn slope(&self) -> f64 {
        self.params.lambda / self.params.delta_cap
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if x > 0.0 && x < self.params.delta_cap {
            Ok(())
        } else {
            Err(Error::Domain {
                name: "x",
                value: x,
                domain: format!("(0, {})", self.params.delta_cap),
            })
        }
    }

    /// `φ(x*) - K(x)`, the value of intervening now.
    pub fn m_operator(&self, x: f64) -> f64 {
        self.phi(self.x_star).value - self.params.intervention_cost(x)
    }

    /// V and its first two derivatives at `x ∈ (0, Δ)`.
    pub fn value_derivs(&self, x: f64) -> Result<PhiDerivs> {
        self.check_domain(x)?;
        Ok(match self.region(x) {
            Region::Continuation => self.phi(x),
            Region::Action => PhiDerivs {
                value: self.phi(self.x_star).value - self.params.c
                    + self.slope() * (x - self.params.delta_cap),
                d1: self.slope(),
                d2: 0.0,
            },
        })
    }

    pub fn value_at(&self, x: f64) -> Result<f64> {
        self.value_derivs(x).map(|d| d.value)
    }

    pub fn qvi_residual(&self, grid: &[f64], tol: f64) -> Result<QviReport> {
        let model = self.model();
        let p = &self.params;
        let mut points = Vec::with_capacity(grid.len());
        for &x in grid {
            for boundary in [self.x_low, self.x_high] {
                if x == boundary {
                    return Err(Error::GridContainsBoundary { x, boundary });
                }
            }
            let v = self.value_derivs(x)?;
            let region = self.region(x);
            points.push(QviPoint {
                x,
                region,
                ode_term: 0.5 * p.sigma * p.sigma * v.d2 - p.mu * v.d1 - p.rho * v.value
                    + model.running_payoff(x),
                intervention_term: self.m_operator(x) - v.value,
            });
        }
        Ok(QviReport::assess(points, tol))
    }
}

pub fn extended_value_at(sol: &ExtendedSolution, x: f64) -> Result<f64> {
    sol.value_at(x)
}

pub fn extended_qvi_residual(sol: &ExtendedSolution, grid: &[f64], tol: f64) -> Result<QviReport> {
    sol.qvi_residual(grid, tol)
}

/// 2001 uniform points strictly inside `(0, Δ)`, dropping those within
/// `1e-6` of the free boundaries.
pub fn default_extended_qvi_grid(sol: &ExtendedSolution) -> Vec<f64> {
    let d = sol.params.delta_cap;
    let h = d / 2002.0;
    uniform_grid(h, d - h, 2001)
        .into_iter()
        .filter(|x| (x - sol.x_low).abs() > 1e-6 && (x - sol.x_high).abs() > 1e-6)
        .collect()
}
