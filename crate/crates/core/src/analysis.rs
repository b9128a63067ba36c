//! Dependence of the symmetric solution on the intervention cost: small-cost
//! asymptotics, cost sweeps, monotonicity and the sensitivity `dV/dc`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_solver::{g_derivative_at, solve_base, uniform_grid, BaseSolution};
use crate::error::{Error, Result};
use crate::model::{derive_coefficients, ModelParams};

/// Leading-order constants of the `c -> 0+` expansions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    /// `C = (6σ²/α)^{1/4}`: `x̄(c) - x_v ~ C c^{1/4}`.
    pub c_fourth_root: f64,
    /// Closed form `σ / (√6 ρ)` as displayed for the sensitivity prefactor.
    pub c_hat: f64,
    /// `(12 / (k2 θ²))^{1/4}`, algebraically equal to `C`.
    pub y_prefactor: f64,
    /// `y_v / ρ`.
    pub v_static: f64,
    /// `2 / (θ² C²)`: `√c dV/dc -> -sensitivity_prefactor`.
    pub sensitivity_prefactor: f64,
    /// `sensitivity_prefactor / c_hat`; equals `√α`, so the two forms only
    /// agree when `α = 1`.
    pub prefactor_discrepancy: f64,
}

pub fn asymptotic_constants(params: &ModelParams) -> Result<AsymptoticConstants> {
    let k = derive_coefficients(params)?;
    let s2 = params.sigma * params.sigma;
    let c_fourth_root = (6.0 * s2 / k.alpha).powf(0.25);
    let y_prefactor = (12.0 / (k.k2 * k.theta * k.theta)).powf(0.25);
    let sensitivity_prefactor = 2.0 / (k.theta * k.theta * c_fourth_root * c_fourth_root);
    let c_hat = params.sigma / (6f64.sqrt() * params.rho);
    Ok(AsymptoticConstants {
        c_fourth_root,
        c_hat,
        y_prefactor,
        v_static: k.y_v / params.rho,
        sensitivity_prefactor,
        prefactor_discrepancy: sensitivity_prefactor / c_hat,
    })
}

/// `(6σ²)^{1/4}`, the band constant for a unit-concavity quadratic payoff.
pub fn unit_concavity_fourth_root(sigma: f64) -> f64 {
    (6.0 * sigma * sigma).powf(0.25)
}

/// `A'(c) = 1 / g'(A(c)) = -e^{θȳ} / (e^{θȳ} - 1)²`.
pub fn a_prime(sol: &BaseSolution) -> f64 {
    1.0 / g_derivative_at(sol.y_bar, &sol.coeffs)
}

/// `dV^c/dc` at `x`: `A'(c) · 2cosh(θ(x - x_v))` inside the band and
/// `2A'(c) - 1` outside. Always negative.
pub fn dv_dc(sol: &BaseSolution, x: f64) -> f64 {
    let ap = a_prime(sol);
    if x > sol.x_low && x < sol.x_high {
        ap * 2.0 * (sol.coeffs.theta * (x - sol.coeffs.x_v)).cosh()
    } else {
        2.0 * ap - 1.0
    }
}

/// `ȳ'(c) = 1 / ξ'(ȳ)`; `x̄' = ȳ'` and `x̲' = -ȳ'`.
pub fn band_growth_rate(sol: &BaseSolution) -> f64 {
    1.0 / crate::base_solver::xi_derivative(sol.y_bar, &sol.coeffs)
}

/// `count` costs `start, start·factor, start·factor², ...`.
pub fn geometric_costs(start: f64, factor: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * factor.powi(i as i32)).collect()
}

/// `count` costs log-uniformly spaced over `[lo, hi]`.
pub fn log_spaced_costs(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub c: f64,
    pub a: f64,
    pub y_bar: f64,
    pub x_low: f64,
    pub x_high: f64,
    /// `V^c` on the sweep's `x_grid`.
    pub values: Vec<f64>,
    /// `dV^c/dc` at the sweep's probe points.
    pub dv_dc: Vec<f64>,
    #[serde(skip)]
    pub solution: Option<BaseSolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSweep {
    pub x_grid: Vec<f64>,
    pub probes: Vec<f64>,
    pub records: Vec<SweepRecord>,
    pub x_high_increasing: bool,
    pub x_low_decreasing: bool,
    /// `V^c(x)` strictly decreasing in `c` at every grid point.
    pub value_decreasing: bool,
}

/// Solves every cost of an ascending grid; values on 101 points of `[0, Δ]`
/// and sensitivities at `x_v`.
pub fn sweep_costs(params: &ModelParams, cost_grid: &[f64]) -> Result<CostSweep> {
    let k = derive_coefficients(params)?;
    let x_grid = uniform_grid(0.0, params.delta_cap, 101);
    sweep_costs_on(params, cost_grid, &x_grid, &[k.x_v])
}

pub fn sweep_costs_on(
    params: &ModelParams,
    cost_grid: &[f64],
    x_grid: &[f64],
    probes: &[f64],
) -> Result<CostSweep> {
    params.validate()?;
    params.require_base()?;
    if cost_grid.is_empty() {
        return Err(Error::Domain {
            name: "cost_grid",
            value: f64::NAN,
            domain: "non-empty".into(),
        });
    }
    if let Some(w) = cost_grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::Domain {
            name: "cost_grid",
            value: w[1],
            domain: "strictly ascending".into(),
        });
    }

    let solved: Vec<Result<BaseSolution>> = cost_grid
        .par_iter()
        .map(|&c| solve_base(&params.with_cost(c)))
        .collect();
    let mut records = Vec::with_capacity(solved.len());
    for s in solved {
        let s = s?;
        let vf = s.value_function();
        records.push(SweepRecord {
            c: s.params.c,
            a: s.a,
            y_bar: s.y_bar,
            x_low: s.x_low,
            x_high: s.x_high,
            values: x_grid.iter().map(|&x| vf.value_at(x)).collect(),
            dv_dc: probes.iter().map(|&x| dv_dc(&s, x)).collect(),
            solution: Some(s),
        });
    }

    let pairs = || records.windows(2);
    let x_high_increasing = pairs().all(|w| w[1].x_high > w[0].x_high);
    let x_low_decreasing = pairs().all(|w| w[1].x_low < w[0].x_low);
    let value_decreasing =
        pairs().all(|w| w[1].values.iter().zip(&w[0].values).all(|(n, o)| n < o));

    Ok(CostSweep {
        x_grid: x_grid.to_vec(),
        probes: probes.to_vec(),
        records,
        x_high_increasing,
        x_low_decreasing,
        value_decreasing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub c: f64,
    pub y_bar: f64,
    pub a: f64,
    /// `ȳ(c) / (y_prefactor · c^{1/4})`.
    pub ratio: f64,
    /// `(x̄(c) - x_v) / (C · c^{1/4})`.
    pub boundary_ratio: f64,
    /// `V^c(x_v) - y_v/ρ`.
    pub value_gap: f64,
    /// `A(c) - Ā`.
    pub a_gap: f64,
    /// `√c · dV^c/dc(x_v) / (-2/(θ²C²))`.
    pub sensitivity_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub constants: AsymptoticConstants,
    pub rows: Vec<AsymptoticRow>,
    /// `|ratio - 1|` non-increasing along the (decreasing) cost sequence.
    pub ratio_converges_monotonically: bool,
}

pub fn verify_asymptotics(params: &ModelParams, cost_sequence: &[f64]) -> Result<AsymptoticReport> {
    if let Some(w) = cost_sequence.windows(2).find(|w| !(w[1] < w[0])) {
        return Err(Error::Domain {
            name: "cost_sequence",
            value: w[1],
            domain: "strictly decreasing".into(),
        });
    }
    let constants = asymptotic_constants(params)?;
    let rows = cost_sequence
        .iter()
        .map(|&c| {
            let s = solve_base(&params.with_cost(c))?;
            let quarter = c.powf(0.25);
            Ok(AsymptoticRow {
                c,
                y_bar: s.y_bar,
                a: s.a,
                ratio: s.y_bar / (constants.y_prefactor * quarter),
                boundary_ratio: (s.x_high - s.coeffs.x_v) / (constants.c_fourth_root * quarter),
                value_gap: s.value_function().value_at(s.coeffs.x_v) - constants.v_static,
                a_gap: s.a - s.coeffs.a_bar,
                sensitivity_ratio: c.sqrt() * dv_dc(&s, s.coeffs.x_v)
                    / -constants.sensitivity_prefactor,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratio_converges_monotonically = rows
        .windows(2)
        .all(|w| (w[1].ratio - 1.0).abs() <= (w[0].ratio - 1.0).abs());
    Ok(AsymptoticReport {
        constants,
        rows,
        ratio_converges_monotonically,
    })
}
