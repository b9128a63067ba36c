use retail_impulse::analysis::{asymptotic_constants, sweep_costs};
use retail_impulse::base_solver::{cost_threshold, default_qvi_grid};
use retail_impulse::extended_solver::{default_extended_qvi_grid, ConditionReport};
use retail_impulse::simulator::CostModel;
use retail_impulse::{
    derive_coefficients, simulate, solve_base, solve_extended, BaseSolution, ExtendedSolution,
    ModelParams, PayoffCoefficients, QviReport, Region, SimulationConfig, SimulationReport,
    ThresholdPolicy,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{GridBlock, RunConfig, SimulateBlock, SolveBlock};
use crate::error::CliError;
use crate::output::{fmt15, json_bytes, Table};

pub const DEFAULT_QVI_TOL: f64 = 1e-6;
const CURVE_POINTS: usize = 501;

pub enum Solved {
    Base(BaseSolution),
    Extended(Box<ExtendedSolution>),
}

impl Solved {
    pub fn new(cfg: &RunConfig, force_extended: bool) -> Result<Self, CliError> {
        if force_extended || cfg.wants_extended() {
            Ok(Solved::Extended(Box::new(solve_extended(
                &cfg.model, None,
            )?)))
        } else {
            Ok(Solved::Base(solve_base(&cfg.model)?))
        }
    }

    fn params(&self) -> &ModelParams {
        match self {
            Solved::Base(s) => &s.params,
            Solved::Extended(s) => &s.params,
        }
    }

    pub fn policy(&self) -> ThresholdPolicy {
        match self {
            Solved::Base(s) => s.optimal_policy(),
            Solved::Extended(s) => s.policy(),
        }
    }

    fn value_at(&self, x: f64) -> Result<f64, CliError> {
        match self {
            Solved::Base(s) => Ok(s.value_function().value_at(x)),
            Solved::Extended(s) => Ok(s.value_at(x)?),
        }
    }

    fn phi(&self, x: f64) -> f64 {
        match self {
            Solved::Base(s) => s.value_function().phi(x),
            Solved::Extended(s) => s.phi(x).value,
        }
    }

    fn region(&self, x: f64) -> Region {
        match self {
            Solved::Base(s) => s.value_function().region(x),
            Solved::Extended(s) => s.region(x),
        }
    }

    fn default_curve_grid(&self) -> Vec<f64> {
        let d = self.params().delta_cap;
        let (lo, hi) = match self {
            Solved::Base(_) => (0.0, d),
            // the extended value function lives on the open interval
            Solved::Extended(_) => {
                let h = d / (CURVE_POINTS + 1) as f64;
                (h, d - h)
            }
        };
        let step = (hi - lo) / (CURVE_POINTS - 1) as f64;
        (0..CURVE_POINTS)
            .map(|i| {
                if i == CURVE_POINTS - 1 {
                    hi
                } else {
                    lo + step * i as f64
                }
            })
            .collect()
    }

    fn qvi(&self, grid: Option<Vec<f64>>, tol: f64) -> Result<QviReport, CliError> {
        Ok(match self {
            Solved::Base(s) => {
                let grid = grid.unwrap_or_else(|| default_qvi_grid(s));
                s.value_function().qvi_residual(&grid, tol)?
            }
            Solved::Extended(s) => {
                let grid = grid.unwrap_or_else(|| default_extended_qvi_grid(s));
                s.qvi_residual(&grid, tol)?
            }
        })
    }
}

#[derive(Serialize)]
pub struct SolveDocument {
    pub kind: &'static str,
    pub model: ModelParams,
    pub solve: SolveBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub costs: Option<crate::config::CostsBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    pub solution: Value,
    pub coefficients: PayoffCoefficients,
    pub c_bar: Option<f64>,
    pub condition_report: Option<ConditionReport>,
}

pub fn solve(cfg: &RunConfig, force_extended: bool) -> Result<Vec<u8>, CliError> {
    let solved = Solved::new(cfg, force_extended)?;
    let (kind, solution, coefficients, c_bar, condition_report) = match &solved {
        Solved::Base(s) => {
            let vf = s.value_function();
            (
                "base",
                json!({
                    "a": s.a,
                    "y_bar": s.y_bar,
                    "x_low": s.x_low,
                    "x_star": s.x_star,
                    "x_high": s.x_high,
                    "value_at_x_star": vf.value_at(s.x_star),
                    "m_operator": vf.m_operator(),
                    "system_residuals": s.system_residuals(),
                    "pasting_residuals": s.pasting_residuals(),
                }),
                s.coeffs,
                Some(s.c_bar),
                None,
            )
        }
        Solved::Extended(s) => (
            "extended",
            json!({
                "a1": s.a1,
                "a2": s.a2,
                "b1": s.b1,
                "b2": s.b2,
                "x_ref": s.x_ref,
                "x_low": s.x_low,
                "x_star": s.x_star,
                "x_high": s.x_high,
                "value_at_x_star": s.phi(s.x_star).value,
                "residuals": s.residuals,
                "newton_iterations": s.newton_iterations,
            }),
            s.coeffs,
            if s.params.is_base() {
                Some(cost_threshold(&s.params)?)
            } else {
                None
            },
            Some(s.condition_report.clone()),
        ),
    };
    json_bytes(&SolveDocument {
        kind,
        model: cfg.model,
        solve: SolveBlock {
            extended: cfg.solve.extended || force_extended,
            ..cfg.solve.clone()
        },
        grid: cfg.grid,
        costs: cfg.costs.clone(),
        simulate: cfg.simulate.clone(),
        solution,
        coefficients,
        c_bar,
        condition_report,
    })
}

pub fn value_curve(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let solved = Solved::new(cfg, false)?;
    let grid = match &cfg.grid {
        Some(g) => g.points()?,
        None => solved.default_curve_grid(),
    };
    let mut table = Table::new(&["x", "V", "phi", "region"])?;
    for x in grid {
        let v = solved.value_at(x)?;
        table.row([
            fmt15(x),
            fmt15(v),
            fmt15(solved.phi(x)),
            solved.region(x).as_str().to_string(),
        ])?;
    }
    table.into_bytes()
}

pub fn sweep_cost(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let params = cfg.model;
    let costs = match &cfg.costs {
        Some(c) => c.costs()?,
        None => {
            let c_bar = cost_threshold(&params)?;
            retail_impulse::analysis::log_spaced_costs(1e-6, 0.9 * c_bar, 50)
        }
    };
    let sweep = sweep_costs(&params, &costs)?;
    let k = derive_coefficients(&params)?;
    let big_c = asymptotic_constants(&params)?.c_fourth_root;
    let mut table = Table::new(&[
        "c",
        "x_low",
        "x_high",
        "A",
        "V_xv",
        "dV_dc_xv",
        "x_low_asymptotic",
        "x_high_asymptotic",
    ])?;
    for r in &sweep.records {
        let sol = r.solution.as_ref().expect("sweep keeps solutions");
        let v = sol.value_function().value_at(k.x_v);
        let width = big_c * r.c.powf(0.25);
        table.row([
            fmt15(r.c),
            fmt15(r.x_low),
            fmt15(r.x_high),
            fmt15(r.a),
            fmt15(v),
            fmt15(r.dv_dc[0]),
            fmt15(k.x_v - width),
            fmt15(k.x_v + width),
        ])?;
    }
    table.into_bytes()
}

#[derive(Serialize)]
struct SimulateDocument {
    model: ModelParams,
    simulate: SimulationConfig,
    report: SimulationReport,
    /// Analytic value at `initial_x` when the solved policy is simulated.
    value_at_initial_x: Option<f64>,
}

pub fn run_simulation(cfg: &RunConfig, seed: Option<u64>) -> Result<Vec<u8>, CliError> {
    let solved = Solved::new(cfg, false)?;
    let block = cfg.simulate.clone().unwrap_or_default();
    let optimal = solved.policy();
    let policy = block.policy.unwrap_or(optimal);
    let initial_x = block.initial_x.unwrap_or(optimal.x_star);
    let defaults = SimulationConfig::new(policy, initial_x);
    let sim = SimulationConfig {
        n_paths: block.n_paths.unwrap_or(defaults.n_paths),
        dt: block.dt.unwrap_or(defaults.dt),
        horizon: block.horizon.unwrap_or(defaults.horizon),
        seed: seed.or(block.seed).unwrap_or(defaults.seed),
        cost_model: CostModel::for_params(&cfg.model),
        parallel: block.parallel.unwrap_or(defaults.parallel),
        max_interventions_per_path: block
            .max_interventions_per_path
            .unwrap_or(defaults.max_interventions_per_path),
        ..defaults
    };
    let report = simulate(&cfg.model, &sim)?;
    let value_at_initial_x = if policy == optimal {
        solved.value_at(initial_x).ok()
    } else {
        None
    };
    json_bytes(&SimulateDocument {
        model: cfg.model,
        simulate: sim,
        report,
        value_at_initial_x,
    })
}

pub struct QviOutcome {
    pub table: Vec<u8>,
    pub summary: Value,
    pub passed: bool,
}

pub fn qvi_check(cfg: &RunConfig, tol: Option<f64>) -> Result<QviOutcome, CliError> {
    let tol = tol.or(cfg.solve.qvi_tol).unwrap_or(DEFAULT_QVI_TOL);
    if !(tol >= 0.0) {
        return Err(CliError::Config(format!("tol must be >= 0 (got {tol})")));
    }
    let solved = Solved::new(cfg, false)?;
    let grid = cfg.grid.as_ref().map(|g| g.points()).transpose()?;
    let report = solved.qvi(grid, tol)?;
    let mut table = Table::new(&["x", "region", "ode_term", "intervention_term", "residual"])?;
    for p in &report.points {
        table.row([
            fmt15(p.x),
            p.region.as_str().to_string(),
            fmt15(p.ode_term),
            fmt15(p.intervention_term),
            fmt15(p.residual()),
        ])?;
    }
    let summary = json!({
        "passed": report.passed(),
        "tol": tol,
        "points": report.points.len(),
        "max_residual": report.max_residual,
        "max_abs_residual": report.max_abs_residual,
        "min_active_term": report.min_active_term,
        "violations": report.violations.len(),
    });
    Ok(QviOutcome {
        table: table.into_bytes()?,
        summary,
        passed: report.passed(),
    })
}
