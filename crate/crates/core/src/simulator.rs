//! Monte Carlo estimate of the discounted payoff of a band policy.
//!
//! Each path is an Euler scheme for `dX = -μ dt - σ dW` with exit detection
//! at the end of every step. On exit the discounted intervention cost is
//! charged at the step-end time and the state is reset to `x_star`; the
//! running payoff uses the left-point rule. Path `i` draws from ChaCha8
//! stream `i` of the run seed, so results do not depend on how paths are
//! scheduled across threads, and configs that share a seed see the same
//! Brownian increments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};
use crate::policy::ThresholdPolicy;

const NORMAL_BATCH: usize = 512;

/// How each intervention is priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    /// Constant `c`.
    #[default]
    Fixed,
    /// `c + λ Φ(x)` at the pre-jump state.
    StateDependent,
}

impl CostModel {
    pub fn for_params(params: &ModelParams) -> Self {
        if params.lambda > 0.0 {
            CostModel::StateDependent
        } else {
            CostModel::Fixed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_paths: u64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub initial_x: f64,
    pub policy: ThresholdPolicy,
    pub cost_model: CostModel,
    pub max_interventions_per_path: u64,
    /// Run paths on the rayon pool; results are identical either way.
    pub parallel: bool,
}

impl SimulationConfig {
    pub fn new(policy: ThresholdPolicy, initial_x: f64) -> Self {
        Self {
            n_paths: 10_000,
            dt: 1e-3,
            horizon: 300.0,
            seed: 0,
            initial_x,
            policy,
            cost_model: CostModel::Fixed,
            max_interventions_per_path: 10_000_000,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be >= 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must be > 0 (got {})",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be > 0 (got {})",
                self.horizon
            )));
        }
        if !self.initial_x.is_finite() {
            return Err(Error::InvalidConfig("initial_x must be finite".into()));
        }
        if self.max_interventions_per_path == 0 {
            return Err(Error::InvalidConfig(
                "max_interventions_per_path must be >= 1".into(),
            ));
        }
        self.policy.validate()
    }

    pub fn steps(&self) -> u64 {
        ((self.horizon / self.dt).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    /// Mean discounted payoff over paths.
    pub j_estimate: f64,
    pub std_error: f64,
    /// `y_v/ρ · e^{-ρT}`, the most the truncated tail can be worth.
    pub tail_bound: f64,
    pub interventions_per_path: f64,
    /// Mean of `min(τ₁, T)`.
    pub mean_first_exit_time: f64,
    pub n_paths: u64,
    pub steps_per_path: u64,
    pub seed: u64,
    pub max_path_payoff: f64,
    /// Extremes of the charged (undiscounted) costs; `None` without
    /// interventions.
    pub min_charged_cost: Option<f64>,
    pub max_charged_cost: Option<f64>,
}

/// One reset of the state by the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionEvent {
    pub time: f64,
    pub pre_state: f64,
    pub post_state: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    payoff: f64,
    interventions: u64,
    first_exit: f64,
    min_cost: f64,
    max_cost: f64,
}

struct Engine {
    model: Model,
    policy: ThresholdPolicy,
    cost_model: CostModel,
    seed: u64,
    steps: u64,
    dt: f64,
    initial_x: f64,
    cap: u64,
    /// Fine normals summed into each step's increment.
    substeps: u32,
}

impl Engine {
    fn new(params: &ModelParams, config: &SimulationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            model: Model::new(*params)?,
            policy: config.policy,
            cost_model: config.cost_model,
            seed: config.seed,
            steps: config.steps(),
            dt: config.dt,
            initial_x: config.initial_x,
            cap: config.max_interventions_per_path,
            substeps: 1,
        })
    }

    fn rng(&self, path: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path);
        rng
    }

    #[inline]
    fn cost(&self, x: f64) -> f64 {
        match self.cost_model {
            CostModel::Fixed => self.model.params().c,
            CostModel::StateDependent => self.model.intervention_cost(x),
        }
    }

    fn run_path<F: FnMut(InterventionEvent)>(
        &self,
        path: u64,
        mut on_event: F,
    ) -> Result<PathOutcome> {
        let p = self.model.params();
        let dt = self.dt;
        let decay = (-p.rho * dt).exp();
        let shock = p.sigma * dt.sqrt();
        let drift = -p.mu * dt;
        let mut rng = self.rng(path);

        let mut out = PathOutcome {
            payoff: 0.0,
            interventions: 0,
            first_exit: self.steps as f64 * dt,
            min_cost: f64::INFINITY,
            max_cost: f64::NEG_INFINITY,
        };
        let mut x = self.initial_x;
        let mut disc = 1.0;
        let mut intervene = |x: f64, time: f64, disc: f64, out: &mut PathOutcome| -> Result<()> {
            let cost = self.cost(x);
            out.payoff -= disc * cost;
            if out.interventions == 0 {
                out.first_exit = time;
            }
            out.interventions += 1;
            out.min_cost = out.min_cost.min(cost);
            out.max_cost = out.max_cost.max(cost);
            on_event(InterventionEvent {
                time,
                pre_state: x,
                post_state: self.policy.x_star,
                cost,
            });
            if out.interventions > self.cap {
                return Err(Error::InterventionCap {
                    path,
                    cap: self.cap,
                });
            }
            Ok(())
        };

        if !self.policy.contains(x) {
            intervene(x, 0.0, disc, &mut out)?;
            x = self.policy.x_star;
        }
        let mut running = 0.0;
        let mut normals = [0.0f64; NORMAL_BATCH];
        let mut k = 0u64;
        while k < self.steps {
            let n = (self.steps - k).min(NORMAL_BATCH as u64) as usize;
            if self.substeps == 1 {
                for z in &mut normals[..n] {
                    *z = rng.sample(StandardNormal);
                }
            } else {
                let scale = 1.0 / (self.substeps as f64).sqrt();
                for z in &mut normals[..n] {
                    let mut sum = 0.0;
                    for _ in 0..self.substeps {
                        sum += rng.sample::<f64, _>(StandardNormal);
                    }
                    *z = sum * scale;
                }
            }
            for &z in &normals[..n] {
                running += disc * self.model.running_payoff(x);
                x += drift - shock * z;
                disc *= decay;
                k += 1;
                if !self.policy.contains(x) {
                    intervene(x, k as f64 * dt, disc, &mut out)?;
                    x = self.policy.x_star;
                }
            }
        }
        out.payoff += running * dt;
        Ok(out)
    }

    fn run_all(&self, n_paths: u64, parallel: bool) -> Result<Vec<PathOutcome>> {
        if parallel {
            (0..n_paths)
                .into_par_iter()
                .map(|i| self.run_path(i, |_| {}))
                .collect()
        } else {
            (0..n_paths).map(|i| self.run_path(i, |_| {})).collect()
        }
    }
}

/// Sum in a fixed pairwise order, independent of how values were produced.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        n if n <= 16 => v.iter().sum(),
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Mean and standard error of the mean.
fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn report(model: &Model, config: &SimulationConfig, paths: &[PathOutcome]) -> SimulationReport {
    let payoffs: Vec<f64> = paths.iter().map(|p| p.payoff).collect();
    let (j_estimate, std_error) = mean_and_se(&payoffs);
    let n = paths.len() as f64;
    let interventions: Vec<f64> = paths.iter().map(|p| p.interventions as f64).collect();
    let exits: Vec<f64> = paths.iter().map(|p| p.first_exit).collect();
    let horizon = config.steps() as f64 * config.dt;
    let min_cost = paths
        .iter()
        .map(|p| p.min_cost)
        .fold(f64::INFINITY, f64::min);
    let max_cost = paths
        .iter()
        .map(|p| p.max_cost)
        .fold(f64::NEG_INFINITY, f64::max);
    SimulationReport {
        j_estimate,
        std_error,
        tail_bound: model.static_value() * (-model.params().rho * horizon).exp(),
        interventions_per_path: pairwise_sum(&interventions) / n,
        mean_first_exit_time: pairwise_sum(&exits) / n,
        n_paths: config.n_paths,
        steps_per_path: config.steps(),
        seed: config.seed,
        max_path_payoff: payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_charged_cost: min_cost.is_finite().then_some(min_cost),
        max_charged_cost: max_cost.is_finite().then_some(max_cost),
    }
}

/// Estimates `J(x; u) = E[∫ e^{-ρt} R(X_t) dt - Σ e^{-ρτ_k} K(X_{τ_k-})]`
/// truncated at the horizon.
pub fn simulate(params: &ModelParams, config: &SimulationConfig) -> Result<SimulationReport> {
    let engine = Engine::new(params, config)?;
    let paths = engine.run_all(config.n_paths, config.parallel)?;
    Ok(report(&engine.model, config, &paths))
}

/// Replays one path and returns its interventions and discounted payoff.
pub fn trace_path(
    params: &ModelParams,
    config: &SimulationConfig,
    path: u64,
) -> Result<(Vec<InterventionEvent>, f64)> {
    let engine = Engine::new(params, config)?;
    let mut events = Vec::new();
    let out = engine.run_path(path, |e| events.push(e))?;
    Ok((events, out.payoff))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub dt: f64,
    pub report: SimulationReport,
    /// `J(dt) - J(finest)` on the same Brownian paths.
    pub diff_to_finest: f64,
    pub diff_std_error: f64,
}

/// Runs the config at step sizes `factor · dt` for each factor, building
/// every coarse increment from the fine normals of the same path, so the
/// levels differ only through discretization. `factors` must contain 1.
pub fn refine_time_step(
    params: &ModelParams,
    config: &SimulationConfig,
    factors: &[u32],
) -> Result<Vec<RefinementLevel>> {
    if !factors.contains(&1) || factors.contains(&0) {
        return Err(Error::InvalidConfig(
            "factors must be >= 1 and include 1".into(),
        ));
    }
    let fine_steps = config.steps();
    let mut runs = Vec::with_capacity(factors.len());
    for &m in factors {
        if !fine_steps.is_multiple_of(m as u64) {
            return Err(Error::InvalidConfig(format!(
                "factor {m} does not divide the {fine_steps} fine steps"
            )));
        }
        let level = SimulationConfig {
            dt: config.dt * m as f64,
            ..config.clone()
        };
        let mut engine = Engine::new(params, &level)?;
        engine.substeps = m;
        engine.steps = fine_steps / m as u64;
        let paths = engine.run_all(level.n_paths, level.parallel)?;
        runs.push((level.dt, report(&engine.model, &level, &paths), paths));
    }
    let finest = factors.iter().position(|&m| m == 1).unwrap();
    let fine: Vec<f64> = runs[finest].2.iter().map(|p| p.payoff).collect();
    Ok(runs
        .into_iter()
        .map(|(dt, report, paths)| {
            let d: Vec<f64> = paths.iter().zip(&fine).map(|(p, f)| p.payoff - f).collect();
            let (diff_to_finest, diff_std_error) = mean_and_se(&d);
            RefinementLevel {
                dt,
                report,
                diff_to_finest,
                diff_std_error,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDifference {
    pub first: usize,
    pub second: usize,
    /// `J_first - J_second` on common random numbers.
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub reports: Vec<SimulationReport>,
    /// Config indices by decreasing estimate.
    pub ranking: Vec<usize>,
    pub differences: Vec<PairwiseDifference>,
}

/// Runs several policies on common random numbers. All configs must share
/// seed, path count, step size and horizon.
pub fn compare_policies(
    params: &ModelParams,
    configs: &[SimulationConfig],
) -> Result<PolicyComparison> {
    let Some(first) = configs.first() else {
        return Err(Error::MismatchedConfigs("no configs given".into()));
    };
    for (i, c) in configs.iter().enumerate().skip(1) {
        if c.seed != first.seed
            || c.n_paths != first.n_paths
            || c.dt != first.dt
            || c.horizon != first.horizon
        {
            return Err(Error::MismatchedConfigs(format!(
                "config {i} differs from config 0 in seed, n_paths, dt or horizon"
            )));
        }
    }

    let mut reports = Vec::with_capacity(configs.len());
    let mut payoffs = Vec::with_capacity(configs.len());
    for c in configs {
        let engine = Engine::new(params, c)?;
        let paths = engine.run_all(c.n_paths, c.parallel)?;
        reports.push(report(&engine.model, c, &paths));
        payoffs.push(paths.iter().map(|p| p.payoff).collect::<Vec<_>>());
    }

    let mut differences = Vec::new();
    for i in 0..configs.len() {
        for j in i + 1..configs.len() {
            let d: Vec<f64> = payoffs[i]
                .iter()
                .zip(&payoffs[j])
                .map(|(a, b)| a - b)
                .collect();
            let (mean, std_error) = mean_and_se(&d);
            differences.push(PairwiseDifference {
                first: i,
                second: j,
                mean,
                std_error,
            });
        }
    }
    let mut ranking: Vec<usize> = (0..configs.len()).collect();
    ranking.sort_by(|&a, &b| reports[b].j_estimate.total_cmp(&reports[a].j_estimate));

    Ok(PolicyComparison {
        reports,
        ranking,
        differences,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeStats {
    pub n_paths: u64,
    /// Mean of `min(τ₁, T)`.
    pub mean: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    /// Estimate of `E[e^{-ρ τ₁}]`; censored paths contribute 0.
    pub discounted_mean: f64,
    /// Paths with no exit before the horizon.
    pub censored: u64,
}

/// Distribution of the first exit time from the policy band started at
/// `initial_x`, on the same random streams as [`simulate`].
pub fn first_exit_time_stats(
    params: &ModelParams,
    config: &SimulationConfig,
) -> Result<ExitTimeStats> {
    let engine = Engine::new(params, config)?;
    let p = *engine.model.params();
    let shock = p.sigma * config.dt.sqrt();
    let drift = -p.mu * config.dt;
    let horizon = engine.steps as f64 * config.dt;
    let exit_of = |path: u64| -> Option<f64> {
        let mut x = config.initial_x;
        if !config.policy.contains(x) {
            return Some(0.0);
        }
        let mut rng = engine.rng(path);
        for k in 0..engine.steps {
            let z: f64 = rng.sample(StandardNormal);
            x += drift - shock * z;
            if !config.policy.contains(x) {
                return Some((k + 1) as f64 * config.dt);
            }
        }
        None
    };
    let exits: Vec<Option<f64>> = if config.parallel {
        (0..config.n_paths).into_par_iter().map(exit_of).collect()
    } else {
        (0..config.n_paths).map(exit_of).collect()
    };

    let n = exits.len() as f64;
    let mut truncated: Vec<f64> = exits.iter().map(|e| e.unwrap_or(horizon)).collect();
    let mean = pairwise_sum(&truncated) / n;
    let discounted: Vec<f64> = exits
        .iter()
        .map(|e| e.map_or(0.0, |t| (-p.rho * t).exp()))
        .collect();
    let discounted_mean = pairwise_sum(&discounted) / n;
    truncated.sort_by(f64::total_cmp);
    let q = |f: f64| truncated[((f * (truncated.len() - 1) as f64).round()) as usize];
    Ok(ExitTimeStats {
        n_paths: config.n_paths,
        mean,
        q10: q(0.1),
        median: q(0.5),
        q90: q(0.9),
        discounted_mean,
        censored: exits.iter().filter(|e| e.is_none()).count() as u64,
    })
}
