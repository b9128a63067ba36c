//! Run configuration documents and the built-in presets.

use std::path::Path;

use retail_impulse::analysis::log_spaced_costs;
use retail_impulse::{ModelParams, ThresholdPolicy};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const PRESETS: [(&str, &str); 4] = [
    ("problem1", include_str!("../presets/problem1.json")),
    ("problem2", include_str!("../presets/problem2.json")),
    ("problem3", include_str!("../presets/problem3.json")),
    ("problem4", include_str!("../presets/problem4.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub solve: SolveBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<CostsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,

    // Output sections of a solve document, accepted so the document can be
    // fed back as a config. Their contents are recomputed, never read.
    #[serde(default, skip_serializing)]
    pub kind: Option<serde_json::Value>,
    #[serde(default, skip_serializing)]
    pub solution: Option<serde_json::Value>,
    #[serde(default, skip_serializing)]
    pub coefficients: Option<serde_json::Value>,
    #[serde(default, skip_serializing)]
    pub c_bar: Option<serde_json::Value>,
    #[serde(default, skip_serializing)]
    pub condition_report: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveBlock {
    /// Use the five-equation solver even when `mu = lambda = 0`.
    #[serde(default)]
    pub extended: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qvi_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridBlock {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(CliError::Config(format!(
                "grid: need finite min <= max (got {} .. {})",
                self.min, self.max
            )));
        }
        if self.count == 0 || (self.count == 1 && self.min != self.max) {
            return Err(CliError::Config(format!(
                "grid: count {} cannot span [{}, {}]",
                self.count, self.min, self.max
            )));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|i| {
                if i == self.count - 1 {
                    self.max
                } else {
                    self.min + step * i as f64
                }
            })
            .collect())
    }
}

/// Either an explicit list or `count` log-spaced costs on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl CostsBlock {
    pub fn costs(&self) -> Result<Vec<f64>, CliError> {
        match (&self.values, self.lo, self.hi, self.count) {
            (Some(v), None, None, None) => {
                if v.is_empty() {
                    return Err(CliError::Config("costs.values is empty".into()));
                }
                Ok(v.clone())
            }
            (None, Some(lo), Some(hi), Some(count)) => {
                if !(lo > 0.0 && hi >= lo && count >= 1 && hi.is_finite()) {
                    return Err(CliError::Config(format!(
                        "costs: need 0 < lo <= hi and count >= 1 (got lo={lo}, hi={hi}, count={count})"
                    )));
                }
                Ok(log_spaced_costs(lo, hi, count))
            }
            _ => Err(CliError::Config(
                "costs: give either `values` or all of `lo`, `hi`, `count`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub n_paths: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub initial_x: Option<f64>,
    /// Defaults to the solved optimal band.
    pub policy: Option<ThresholdPolicy>,
    pub parallel: Option<bool>,
    pub max_interventions_per_path: Option<u64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset {name:?}; expected one of {}",
                preset_names().join(", ")
            ))
        })?;
        Self::parse(text)
    }

    pub fn wants_extended(&self) -> bool {
        self.solve.extended || !self.model.is_base()
    }
}
