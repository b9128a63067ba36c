use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Band policy: let the spread diffuse inside `(x_low, x_high)` and reset it
/// to `x_star` as soon as it leaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdPolicy {
    pub x_low: f64,
    pub x_star: f64,
    pub x_high: f64,
}

impl ThresholdPolicy {
    pub fn new(x_low: f64, x_star: f64, x_high: f64) -> Result<Self> {
        let p = Self {
            x_low,
            x_star,
            x_high,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.x_low.is_finite() && self.x_star.is_finite() && self.x_high.is_finite();
        if finite && self.x_low < self.x_star && self.x_star < self.x_high {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "policy thresholds must satisfy x_low < x_star < x_high (got {}, {}, {})",
                self.x_low, self.x_star, self.x_high
            )))
        }
    }

    /// Whether the state lies in the open continuation band.
    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x > self.x_low && x < self.x_high
    }

    pub fn shifted(&self, by: f64) -> Self {
        Self {
            x_low: self.x_low + by,
            x_star: self.x_star + by,
            x_high: self.x_high + by,
        }
    }

    pub fn widened(&self, by: f64) -> Self {
        Self {
            x_low: self.x_low - by,
            x_star: self.x_star,
            x_high: self.x_high + by,
        }
    }
}

/// Which part of the state space a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Continuation,
    Action,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Continuation => "continuation",
            Region::Action => "action",
        }
    }
}
