//! Problem constants, the derived payoff coefficients and the pointwise
//! market-share / payoff / intervention-cost functions.
//!
//! The spread `x` is final price minus wholesale price. The market share is
//! truncated linear, `1` for `x <= 0` and `0` for `x >= delta_cap`, and the
//! running payoff `R(x) = x Φ(x) - b Φ(x)^2` is a concave parabola on
//! `[0, delta_cap]` with vertex `(x_v, y_v)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem constants. `mu` and `lambda` are zero for the symmetric model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Discount rate per unit time.
    pub rho: f64,
    /// Volatility of the wholesale price.
    pub sigma: f64,
    /// Operating-cost scale.
    pub b: f64,
    /// Spread at which the market share reaches zero.
    #[serde(rename = "delta")]
    pub delta_cap: f64,
    /// Fixed intervention cost.
    pub c: f64,
    /// Drift of the wholesale price.
    #[serde(default)]
    pub mu: f64,
    /// Scale of the market-share dependent intervention cost.
    #[serde(default)]
    pub lambda: f64,
}

impl ModelParams {
    /// Symmetric-model parameters (`mu = lambda = 0`).
    pub fn base(rho: f64, sigma: f64, b: f64, delta_cap: f64, c: f64) -> Self {
        Self {
            rho,
            sigma,
            b,
            delta_cap,
            c,
            mu: 0.0,
            lambda: 0.0,
        }
    }

    pub fn extended(
        rho: f64,
        mu: f64,
        sigma: f64,
        b: f64,
        c: f64,
        lambda: f64,
        delta_cap: f64,
    ) -> Self {
        Self {
            rho,
            sigma,
            b,
            delta_cap,
            c,
            mu,
            lambda,
        }
    }

    pub fn with_cost(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    /// Checks every bound, reporting the first violated one.
    pub fn validate(&self) -> Result<()> {
        positive("rho", self.rho)?;
        positive("sigma", self.sigma)?;
        non_negative("b", self.b)?;
        positive("delta", self.delta_cap)?;
        positive("c", self.c)?;
        non_negative("mu", self.mu)?;
        non_negative("lambda", self.lambda)?;
        Ok(())
    }

    pub fn is_base(&self) -> bool {
        self.mu == 0.0 && self.lambda == 0.0
    }

    pub(crate) fn require_base(&self) -> Result<()> {
        if self.is_base() {
            Ok(())
        } else {
            Err(Error::NotBaseModel {
                mu: self.mu,
                lambda: self.lambda,
            })
        }
    }

    /// `K(x) = c + λ Φ(x)`, charged at the pre-jump state.
    pub fn intervention_cost(&self, x: f64) -> f64 {
        self.c + self.lambda * share(x, self.delta_cap)
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            constraint: "finite and > 0",
        })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            constraint: "finite and >= 0",
        })
    }
}

/// Constants derived once from [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffCoefficients {
    /// Concavity of the payoff parabola.
    pub alpha: f64,
    /// Static optimal spread (parabola vertex).
    pub x_v: f64,
    /// Maximal running payoff.
    pub y_v: f64,
    /// Smaller zero of the payoff on `[0, delta_cap]`.
    pub x_z: f64,
    /// Market share at `x_v`.
    pub phi_v: f64,
    /// `sqrt(2 rho / sigma^2)`.
    pub theta: f64,
    pub k2: f64,
    pub k0: f64,
    /// Supremum of admissible exponential coefficients, `k2 / theta^2`.
    pub a_bar: f64,
    /// Positive characteristic root of `(σ²/2) m² - μ m - ρ = 0`.
    pub m1: f64,
    /// Negative characteristic root.
    pub m2: f64,
    pub k1: f64,
    pub k0_tilde: f64,
}

/// Evaluates every derived coefficient in closed form.
pub fn derive_coefficients(params: &ModelParams) -> Result<PayoffCoefficients> {
    params.validate()?;
    let ModelParams {
        rho,
        sigma,
        b,
        delta_cap: d,
        mu,
        ..
    } = *params;
    let s2 = sigma * sigma;

    let alpha = (d + b) / (d * d);
    let x_v = d * (d + 2.0 * b) / (2.0 * (d + b));
    let y_v = d * d / (4.0 * (d + b));
    let x_z = b * d / (d + b);
    let phi_v = d / (2.0 * (d + b));

    let theta = (2.0 * rho / s2).sqrt();
    let k2 = alpha / rho;
    let k0 = y_v / rho - 2.0 * k2 / (theta * theta);
    let a_bar = k2 / (theta * theta);

    let disc = (mu * mu + 2.0 * rho * s2).sqrt();
    let (m1, m2) = if mu == 0.0 {
        (theta, -theta)
    } else {
        // m1 * m2 = -2 rho / sigma^2 avoids cancellation in mu - disc.
        let m1 = (mu + disc) / s2;
        (m1, -2.0 * rho / (s2 * m1))
    };
    let k1 = 2.0 * alpha * x_v / rho + 2.0 * alpha * mu / (rho * rho);
    let k0_tilde = (alpha * x_v * x_v - y_v) / rho
        + alpha * (s2 + 2.0 * mu * x_v) / (rho * rho)
        + 2.0 * alpha * mu * mu / (rho * rho * rho);

    Ok(PayoffCoefficients {
        alpha,
        x_v,
        y_v,
        x_z,
        phi_v,
        theta,
        k2,
        k0,
        a_bar,
        m1,
        m2,
        k1,
        k0_tilde,
    })
}

fn share(x: f64, delta_cap: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < delta_cap {
        1.0 - x / delta_cap
    } else {
        0.0
    }
}

/// Validated parameters bundled with their cached coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    params: ModelParams,
    coeffs: PayoffCoefficients,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        let coeffs = derive_coefficients(&params)?;
        Ok(Self { params, coeffs })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn coeffs(&self) -> &PayoffCoefficients {
        &self.coeffs
    }

    /// Φ(x), truncated linear between 1 at `x <= 0` and 0 at `x >= Δ`.
    pub fn market_share(&self, x: f64) -> f64 {
        share(x, self.params.delta_cap)
    }

    /// R(x). The boundary `x = Δ` takes the parabola branch; both branches
    /// agree there.
    pub fn running_payoff(&self, x: f64) -> f64 {
        if x < 0.0 {
            x - self.params.b
        } else if x <= self.params.delta_cap {
            let z = x - self.coeffs.x_v;
            -self.coeffs.alpha * z * z + self.coeffs.y_v
        } else {
            0.0
        }
    }

    pub fn intervention_cost(&self, x: f64) -> f64 {
        self.params.intervention_cost(x)
    }

    /// Discounted value of holding the static optimum forever, `y_v / ρ`.
    pub fn static_value(&self) -> f64 {
        self.coeffs.y_v / self.params.rho
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn problem1() -> ModelParams {
        ModelParams::base(0.03, 0.2, 0.0, 5.0, 2.0)
    }

    #[test]
    fn zero_b_collapses_the_parabola() {
        let k = derive_coefficients(&problem1()).unwrap();
        assert_relative_eq!(k.x_v, 2.5, epsilon = 1e-15);
        assert_relative_eq!(k.y_v, 1.25, epsilon = 1e-15);
        assert_relative_eq!(k.alpha, 0.2, epsilon = 1e-15);
        assert_relative_eq!(k.phi_v, 0.5, epsilon = 1e-15);
        assert_eq!(k.x_z, 0.0);
    }

    #[test]
    fn problem1_ode_coefficients() {
        // Frozen from a 40-digit evaluation.
        let k = derive_coefficients(&problem1()).unwrap();
        assert_relative_eq!(k.theta, 1.224_744_871_391_59, max_relative = 1e-13);
        assert_relative_eq!(k.k2, 6.666_666_666_666_67, max_relative = 1e-13);
        assert_relative_eq!(k.k0, 32.777_777_777_777_8, max_relative = 1e-13);
        assert_relative_eq!(k.a_bar, 4.444_444_444_444_44, max_relative = 1e-13);
        assert_eq!(k.m1, k.theta);
        assert_eq!(k.m2, -k.theta);
    }

    #[test]
    fn problem2_vertex_and_share() {
        let k = derive_coefficients(&ModelParams::base(0.05, 0.3, 3.0, 5.0, 0.5)).unwrap();
        assert_relative_eq!(k.x_v, 55.0 / 16.0, epsilon = 1e-14);
        assert_relative_eq!(k.phi_v, 5.0 / 16.0, epsilon = 1e-15);
        assert!(k.phi_v > 0.0 && k.phi_v < 0.5);
        assert!(k.x_v > 0.0 && k.x_v < 5.0);
    }

    #[test]
    fn characteristic_roots_with_drift() {
        let p = ModelParams::extended(0.03, 0.2, 0.25, 0.4, 1.5, 0.0, 5.0);
        let k = derive_coefficients(&p).unwrap();
        assert!(k.m1 > 0.0 && k.m2 < 0.0);
        for m in [k.m1, k.m2] {
            let q = 0.5 * p.sigma * p.sigma * m * m - p.mu * m - p.rho;
            assert!(q.abs() < 1e-12, "{q}");
        }
    }

    #[test]
    fn validation_names_the_bound() {
        let err = derive_coefficients(&problem1().with_cost(-1.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "c", .. }));
        let mut p = problem1();
        p.sigma = 0.0;
        assert!(matches!(
            derive_coefficients(&p),
            Err(Error::InvalidParameter { name: "sigma", .. })
        ));
        p = problem1();
        p.b = -0.1;
        assert!(matches!(
            derive_coefficients(&p),
            Err(Error::InvalidParameter { name: "b", .. })
        ));
        p = problem1();
        p.rho = f64::NAN;
        assert!(derive_coefficients(&p).is_err());
    }

    #[test]
    fn market_share_branches() {
        let m = Model::new(problem1()).unwrap();
        assert_eq!(m.market_share(0.0), 1.0);
        assert_eq!(m.market_share(-3.0), 1.0);
        assert_eq!(m.market_share(5.0), 0.0);
        assert_eq!(m.market_share(2.5), 0.5);
        assert_eq!(m.market_share(40.0), 0.0);
    }

    #[test]
    fn running_payoff_landmarks() {
        let p = ModelParams::base(0.05, 0.3, 0.4, 5.0, 0.5);
        let m = Model::new(p).unwrap();
        let k = *m.coeffs();
        assert_relative_eq!(m.running_payoff(k.x_v), k.y_v, epsilon = 1e-15);
        assert!(m.running_payoff(k.x_z).abs() < 1e-14);
        assert!(m.running_payoff(5.0).abs() < 1e-14);
        assert_relative_eq!(m.running_payoff(-1.0), -1.4, epsilon = 1e-15);
        // matches x Φ - b Φ² on the middle branch
        for x in [0.3, 1.7, 4.2] {
            let phi = m.market_share(x);
            assert_relative_eq!(
                m.running_payoff(x),
                x * phi - 0.4 * phi * phi,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn intervention_cost_branches() {
        let mut p = problem1();
        assert_eq!(p.intervention_cost(1.3), 2.0);
        p.c = 1.0;
        p.lambda = 0.5;
        assert_eq!(p.intervention_cost(2.5), 1.25);
        assert_eq!(p.intervention_cost(-1.0), 1.5);
        assert_eq!(p.intervention_cost(0.0), 1.5);
        assert_eq!(p.intervention_cost(7.0), 1.0);
    }

    #[test]
    fn vertex_moves_with_operating_cost() {
        let mut prev: Option<PayoffCoefficients> = None;
        for i in 0..40 {
            let b = 0.25 * i as f64;
            let k = derive_coefficients(&ModelParams::base(0.03, 0.2, b, 5.0, 1.0)).unwrap();
            if let Some(p) = prev {
                assert!(k.x_v > p.x_v);
                assert!(k.y_v < p.y_v);
                assert!(k.x_z > p.x_z);
                assert!(k.phi_v < p.phi_v);
            }
            prev = Some(k);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn payoff_continuous_and_bounded(b in 0.0f64..5.0, d in 0.5f64..10.0, x in -20.0f64..30.0) {
                let m = Model::new(ModelParams::base(0.03, 0.2, b, d, 1.0)).unwrap();
                let k = *m.coeffs();
                prop_assert!(m.running_payoff(x) <= k.y_v + 1e-12);
                for edge in [0.0, d] {
                    let gap = (m.running_payoff(edge - 1e-12) - m.running_payoff(edge + 1e-12)).abs();
                    prop_assert!(gap < 1e-9, "jump {} at {}", gap, edge);
                }
            }

            #[test]
            fn share_monotone_in_unit_interval(d in 0.5f64..10.0, x in -20.0f64..30.0, h in 0.0f64..5.0) {
                let m = Model::new(ModelParams::base(0.03, 0.2, 0.0, d, 1.0)).unwrap();
                let (a, b) = (m.market_share(x), m.market_share(x + h));
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(b <= a);
            }
        }
    }
}
