//! Symmetric model (`mu = lambda = 0`).
//!
//! The value function is `φ_A(x) = 2A cosh(θ(x - x_v)) - k2 (x - x_v)^2 + k0`
//! on the continuation band `(x_v - ȳ, x_v + ȳ)` and the constant
//! `φ_A(x_v) - c` outside it. The pair `(A, ȳ)` solves
//!
//! ```text
//! 2Aθ sinh(θȳ) - 2 k2 ȳ            = 0
//! 2A (cosh(θȳ) - 1) - k2 ȳ² + c    = 0
//! ```
//!
//! Eliminating `A` leaves the scalar equation `ξ(ȳ) = c` with `ξ` strictly
//! increasing, so the solver bisects on `ξ` and recovers `A` in closed form.
//! The other elimination, `g(A) = c`, is kept as an independent check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_coefficients, Model, ModelParams, PayoffCoefficients};
use crate::policy::{Region, ThresholdPolicy};
use crate::qvi::{QviPoint, QviReport};
use crate::roots::{bisect, BisectionTol};

/// `u - tanh(u)` without cancellation for small `u`.
fn u_minus_tanh(u: f64) -> f64 {
    if u < 0.02 {
        let u2 = u * u;
        u * u2 * (1.0 / 3.0 - u2 * (2.0 / 15.0 - u2 * (17.0 / 315.0 - u2 * 62.0 / 2835.0)))
    } else {
        u - u.tanh()
    }
}

fn xi_unchecked(y: f64, k: &PayoffCoefficients) -> f64 {
    // (e^{θy} - 1)² / (e^{2θy} - 1) = tanh(θy/2)
    let u = 0.5 * k.theta * y;
    k.k2 * y * (2.0 / k.theta) * u_minus_tanh(u)
}

/// `ξ(y) = k2 y² - (2 k2 / θ) tanh(θy/2) y`. Strictly increasing for `y > 0`.
pub fn xi(y: f64, coeffs: &PayoffCoefficients) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Domain {
            name: "y",
            value: y,
            domain: "(0, inf)".into(),
        });
    }
    Ok(xi_unchecked(y, coeffs))
}

/// `ξ'(y) = k2 y (1 + t²) - (2 k2/θ) t` with `t = tanh(θy/2)`.
pub fn xi_derivative(y: f64, coeffs: &PayoffCoefficients) -> f64 {
    let t = (0.5 * coeffs.theta * y).tanh();
    coeffs.k2 * y * (1.0 + t * t) - 2.0 * coeffs.k2 / coeffs.theta * t
}

/// `h_A(y) = 2Aθ sinh(θy) - 2 k2 y`.
fn h(a: f64, y: f64, k: &PayoffCoefficients) -> f64 {
    2.0 * a * k.theta * (k.theta * y).sinh() - 2.0 * k.k2 * y
}

fn check_a(a: f64, coeffs: &PayoffCoefficients) -> Result<()> {
    if a > 0.0 && a < coeffs.a_bar {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "A",
            value: a,
            domain: format!("(0, {})", coeffs.a_bar),
        })
    }
}

/// The unique positive zero of `h_A`, defined for `0 < A < Ā`.
pub fn ybar_of_a(a: f64, coeffs: &PayoffCoefficients) -> Result<f64> {
    check_a(a, coeffs)?;
    // h_A decreases up to y_min, then increases to +inf.
    let y_min = (coeffs.a_bar / a).acosh() / coeffs.theta;
    let mut hi = (2.0 * y_min).max(1.0 / coeffs.theta);
    while h(a, hi, coeffs) <= 0.0 {
        hi *= 2.0;
    }
    let tol = BisectionTol {
        width: 1e-15 * hi.max(1.0),
        max_iter: 400,
    };
    bisect(|y| h(a, y, coeffs), y_min, hi, tol)
}

/// `g(A) = k2 ȳ(A)² - 2A (cosh(θ ȳ(A)) - 1)`, strictly decreasing on `(0, Ā)`.
pub fn g_of_a(a: f64, coeffs: &PayoffCoefficients) -> Result<f64> {
    let y = ybar_of_a(a, coeffs)?;
    let s = (0.5 * coeffs.theta * y).sinh();
    Ok(coeffs.k2 * y * y - 4.0 * a * s * s)
}

/// `g'(A) = -(e^{θȳ} - 1)² / e^{θȳ}` evaluated at a known `ȳ = ȳ(A)`.
pub fn g_derivative_at(y_bar: f64, coeffs: &PayoffCoefficients) -> f64 {
    let s = (0.5 * coeffs.theta * y_bar).sinh();
    -4.0 * s * s
}

/// Solution of the symmetric smooth-fit system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseSolution {
    pub a: f64,
    pub y_bar: f64,
    pub x_low: f64,
    pub x_star: f64,
    pub x_high: f64,
    /// Largest admissible cost, `ξ(Δ - x_v)`.
    pub c_bar: f64,
    pub coeffs: PayoffCoefficients,
    pub params: ModelParams,
}

/// `ξ(Δ - x_v)`, the cost at which the band reaches `Δ`.
pub fn cost_threshold(params: &ModelParams) -> Result<f64> {
    let k = derive_coefficients(params)?;
    xi(params.delta_cap - k.x_v, &k)
}

pub fn solve_base(params: &ModelParams) -> Result<BaseSolution> {
    params.validate()?;
    params.require_base()?;
    let coeffs = derive_coefficients(params)?;
    let y_max = params.delta_cap - coeffs.x_v;
    let c_bar = xi_unchecked(y_max, &coeffs);
    let c = params.c;
    if !(c < c_bar) {
        return Err(Error::CostTooLarge { c, c_bar });
    }

    let y_bar = bisect(
        |y| xi_unchecked(y, &coeffs) - c,
        0.0,
        y_max,
        BisectionTol::default(),
    )?;
    let a = coeffs.k2 * y_bar / (coeffs.theta * (coeffs.theta * y_bar).sinh());

    Ok(BaseSolution {
        a,
        y_bar,
        x_low: coeffs.x_v - y_bar,
        x_star: coeffs.x_v,
        x_high: coeffs.x_v + y_bar,
        c_bar,
        coeffs,
        params: *params,
    })
}

impl BaseSolution {
    /// Residuals of the two smooth-fit equations in `(A, ȳ)`.
    pub fn system_residuals(&self) -> [f64; 2] {
        let k = &self.coeffs;
        let (a, y) = (self.a, self.y_bar);
        let th = k.theta;
        [
            a * th * (th * y).exp() - a * th * (-th * y).exp() - 2.0 * k.k2 * y,
            a * (th * y).exp() + a * (-th * y).exp() - k.k2 * y * y - 2.0 * a + self.params.c,
        ]
    }

    /// Residuals of `φ'(x̄) = 0, φ'(x̲) = 0, φ(x̄) = φ(x*) - c, φ(x̲) = φ(x*) - c`.
    pub fn pasting_residuals(&self) -> [f64; 4] {
        let vf = self.value_function();
        let top = vf.phi(self.x_star) - self.params.c;
        [
            vf.phi_d1(self.x_high),
            vf.phi_d1(self.x_low),
            vf.phi(self.x_high) - top,
            vf.phi(self.x_low) - top,
        ]
    }

    pub fn value_function(&self) -> ValueFunction {
        ValueFunction { solution: *self }
    }

    pub fn optimal_policy(&self) -> ThresholdPolicy {
        ThresholdPolicy {
            x_low: self.x_low,
            x_star: self.x_star,
            x_high: self.x_high,
        }
    }

    pub fn model(&self) -> Model {
        Model::new(self.params).expect("solution parameters were validated")
    }
}

pub fn optimal_policy(sol: &BaseSolution) -> ThresholdPolicy {
    sol.optimal_policy()
}

/// Piecewise value function of a solved symmetric model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueFunction {
    pub solution: BaseSolution,
}

impl ValueFunction {
    #[inline]
    fn z(&self, x: f64) -> f64 {
        x - self.solution.coeffs.x_v
    }

    /// `φ_A(x)` on all of ℝ.
    pub fn phi(&self, x: f64) -> f64 {
        let k = &self.solution.coeffs;
        let z = self.z(x);
        2.0 * self.solution.a * (k.theta * z).cosh() - k.k2 * z * z + k.k0
    }

    pub fn phi_d1(&self, x: f64) -> f64 {
        let k = &self.solution.coeffs;
        let z = self.z(x);
        2.0 * self.solution.a * k.theta * (k.theta * z).sinh() - 2.0 * k.k2 * z
    }

    pub fn phi_d2(&self, x: f64) -> f64 {
        let k = &self.solution.coeffs;
        let z = self.z(x);
        2.0 * self.solution.a * k.theta * k.theta * (k.theta * z).cosh() - 2.0 * k.k2
    }

    pub fn region(&self, x: f64) -> Region {
        if x > self.solution.x_low && x < self.solution.x_high {
            Region::Continuation
        } else {
            Region::Action
        }
    }

    pub fn value_at(&self, x: f64) -> f64 {
        match self.region(x) {
            Region::Continuation => self.phi(x),
            Region::Action => self.m_operator(),
        }
    }

    /// V' (zero in the action region).
    pub fn derivative(&self, x: f64) -> f64 {
        match self.region(x) {
            Region::Continuation => self.phi_d1(x),
            Region::Action => 0.0,
        }
    }

    /// V'' away from the free boundaries.
    pub fn second_derivative(&self, x: f64) -> f64 {
        match self.region(x) {
            Region::Continuation => self.phi_d2(x),
            Region::Action => 0.0,
        }
    }

    /// `M V = sup V - c = φ_A(x*) - c`, the same for every state.
    pub fn m_operator(&self) -> f64 {
        self.phi(self.solution.x_star) - self.solution.params.c
    }

    /// Both terms of the inequality on `grid`, flagged against `tol`.
    pub fn qvi_residual(&self, grid: &[f64], tol: f64) -> Result<QviReport> {
        let s = &self.solution;
        let model = s.model();
        let sigma2 = s.params.sigma * s.params.sigma;
        let mv = self.m_operator();
        let mut points = Vec::with_capacity(grid.len());
        for &x in grid {
            for boundary in [s.x_low, s.x_high] {
                if x == boundary {
                    return Err(Error::GridContainsBoundary { x, boundary });
                }
            }
            let region = self.region(x);
            let v = self.value_at(x);
            let ode_term = 0.5 * sigma2 * self.second_derivative(x) - s.params.rho * v
                + model.running_payoff(x);
            let intervention_term = match region {
                Region::Continuation => mv - v,
                Region::Action => 0.0,
            };
            points.push(QviPoint {
                x,
                region,
                ode_term,
                intervention_term,
            });
        }
        Ok(QviReport::assess(points, tol))
    }
}

/// 2001 uniform points on `[-Δ, 2Δ]`, dropping those within `1e-6` of the
/// free boundaries.
pub fn default_qvi_grid(sol: &BaseSolution) -> Vec<f64> {
    let d = sol.params.delta_cap;
    uniform_grid(-d, 2.0 * d, 2001)
        .into_iter()
        .filter(|x| (x - sol.x_low).abs() > 1e-6 && (x - sol.x_high).abs() > 1e-6)
        .collect()
}

pub(crate) fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn problem1() -> ModelParams {
        ModelParams::base(0.03, 0.2, 0.0, 5.0, 2.0)
    }

    fn k1() -> PayoffCoefficients {
        derive_coefficients(&problem1()).unwrap()
    }

    /// ξ straight from the exponential quotient, no tanh rewriting.
    fn xi_raw(y: f64, k: &PayoffCoefficients) -> f64 {
        let e = (k.theta * y).exp();
        k.k2 * y * y - (2.0 * k.k2 / k.theta) * ((e - 1.0).powi(2) / (e * e - 1.0)) * y
    }

    #[test]
    fn c_bar_for_problem1() {
        let k = k1();
        let c_bar = xi(5.0 - k.x_v, &k).unwrap();
        // 40-digit reference: 16.8837148662231
        assert_relative_eq!(c_bar, 16.883_714_866_223_1, max_relative = 1e-12);
        assert!((c_bar - 16.9).abs() <= 0.05);
    }

    #[test]
    fn xi_at_one() {
        // 40-digit reference: 0.724803738011882
        let v = xi(1.0, &k1()).unwrap();
        assert_relative_eq!(v, 0.724_803_738_011_882, max_relative = 1e-12);
        assert_relative_eq!(v, xi_raw(1.0, &k1()), max_relative = 1e-12);
    }

    #[test]
    fn xi_quartic_near_zero() {
        let k = k1();
        for y in [1e-3f64, 1e-4] {
            let lead = k.k2 * k.theta * k.theta / 12.0 * y.powi(4);
            let r = xi(y, &k).unwrap() / lead;
            assert!((0.999..=1.001).contains(&r), "y={y} ratio={r}");
        }
    }

    #[test]
    fn xi_rejects_non_positive() {
        assert!(matches!(xi(0.0, &k1()), Err(Error::Domain { .. })));
        assert!(matches!(xi(-1.0, &k1()), Err(Error::Domain { .. })));
    }

    #[test]
    fn xi_derivative_matches_difference_quotient() {
        let k = k1();
        for y in [0.1, 0.7, 1.3, 2.4] {
            let h = 1e-6;
            let fd = (xi_unchecked(y + h, &k) - xi_unchecked(y - h, &k)) / (2.0 * h);
            assert_relative_eq!(xi_derivative(y, &k), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn g_near_a_bar_vanishes() {
        let k = k1();
        let v = g_of_a(0.999 * k.a_bar, &k).unwrap();
        assert!(v > 0.0 && v < 1e-4, "{v}");
    }

    #[test]
    fn g_at_reference_point() {
        // 40-digit nested-bisection reference: g(2.973) = 1.99889843483649
        let v = g_of_a(2.973, &k1()).unwrap();
        assert_relative_eq!(v, 1.998_898_434_836_49, max_relative = 1e-9);
    }

    #[test]
    fn g_domain() {
        let k = k1();
        assert!(g_of_a(0.0, &k).is_err());
        assert!(g_of_a(k.a_bar, &k).is_err());
        assert!(g_of_a(-1.0, &k).is_err());
    }

    #[test]
    fn solve_problem1() {
        let s = solve_base(&problem1()).unwrap();
        // 40-digit references.
        assert_relative_eq!(s.y_bar, 1.318_715_084_081_881_3, max_relative = 1e-11);
        assert_relative_eq!(s.a, 2.972_658_600_087_719_3, max_relative = 1e-11);
        assert_eq!(s.x_star, 2.5);
        assert_eq!(s.x_low + s.x_high, 2.0 * s.coeffs.x_v);
        assert!(0.0 < s.x_low && s.x_low < s.x_star && s.x_star < s.x_high && s.x_high < 5.0);
        assert!(0.0 < s.a && s.a < s.coeffs.a_bar);
        let g = g_of_a(s.a, &s.coeffs).unwrap();
        assert!((g - 2.0).abs() <= 1e-9, "{g}");
        assert!((xi(s.y_bar, &s.coeffs).unwrap() - 2.0).abs() <= 1e-10);
        for r in s.system_residuals() {
            assert!(r.abs() <= 1e-10, "{r}");
        }
    }

    #[test]
    fn solve_problem2() {
        let s = solve_base(&ModelParams::base(0.05, 0.3, 3.0, 5.0, 0.5)).unwrap();
        assert_relative_eq!(s.y_bar, 0.983_141_228_101_752_42, max_relative = 1e-11);
        assert_relative_eq!(s.a, 4.844_998_151_810_696_5, max_relative = 1e-11);
        assert_relative_eq!(s.c_bar, 2.780_289_740_457_59, max_relative = 1e-11);
    }

    #[test]
    fn cost_above_threshold_is_rejected() {
        match solve_base(&problem1().with_cost(17.0)) {
            Err(Error::CostTooLarge { c, c_bar }) => {
                assert_eq!(c, 17.0);
                assert!((c_bar - 16.9).abs() < 0.05);
            }
            other => panic!("unexpected {other:?}"),
        }
        let c_bar = cost_threshold(&problem1()).unwrap();
        assert!(matches!(
            solve_base(&problem1().with_cost(c_bar)),
            Err(Error::CostTooLarge { .. })
        ));
    }

    #[test]
    fn extended_params_rejected() {
        let mut p = problem1();
        p.mu = 0.1;
        assert!(matches!(solve_base(&p), Err(Error::NotBaseModel { .. })));
        p.mu = 0.0;
        p.lambda = 0.2;
        assert!(matches!(solve_base(&p), Err(Error::NotBaseModel { .. })));
    }

    #[test]
    fn value_landmarks() {
        let s = solve_base(&problem1()).unwrap();
        let vf = s.value_function();
        // 2A + k0 from the 40-digit solve
        assert_relative_eq!(
            vf.value_at(2.5),
            38.723_094_977_953_216,
            max_relative = 1e-11
        );
        assert_relative_eq!(
            vf.m_operator(),
            36.723_094_977_953_216,
            max_relative = 1e-11
        );
        let off = s.y_bar + 1.0;
        assert_eq!(vf.value_at(2.5 + off), vf.value_at(2.5 - off));
        assert_eq!(vf.value_at(2.5 + off), vf.phi(2.5) - 2.0);
        let eps = 1e-12;
        assert!((vf.value_at(s.x_high - eps) - vf.value_at(s.x_high + eps)).abs() < 1e-10);
        assert_eq!(vf.m_operator() - vf.value_at(s.x_high), 0.0);
    }

    #[test]
    fn pasting_and_c1() {
        let s = solve_base(&problem1()).unwrap();
        for r in s.pasting_residuals() {
            assert!(r.abs() <= 1e-9, "{r}");
        }
        let vf = s.value_function();
        let h = 1e-7;
        for b in [s.x_low, s.x_high] {
            let left = (vf.value_at(b) - vf.value_at(b - h)) / h;
            let right = (vf.value_at(b + h) - vf.value_at(b)) / h;
            // one-sided differences carry an O(h) truncation error
            assert!((left - right).abs() < 1e-5, "{left} vs {right}");
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let s = solve_base(&problem1()).unwrap();
        let vf = s.value_function();
        let (h, h2) = (1e-5, 1e-4);
        for i in 1..20 {
            let x = s.x_low + (s.x_high - s.x_low) * i as f64 / 20.0;
            let d1 = (vf.phi(x + h) - vf.phi(x - h)) / (2.0 * h);
            let d2 = (vf.phi(x + h2) - 2.0 * vf.phi(x) + vf.phi(x - h2)) / (h2 * h2);
            if vf.phi_d1(x).abs() > 1e-6 {
                assert_relative_eq!(vf.phi_d1(x), d1, max_relative = 1e-5);
            }
            assert_relative_eq!(vf.phi_d2(x), d2, max_relative = 1e-5, epsilon = 1e-5);
        }
    }

    #[test]
    fn global_max_at_x_star() {
        let s = solve_base(&problem1()).unwrap();
        let vf = s.value_function();
        let top = vf.value_at(s.x_star);
        for x in uniform_grid(-5.0, 10.0, 3001) {
            if x != s.x_star {
                assert!(vf.value_at(x) < top);
            }
            assert!(vf.value_at(x) >= vf.m_operator());
        }
    }

    #[test]
    fn qvi_terms_by_region() {
        let s = solve_base(&problem1()).unwrap();
        let vf = s.value_function();
        let rep = vf
            .qvi_residual(
                &[2.0, 2.5, 3.0, s.x_high + 0.3, s.x_high + 50.0, -2.0],
                1e-6,
            )
            .unwrap();
        assert!(rep.passed());
        for p in &rep.points[..3] {
            assert!(p.ode_term.abs() < 1e-9);
            assert!(p.intervention_term < 0.0);
        }
        let far = rep.points[4];
        assert_eq!(far.intervention_term, 0.0);
        assert_relative_eq!(far.ode_term, -0.03 * vf.m_operator(), max_relative = 1e-14);
        assert!(rep.points[3].ode_term <= 0.0);
    }

    #[test]
    fn qvi_rejects_boundary_points() {
        let s = solve_base(&problem1()).unwrap();
        let err = s
            .value_function()
            .qvi_residual(&[s.x_high], 1e-6)
            .unwrap_err();
        assert!(matches!(err, Error::GridContainsBoundary { .. }));
    }

    #[test]
    fn policy_triple() {
        let s = solve_base(&problem1()).unwrap();
        let p = optimal_policy(&s);
        assert_eq!(p.x_star, 2.5);
        assert_relative_eq!(p.x_star - p.x_low, p.x_high - p.x_star, epsilon = 1e-15);
        assert!(p.x_low > 0.0 && p.x_high < 5.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn xi_increasing(y1 in 1e-3f64..2.5, dy in 1e-3f64..2.5) {
                let k = k1();
                prop_assert!(xi(y1, &k).unwrap() < xi(y1 + dy, &k).unwrap());
            }

            #[test]
            fn g_decreasing(f1 in 0.01f64..0.98, df in 0.005f64..0.01) {
                let k = k1();
                let a1 = f1 * k.a_bar;
                let a2 = (f1 + df) * k.a_bar;
                prop_assert!(g_of_a(a1, &k).unwrap() > g_of_a(a2, &k).unwrap());
            }

            #[test]
            fn value_symmetric(y in 0.0f64..8.0) {
                let s = solve_base(&problem1()).unwrap();
                let vf = s.value_function();
                let (l, r) = (vf.value_at(2.5 - y), vf.value_at(2.5 + y));
                prop_assert!((l - r).abs() <= 1e-12 * r.abs(), "{} {}", l, r);
            }

            #[test]
            fn two_routes_agree(c in 0.05f64..15.0, b in 0.0f64..2.0) {
                let s = solve_base(&ModelParams::base(0.03, 0.2, b, 5.0, c));
                if let Ok(s) = s {
                    let g = g_of_a(s.a, &s.coeffs).unwrap();
                    prop_assert!((g - c).abs() <= 1e-9 * c.max(1.0), "g={} c={}", g, c);
                    prop_assert!((xi(s.y_bar, &s.coeffs).unwrap() - c).abs() <= 1e-10 * c.max(1.0));
                }
            }
        }
    }
}
