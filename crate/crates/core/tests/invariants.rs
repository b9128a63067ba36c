use proptest::prelude::*;
use retail_impulse::analysis::dv_dc;
use retail_impulse::extended_solver::solve_extended;
use retail_impulse::simulator::{first_exit_time_stats, refine_time_step, trace_path, CostModel};
use retail_impulse::{simulate, solve_base, ModelParams, SimulationConfig, ThresholdPolicy};

fn problem1() -> ModelParams {
    ModelParams::base(0.03, 0.2, 0.0, 5.0, 2.0)
}

fn small(policy: ThresholdPolicy, x0: f64, seed: u64) -> SimulationConfig {
    SimulationConfig {
        n_paths: 64,
        dt: 2e-2,
        horizon: 40.0,
        seed,
        parallel: false,
        ..SimulationConfig::new(policy, x0)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn payoffs_bounded_by_static_value(
        lo in 0.5f64..2.4,
        width in 0.2f64..2.0,
        seed in 0u64..1000,
    ) {
        let p = problem1();
        let policy = ThresholdPolicy::new(lo, lo + 0.5 * width, lo + width).unwrap();
        let rep = simulate(&p, &small(policy, policy.x_star, seed)).unwrap();
        let v_static = 1.25 / 0.03;
        prop_assert!(rep.max_path_payoff <= v_static + rep.tail_bound);
        prop_assert!(rep.j_estimate < v_static);
        prop_assert!(rep.std_error >= 0.0);
    }

    #[test]
    fn resets_always_land_on_x_star(seed in 0u64..1000, shift in -0.5f64..0.5) {
        let p = problem1();
        let policy = ThresholdPolicy::new(1.5, 2.5 + 0.5 * shift, 3.5).unwrap();
        let (events, _) = trace_path(&p, &small(policy, 2.5, seed), seed % 64).unwrap();
        for e in &events {
            prop_assert_eq!(e.post_state, policy.x_star);
            prop_assert!(!policy.contains(e.pre_state));
        }
    }

    #[test]
    fn state_dependent_costs_within_c_and_c_plus_lambda(seed in 0u64..1000, lambda in 0.1f64..1.0) {
        let p = ModelParams::extended(0.05, 0.1, 0.3, 0.5, 1.0, lambda, 5.0);
        let mut cfg = small(ThresholdPolicy::new(1.5, 3.0, 4.3).unwrap(), 0.2, seed);
        cfg.cost_model = CostModel::StateDependent;
        let rep = simulate(&p, &cfg).unwrap();
        prop_assert!(rep.min_charged_cost.unwrap() >= p.c);
        prop_assert!(rep.max_charged_cost.unwrap() <= p.c + p.lambda);
    }

    #[test]
    fn initial_state_outside_band_intervenes_at_zero(x0 in 3.9f64..6.0) {
        let p = problem1();
        let policy = ThresholdPolicy::new(1.2, 2.5, 3.8).unwrap();
        let (events, _) = trace_path(&p, &small(policy, x0, 1), 0).unwrap();
        prop_assert_eq!(events[0].time, 0.0);
        prop_assert_eq!(events[0].pre_state, x0);
    }

    #[test]
    fn value_sensitivity_is_negative(c in 0.01f64..15.0, x in -2.0f64..7.0) {
        let s = solve_base(&problem1().with_cost(c)).unwrap();
        prop_assert!(dv_dc(&s, x) < 0.0);
    }
}

#[test]
fn nested_bands_exit_later_on_common_noise() {
    let p = problem1();
    let s = solve_base(&p).unwrap();
    let narrow = small(s.optimal_policy(), s.x_star, 11);
    let wide = SimulationConfig {
        policy: s.optimal_policy().widened(s.y_bar),
        ..narrow.clone()
    };
    let a = first_exit_time_stats(&p, &narrow).unwrap();
    let b = first_exit_time_stats(&p, &wide).unwrap();
    assert!(b.mean > a.mean);
    assert!(b.median >= a.median);
    assert!(a.discounted_mean > 0.0 && a.discounted_mean < 1.0);
}

#[test]
fn refinement_levels_share_paths() {
    let p = problem1();
    let s = solve_base(&p).unwrap();
    let cfg = small(s.optimal_policy(), s.x_star, 3);
    let levels = refine_time_step(&p, &cfg, &[4, 2, 1]).unwrap();
    assert_eq!(levels[2].report, simulate(&p, &cfg).unwrap());
    assert_eq!(levels[2].diff_to_finest, 0.0);
    assert_eq!(
        levels[0].report.steps_per_path * 4,
        levels[2].report.steps_per_path
    );
    for l in &levels[..2] {
        // coupled differences are far tighter than the estimates themselves
        assert!(l.diff_std_error < 0.5 * l.report.std_error, "{l:?}");
    }
    assert!(refine_time_step(&p, &cfg, &[2, 4]).is_err());
    assert!(refine_time_step(&p, &cfg, &[3, 1]).is_err());
}

#[test]
fn warm_started_extended_matches_homotopy() {
    let p4 = ModelParams::extended(0.05, 0.1, 0.3, 0.5, 1.0, 0.5, 5.0);
    let cold = solve_extended(&p4, None).unwrap();
    let nearby = ModelParams { c: 1.05, ..p4 };
    let warm = solve_extended(&nearby, Some(&cold)).unwrap();
    let fresh = solve_extended(&nearby, None).unwrap();
    for (a, b) in [
        (warm.x_low, fresh.x_low),
        (warm.x_star, fresh.x_star),
        (warm.x_high, fresh.x_high),
    ] {
        assert!((a - b).abs() < 1e-9);
    }
    assert!(warm.x_high - warm.x_low > cold.x_high - cold.x_low);
}
