mod common;

use accbench::dynamics::rk4_step;
use accbench::{AccParams, KinematicState};
use common::invariants::*;
use proptest::prelude::*;

proptest! {
    #[test]
    fn cost_is_bounded_and_even(e in -40.0..40.0f64, u in -6.0..6.0f64, j in -100.0..100.0f64) {
        cost_bounds_and_symmetry(e, u, j)?;
    }

    #[test]
    fn reward_is_clipped(c in 0.0..1e6f64) {
        reward_clipping(c)?;
    }

    #[test]
    fn soft_update_is_a_convex_blend(seed in any::<u64>(), c in 0.0..=1.0f64) {
        soft_update_blend(seed, c)?;
    }

    #[test]
    fn replay_sampling_is_uniform(seed in any::<u64>(), cap in 8usize..200, n in 1usize..600) {
        replay_uniformity(seed, cap, n)?;
    }

    #[test]
    fn zero_delay_reproduces_the_kinematic_model(s0 in state(), u in proptest::collection::vec(-3.0..2.0f64, 1..100)) {
        delay_zero_identity(s0, &u)?;
    }

    /// The RK4 transition is affine: the state matrix and input vector
    /// extracted by differences do not depend on the base point.
    #[test]
    fn rk4_transition_is_affine(s in state(), u in -3.0..2.0f64) {
        let p = AccParams::default();
        let f = |s: KinematicState, u: f64| rk4_step(&s, u, 0.0, p.dt, &p).to_array();
        let base = f(s, u);
        let unit = [KinematicState::new(1.0, 0.0, 0.0), KinematicState::new(0.0, 1.0, 0.0), KinematicState::new(0.0, 0.0, 1.0)];
        let zero = f(KinematicState::ZERO, 0.0);
        for d in unit {
            let here = f(s + d, u);
            let origin = f(d, 0.0);
            for i in 0..3 {
                prop_assert!(((here[i] - base[i]) - (origin[i] - zero[i])).abs() < 1e-12);
            }
        }
        let du = f(s, u + 1.0);
        let du0 = f(KinematicState::ZERO, 1.0);
        for i in 0..3 {
            prop_assert!(((du[i] - base[i]) - (du0[i] - zero[i])).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn barrier_iterates_stay_strictly_inside(s0 in state(), h in 1usize..60) {
        barrier_strict_feasibility(s0, h)?;
    }

    #[test]
    fn receding_solution_is_shift_consistent(s0 in state(), h in 10usize..60) {
        bellman_shift(s0, h)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn training_is_deterministic_per_seed(seed in any::<u64>()) {
        determinism_per_seed(seed)?;
    }
}

#[test]
fn surrogate_approaches_the_kinematic_model_as_gains_grow() {
    let gaps: Vec<f64> = [1.0, 2.0, 4.0].into_iter().map(surrogate_gap).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn invariant_runner_reports_no_failures() {
    assert!(run_all(4).is_empty());
}
