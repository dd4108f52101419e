//! Property checks shared by the proptest suite and the acceptance run.

use accbench::cost::{reward, stage_cost};
use accbench::drl::{train, ActorCritic, ReplayBuffer, TrainConfig, Transition};
use accbench::mpc::{BarrierConfig, BarrierSolver};
use accbench::{AccParams, KinematicState, ModelSpec, Plant, SurrogateParams, WorldState};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Check = std::result::Result<(), TestCaseError>;

pub fn state() -> impl Strategy<Value = KinematicState> {
    (-20.0..5.0f64, -5.0..5.0f64, -3.0..2.0f64).prop_map(|(e, ev, a)| KinematicState::new(e, ev, a))
}

pub fn cost_bounds_and_symmetry(e: f64, u: f64, j: f64) -> Check {
    let p = AccParams::default();
    let c = stage_cost(e, u, j, &p).total;
    let bound = (p.alpha * e.abs() / p.e_nmax + p.beta * (u / p.u_min).abs() + p.gamma_w * j.abs() / p.jerk_scale())
        + p.eps.sqrt();
    prop_assert!(c >= 0.0 && c <= bound + 1e-12, "cost {c} outside [0, {bound}]");
    for (a, b, cc) in [(-e, u, j), (e, -u, j), (e, u, -j)] {
        prop_assert_eq!(stage_cost(a, b, cc, &p).total, c);
    }
    Ok(())
}

pub fn reward_clipping(c: f64) -> Check {
    let r = reward(c);
    prop_assert!((-1.0..=0.0).contains(&r));
    if c <= 1.0 {
        prop_assert_eq!(r, -c);
    }
    Ok(())
}

pub fn barrier_strict_feasibility(s0: KinematicState, horizon: usize) -> Check {
    let p = AccParams::default();
    let mut solver = BarrierSolver::new(horizon, &p, BarrierConfig::default());
    let (u, _) = solver.solve(s0, None, BarrierConfig::default().mu_init);
    prop_assert!(u.iter().all(|&x| x > p.u_min && x < p.u_max), "iterate touches a bound");
    Ok(())
}

/// Re-solving the shortened problem from the successor state recovers the
/// tail of the previous plan.
pub fn bellman_shift(s0: KinematicState, horizon: usize) -> Check {
    let p = AccParams::default();
    let cfg = BarrierConfig::default();
    let mut full = BarrierSolver::new(horizon, &p, cfg);
    let (u, rep) = full.solve(s0, None, cfg.mu_init);
    prop_assume!(rep.converged);
    let s1 = accbench::dynamics::rk4_step(&s0, u[0], 0.0, p.dt, &p);
    let tail_cost = super::open_loop_cost(s1.to_array(), &u[1..], &p);
    let mut short = BarrierSolver::new(horizon - 1, &p, cfg);
    let (v, rep) = short.solve(s1, None, cfg.mu_init);
    prop_assume!(rep.converged);
    let resolved = super::open_loop_cost(s1.to_array(), &v, &p);
    prop_assert!(
        (resolved - tail_cost).abs() <= 0.01 * tail_cost.abs().max(1e-3),
        "re-solve {resolved} vs tail {tail_cost}"
    );
    Ok(())
}

pub fn soft_update_blend(seed: u64, c: f64) -> Check {
    let cfg = TrainConfig {
        hidden: vec![4, 4],
        final_init: 0.5,
        ..Default::default()
    };
    let p = AccParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets = ActorCritic::new(&cfg, &p, &mut rng);
    let other = ActorCritic::new(&cfg, &p, &mut rng);
    nets.actor_target = other.actor;
    nets.critic_target = other.critic;
    let before = nets.clone();
    nets.soft_update(c);
    for (online, old, new) in [
        (&before.actor, &before.actor_target, &nets.actor_target),
        (&before.critic, &before.critic_target, &nets.critic_target),
    ] {
        for ((&o, &t), &n) in online.params.iter().zip(&old.params).zip(&new.params) {
            let expect = c * o + (1.0 - c) * t;
            prop_assert!((n - expect).abs() <= 1e-15 * (1.0 + expect.abs()));
            prop_assert!(n >= o.min(t) - 1e-15 && n <= o.max(t) + 1e-15);
        }
    }
    prop_assert_eq!(&nets.actor.params, &before.actor.params);
    Ok(())
}

/// Size bound, distinct indices, and per-index frequencies within 5 sigma.
pub fn replay_uniformity(seed: u64, capacity: usize, pushes: usize) -> Check {
    let mut buf = ReplayBuffer::new(capacity);
    let t = Transition {
        s: KinematicState::ZERO,
        a: 0.0,
        r: 0.0,
        s2: KinematicState::ZERO,
        done: false,
    };
    for _ in 0..pushes {
        buf.push(t);
    }
    prop_assert_eq!(buf.len(), pushes.min(capacity));
    let n = buf.len();
    let batch = 8.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = 4000;
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        let idx = buf.sample_indices(&mut rng, batch).expect("batch fits");
        prop_assert_eq!(idx.len(), batch);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), batch);
        for i in idx {
            prop_assert!(i < n);
            counts[i] += 1;
        }
    }
    let q = batch as f64 / n as f64;
    let mean = draws as f64 * q;
    let sd = (draws as f64 * q * (1.0 - q)).sqrt().max(1e-9);
    for &c in &counts {
        prop_assert!((c as f64 - mean).abs() <= 5.0 * sd + 1e-9, "count {c} vs mean {mean}");
    }
    Ok(())
}

pub fn delay_zero_identity(s0: KinematicState, commands: &[f64]) -> Check {
    let p = AccParams::default();
    let w0 = WorldState::from_kinematic(s0, 20.0, &p);
    let mut a = Plant::new(&ModelSpec::Com, w0, &p).unwrap();
    let mut b = Plant::new(&ModelSpec::DelayedCom { tau_d: 0.0 }, w0, &p).unwrap();
    for &u in commands {
        let oa = a.step(u, 0.0);
        let ob = b.step(u, 0.0);
        prop_assert_eq!(oa.realized_accel.to_bits(), ob.realized_accel.to_bits());
        prop_assert_eq!(a.world(), b.world());
    }
    Ok(())
}

pub fn determinism_per_seed(seed: u64) -> Check {
    let cfg = TrainConfig {
        total_steps: 600,
        episode_len: 50,
        batch: 16,
        warmup_batches: 2,
        hidden: vec![8, 8],
        ..Default::default()
    };
    let p = AccParams::default();
    let a = train(&cfg, &p, seed).unwrap();
    let b = train(&cfg, &p, seed).unwrap();
    prop_assert_eq!(&a.curve, &b.curve);
    prop_assert_eq!(&a.nets.actor.params, &b.nets.actor.params);
    prop_assert_eq!(&a.nets.critic.params, &b.nets.critic.params);
    Ok(())
}

/// Max |a| gap between the surrogate (unlimited power, no delay) and the
/// kinematic model for a step command, at PI gain `kp` (ki = kp / 2).
pub fn surrogate_gap(kp: f64) -> f64 {
    let p = AccParams::default();
    let sp = SurrogateParams {
        p_max: 1e12,
        control_delay: 0.0,
        pi_kp: kp,
        pi_ki: 0.5 * kp,
        ..Default::default()
    };
    let w0 = WorldState::from_kinematic(KinematicState::ZERO, 20.0, &p);
    let mut com = Plant::new(&ModelSpec::Com, w0, &p).unwrap();
    let mut hfm = Plant::new(&ModelSpec::SurrogateHfm(sp), w0, &p).unwrap();
    let mut gap: f64 = 0.0;
    for k in 0..100 {
        let u = if k < 50 { 1.5 } else { -2.0 };
        com.step(u, 0.0);
        hfm.step(u, 0.0);
        gap = gap.max((com.kinematic().a - hfm.kinematic().a).abs());
    }
    gap
}

/// Runs every invariant with `cases` random cases each; returns the names
/// of the failing ones.
pub fn run_all(cases: u32) -> Vec<(&'static str, String)> {
    let mut failures = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn(&mut TestRunner) -> Result<(), String>| {
        let mut runner = TestRunner::new(Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        });
        if let Err(e) = f(&mut runner) {
            failures.push((name, e));
        }
    };
    fn s<T: std::fmt::Debug>(e: proptest::test_runner::TestError<T>) -> String {
        e.to_string()
    }
    run("cost bounds and symmetry", &|r| {
        r.run(&(-40.0..40.0f64, -6.0..6.0f64, -100.0..100.0f64), |(e, u, j)| {
            cost_bounds_and_symmetry(e, u, j)
        })
        .map_err(s)
    });
    run("reward clipping", &|r| {
        r.run(&(0.0..1e6f64), reward_clipping).map_err(s)
    });
    run("barrier strict feasibility", &|r| {
        r.run(&(state(), 1usize..60), |(s0, h)| barrier_strict_feasibility(s0, h))
            .map_err(s)
    });
    run("Bellman shift consistency", &|r| {
        r.run(&(state(), 10usize..60), |(s0, h)| bellman_shift(s0, h))
            .map_err(s)
    });
    run("soft-update blend", &|r| {
        r.run(&(any::<u64>(), 0.0..=1.0f64), |(seed, c)| soft_update_blend(seed, c))
            .map_err(s)
    });
    run("replay uniformity", &|r| {
        r.run(&(any::<u64>(), 8usize..200, 1usize..600), |(seed, cap, n)| {
            replay_uniformity(seed, cap, n)
        })
        .map_err(s)
    });
    run("delay-zero identity", &|r| {
        r.run(
            &(state(), proptest::collection::vec(-3.0..2.0f64, 1..100)),
            |(s0, u)| delay_zero_identity(s0, &u),
        )
        .map_err(s)
    });
    run("determinism per seed", &|r| {
        let mut r2 = TestRunner::new(Config {
            cases: cases.min(4),
            failure_persistence: None,
            ..Config::default()
        });
        let _ = r;
        r2.run(&any::<u64>(), determinism_per_seed).map_err(s)
    });
    failures
}
