//! Library-versus-oracle measurements shared by the oracle tests and the
//! acceptance run.

use super::{central_diff, rel_err, ExactCom};
use accbench::drl::{ActorCritic, TrainConfig, Transition};
use accbench::dynamics::rk4_step;
use accbench::{AccParams, KinematicState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn piecewise_commands(seed: u64, n: usize, p: &AccParams) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(p.u_min..p.u_max)).collect()
}

/// Max state error over 20 s of the RK4 integrator against the exact
/// transition from (5, 5, 0), using `sub` RK4 steps per control period.
pub fn rk4_vs_exact(sub: usize, p: &AccParams) -> f64 {
    let u = piecewise_commands(11, 200, p);
    let exact = ExactCom::new(p, p.dt);
    let h = p.dt / sub as f64;
    let mut s = KinematicState::new(5.0, 5.0, 0.0);
    let mut x = [5.0, 5.0, 0.0];
    let mut worst: f64 = 0.0;
    for &uk in &u {
        for _ in 0..sub {
            s = rk4_step(&s, uk, 0.0, h, p);
        }
        x = exact.step(x, uk);
        worst = worst.max(s.max_abs_diff(&KinematicState::from_array(x)));
    }
    worst
}

fn batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<Transition> {
    (0..n)
        .map(|i| Transition {
            s: KinematicState::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-3.0..2.0),
            ),
            a: rng.gen_range(-3.0..2.0),
            r: -rng.gen_range(0.0..1.0),
            s2: KinematicState::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-3.0..2.0),
            ),
            done: i % 4 == 0,
        })
        .collect()
}

/// Relative errors of the critic-loss and actor-objective gradients of the
/// default 64x64 networks.
pub fn network_gradient_errors(seed: u64) -> (f64, f64) {
    let cfg = TrainConfig {
        final_init: 0.3,
        ..Default::default()
    };
    let p = AccParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets = ActorCritic::new(&cfg, &p, &mut rng);
    let mut other = ActorCritic::new(&cfg, &p, &mut rng);
    nets.critic_target = std::mem::replace(&mut other.critic, nets.critic.clone());
    nets.actor_target = other.actor;
    let b = batch(&mut rng, 16);

    let (_, gc) = nets.critic_loss_and_grad(&b, 0.99);
    let theta = nets.critic.params.clone();
    let fd = central_diff(
        |x| {
            nets.critic.params.copy_from_slice(x);
            nets.critic_loss_and_grad(&b, 0.99).0
        },
        &theta,
        1e-6,
    );
    nets.critic.params = theta;
    let critic_err = rel_err(&gc, &fd);

    let (_, ga) = nets.actor_objective_and_grad(&b);
    let theta = nets.actor.params.clone();
    let fd = central_diff(
        |x| {
            nets.actor.params.copy_from_slice(x);
            -nets.actor_objective_and_grad(&b).0
        },
        &theta,
        1e-6,
    );
    nets.actor.params = theta;
    (critic_err, rel_err(&ga, &fd))
}
