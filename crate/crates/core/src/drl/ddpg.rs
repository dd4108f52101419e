//! Deep deterministic policy gradient on the control-oriented model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{model_jerk, reward, stage_cost};
use crate::drl::mlp::{Mlp, OutputActivation, Workspace};
use crate::drl::replay::{ReplayBuffer, Transition};
use crate::dynamics::{rk4_step, AccParams, KinematicState, ModelSpec, WorldState};
use crate::episode::{no_disturbance, run_closed_loop, Action, Controller};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Discount factor.
    pub gamma: f64,
    /// Target-network blend coefficient per update.
    pub tau_target: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch: usize,
    pub noise_mean: f64,
    /// Exploration noise standard deviation in m/s^2.
    pub noise_std: f64,
    /// Multiply the noise by the command range `u_max - u_min`.
    pub noise_relative_to_range: bool,
    pub total_steps: usize,
    pub episode_len: usize,
    pub seeds: Vec<u64>,
    pub replay_capacity: usize,
    /// Updates start once the buffer holds `warmup_batches * batch` items.
    pub warmup_batches: usize,
    pub hidden: Vec<usize>,
    /// Half-width of the uniform init of both output layers.
    pub final_init: f64,
    pub e_range: [f64; 2],
    pub ev_range: [f64; 2],
    pub a_range: [f64; 2],
    /// Treat the end of a training episode as terminal (no bootstrap).
    pub time_limit_terminal: bool,
    /// A seed is flagged as failed when every episode in the last tenth of
    /// training scores at or below this undiscounted reward.
    pub divergence_reward: f64,
    /// Score the actor every this many episodes on a fixed validation set
    /// and return the best-scoring snapshot; 0 keeps the final networks.
    pub snapshot_every: usize,
    /// Size of the validation set, drawn once from the training ranges.
    pub validation_ics: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            tau_target: 0.001,
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            batch: 64,
            noise_mean: 0.0,
            noise_std: 0.02,
            noise_relative_to_range: false,
            total_steps: 1_000_000,
            episode_len: 200,
            seeds: vec![1, 2, 3],
            replay_capacity: 500_000,
            warmup_batches: 10,
            hidden: vec![64, 64],
            final_init: 3e-3,
            e_range: [-5.0, 5.0],
            ev_range: [-5.0, 5.0],
            a_range: [-3.0, 2.0],
            time_limit_terminal: true,
            divergence_reward: -190.0,
            snapshot_every: 0,
            validation_ics: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.gamma) {
            return Err(Error::param("gamma", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.tau_target) {
            return Err(Error::param("tau_target", "must lie in [0, 1]"));
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return Err(Error::param("lr_actor", "learning rates must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::param("batch", "must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite() && self.noise_mean.is_finite()) {
            return Err(Error::param("noise_std", "must be finite and non-negative"));
        }
        if self.episode_len == 0 {
            return Err(Error::param("episode_len", "must be positive"));
        }
        if self.replay_capacity < self.batch {
            return Err(Error::param("replay_capacity", "must hold at least one batch"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::param("hidden", "needs at least one non-empty layer"));
        }
        for (name, r) in [
            ("e_range", self.e_range),
            ("ev_range", self.ev_range),
            ("a_range", self.a_range),
        ] {
            if !(r[0] < r[1] && r[0].is_finite() && r[1].is_finite()) {
                return Err(Error::param(name, "must be a finite increasing pair"));
            }
        }
        if self.snapshot_every > 0 && self.validation_ics == 0 {
            return Err(Error::param(
                "validation_ics",
                "snapshot selection needs a validation set",
            ));
        }
        Ok(())
    }

    fn effective_noise_std(&self, p: &AccParams) -> f64 {
        if self.noise_relative_to_range {
            self.noise_std * (p.u_max - p.u_min)
        } else {
            self.noise_std
        }
    }
}

/// Fixed affine normalization `(x - offset) / scale` of network inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub state_offset: [f64; 3],
    pub state_scale: [f64; 3],
    pub action_offset: f64,
    pub action_scale: f64,
}

impl InputScaling {
    /// Maps each training range and the command range onto `[-1, 1]`.
    pub fn from_ranges(cfg: &TrainConfig, p: &AccParams) -> Self {
        let mid = |r: [f64; 2]| 0.5 * (r[0] + r[1]);
        let half = |r: [f64; 2]| 0.5 * (r[1] - r[0]);
        InputScaling {
            state_offset: [mid(cfg.e_range), mid(cfg.ev_range), mid(cfg.a_range)],
            state_scale: [half(cfg.e_range), half(cfg.ev_range), half(cfg.a_range)],
            action_offset: p.u_mid(),
            action_scale: 0.5 * (p.u_max - p.u_min),
        }
    }

    pub fn state(&self, s: &KinematicState) -> [f64; 3] {
        let x = s.to_array();
        std::array::from_fn(|i| (x[i] - self.state_offset[i]) / self.state_scale[i])
    }

    pub fn action(&self, a: f64) -> f64 {
        (a - self.action_offset) / self.action_scale
    }

    pub fn is_valid(&self) -> bool {
        self.state_offset
            .iter()
            .chain(&[self.action_offset])
            .all(|x| x.is_finite())
            && self
                .state_scale
                .iter()
                .chain(&[self.action_scale])
                .all(|x| x.is_finite() && *x > 0.0)
    }
}

/// Deployable deterministic policy: the actor network plus its input
/// normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub actor: Mlp,
    pub scaling: InputScaling,
}

impl Policy {
    pub fn command(&self, s: &KinematicState) -> f64 {
        self.actor.predict(&self.scaling.state(s))[0]
    }
}

/// Noise-free command of the actor, always within the command bounds.
pub fn policy_act(policy: &Policy, s: &KinematicState) -> f64 {
    policy.command(s)
}

impl Controller for Policy {
    fn name(&self) -> String {
        "DRL".into()
    }

    fn act(&mut self, s: &KinematicState) -> Action {
        Action::new(self.command(s))
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t = self.t.saturating_add(1);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        for ((x, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *x -= step * *m / (v.sqrt() + self.eps * c2.sqrt());
        }
    }
}

/// Online and target networks with their optimizers.
#[derive(Clone, Debug)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub scaling: InputScaling,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    scratch: Scratch,
}

#[derive(Clone, Debug, Default)]
struct Scratch {
    actor: Workspace,
    critic: Workspace,
    actor_target: Workspace,
    critic_target: Workspace,
    s: Vec<f64>,
    s2: Vec<f64>,
    sa: Vec<f64>,
    grad: Vec<f64>,
    d_out: Vec<f64>,
    d_in: Vec<f64>,
}

impl ActorCritic {
    pub fn new<R: Rng>(cfg: &TrainConfig, p: &AccParams, rng: &mut R) -> Self {
        let actor_out = OutputActivation::BoundedTanh {
            mid: p.u_mid(),
            half: 0.5 * (p.u_max - p.u_min),
        };
        let mut sizes_a = vec![3];
        sizes_a.extend(&cfg.hidden);
        sizes_a.push(1);
        let mut sizes_c = vec![4];
        sizes_c.extend(&cfg.hidden);
        sizes_c.push(1);
        let actor = Mlp::init(&sizes_a, actor_out, cfg.final_init, rng);
        let critic = Mlp::init(&sizes_c, OutputActivation::Identity, cfg.final_init, rng);
        Self::from_nets(actor, critic, InputScaling::from_ranges(cfg, p), cfg)
    }

    pub fn from_nets(actor: Mlp, critic: Mlp, scaling: InputScaling, cfg: &TrainConfig) -> Self {
        ActorCritic {
            actor_opt: Adam::new(actor.num_params(), cfg.lr_actor),
            critic_opt: Adam::new(critic.num_params(), cfg.lr_critic),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            scaling,
            scratch: Scratch::default(),
        }
    }

    pub fn policy(&self) -> Policy {
        Policy {
            actor: self.actor.clone(),
            scaling: self.scaling,
        }
    }

    fn fill_states(&mut self, batch: &[Transition]) {
        let sc = &mut self.scratch;
        sc.s.clear();
        sc.s2.clear();
        for t in batch {
            sc.s.extend(self.scaling.state(&t.s));
            sc.s2.extend(self.scaling.state(&t.s2));
        }
    }

    /// Rows `[scaled state, scaled action]` for the critic.
    fn fill_state_actions(&mut self, states: &[f64], actions: impl Iterator<Item = f64>) {
        let sc = &mut self.scratch;
        sc.sa.clear();
        for (row, a) in states.chunks_exact(3).zip(actions) {
            sc.sa.extend_from_slice(row);
            sc.sa.push(self.scaling.action(a));
        }
    }

    /// Mean squared TD error and its gradient with respect to the critic
    /// parameters. Targets come from the target networks.
    pub fn critic_loss_and_grad(&mut self, batch: &[Transition], gamma: f64) -> (f64, Vec<f64>) {
        let b = batch.len();
        self.fill_states(batch);
        let s2 = std::mem::take(&mut self.scratch.s2);
        let a2 = self
            .actor_target
            .forward(&s2, b, &mut self.scratch.actor_target)
            .to_vec();
        self.fill_state_actions(&s2, a2.into_iter());
        self.scratch.s2 = s2;
        let q2 = self
            .critic_target
            .forward(&self.scratch.sa, b, &mut self.scratch.critic_target)
            .to_vec();

        let s = std::mem::take(&mut self.scratch.s);
        self.fill_state_actions(&s, batch.iter().map(|t| t.a));
        self.scratch.s = s;
        let q = self
            .critic
            .forward(&self.scratch.sa, b, &mut self.scratch.critic)
            .to_vec();

        let sc = &mut self.scratch;
        sc.d_out.clear();
        let mut loss = 0.0;
        for ((t, &qi), &q2i) in batch.iter().zip(&q).zip(&q2) {
            let bootstrap = if t.done { 0.0 } else { gamma * q2i };
            let td = qi - (t.r + bootstrap);
            loss += td * td;
            sc.d_out.push(2.0 * td / b as f64);
        }
        loss /= b as f64;
        let mut grad = std::mem::take(&mut sc.grad);
        grad.clear();
        grad.resize(self.critic.num_params(), 0.0);
        self.critic.backward(&mut sc.critic, &sc.d_out, Some(&mut grad), None);
        (loss, grad)
    }

    /// One Adam step on the critic. Returns the loss before the step.
    pub fn critic_update(&mut self, batch: &[Transition], gamma: f64) -> f64 {
        let (loss, grad) = self.critic_loss_and_grad(batch, gamma);
        self.critic_opt.step(&mut self.critic.params, &grad);
        self.scratch.grad = grad;
        loss
    }

    /// Mean `Q(s, mu(s))` over the batch and the gradient of its negation
    /// with respect to the actor parameters. The critic is left untouched.
    pub fn actor_objective_and_grad(&mut self, batch: &[Transition]) -> (f64, Vec<f64>) {
        let b = batch.len();
        self.fill_states(batch);
        let s = std::mem::take(&mut self.scratch.s);
        let a = self.actor.forward(&s, b, &mut self.scratch.actor).to_vec();
        self.fill_state_actions(&s, a.into_iter());
        self.scratch.s = s;
        let q = self.critic.forward(&self.scratch.sa, b, &mut self.scratch.critic);
        let mean_q = q.iter().sum::<f64>() / b as f64;

        let sc = &mut self.scratch;
        sc.d_out.clear();
        sc.d_out.resize(b, 1.0 / b as f64);
        sc.d_in.clear();
        sc.d_in.resize(b * 4, 0.0);
        self.critic
            .backward(&mut sc.critic, &sc.d_out, None, Some(&mut sc.d_in));
        // descend on -Q through the action input scaling
        sc.d_out.clear();
        sc.d_out
            .extend(sc.d_in.chunks_exact(4).map(|row| -row[3] / self.scaling.action_scale));
        let mut grad = vec![0.0; self.actor.num_params()];
        self.actor.backward(&mut sc.actor, &sc.d_out, Some(&mut grad), None);
        (mean_q, grad)
    }

    /// One Adam ascent step on mean Q. Returns mean Q before the step.
    pub fn actor_update(&mut self, batch: &[Transition]) -> f64 {
        let (q, grad) = self.actor_objective_and_grad(batch);
        self.actor_opt.step(&mut self.actor.params, &grad);
        q
    }

    /// `target = c * online + (1 - c) * target` for both pairs.
    pub fn soft_update(&mut self, c: f64) {
        self.actor_target.blend_from(&self.actor, c);
        self.critic_target.blend_from(&self.critic, c);
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite()
            && self.critic.is_finite()
            && self.actor_target.is_finite()
            && self.critic_target.is_finite()
    }
}

/// Result of one training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub seed: u64,
    pub nets: ActorCritic,
    /// Undiscounted (clipped) reward of every completed episode.
    pub curve: Vec<f64>,
    pub failed: bool,
    /// Episode count at which the returned networks were captured, when
    /// snapshot selection is on.
    pub snapshot_episode: Option<usize>,
    pub validation_cost: Option<f64>,
}

/// Uniformly random initial state from the training ranges.
pub fn sample_initial_state<R: Rng>(cfg: &TrainConfig, rng: &mut R) -> KinematicState {
    KinematicState::new(
        rng.gen_range(cfg.e_range[0]..=cfg.e_range[1]),
        rng.gen_range(cfg.ev_range[0]..=cfg.ev_range[1]),
        rng.gen_range(cfg.a_range[0]..=cfg.a_range[1]),
    )
}

const VALIDATION_SEED: u64 = 0x7a11_da7e;

/// The fixed validation initial states used for snapshot selection. They do
/// not depend on the training seed, so snapshots of different seeds are
/// scored on the same episodes.
pub fn validation_set(cfg: &TrainConfig) -> Vec<KinematicState> {
    let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED);
    (0..cfg.validation_ics)
        .map(|_| sample_initial_state(cfg, &mut rng))
        .collect()
}

/// Mean closed-loop episode cost of `policy` on the COM from `ics`.
pub fn validation_cost(policy: &Policy, ics: &[KinematicState], episode_len: usize, p: &AccParams) -> Result<f64> {
    let mut total = 0.0;
    for &s0 in ics {
        let mut c = policy.clone();
        let w0 = WorldState::from_kinematic(s0, 20.0, p);
        total += run_closed_loop(&mut c, &ModelSpec::Com, w0, episode_len, p, &no_disturbance)?.cost()?;
    }
    Ok(total / ics.len().max(1) as f64)
}

/// Trains one seed on the COM with zero preceding-vehicle acceleration.
pub fn train(cfg: &TrainConfig, p: &AccParams, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets = ActorCritic::new(cfg, p, &mut rng);
    let noise = Normal::new(cfg.noise_mean, cfg.effective_noise_std(p))
        .map_err(|e| Error::param("noise_std", e.to_string()))?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let warmup = (cfg.warmup_batches * cfg.batch).max(cfg.batch);
    let mut curve = Vec::with_capacity(cfg.total_steps / cfg.episode_len + 1);
    let mut batch = Vec::with_capacity(cfg.batch);
    let log_every = (cfg.total_steps / cfg.episode_len / 20).max(1);
    let validation = if cfg.snapshot_every > 0 {
        validation_set(cfg)
    } else {
        Vec::new()
    };
    let mut best: Option<(f64, usize, ActorCritic)> = None;

    let mut step = 0;
    while step < cfg.total_steps {
        let mut s = sample_initial_state(cfg, &mut rng);
        let mut episode_reward = 0.0;
        let mut complete = true;
        for t in 0..cfg.episode_len {
            if step >= cfg.total_steps {
                complete = false;
                break;
            }
            let mean = nets.actor.predict(&nets.scaling.state(&s))[0];
            let a = p.clamp_command(mean + noise.sample(&mut rng));
            let c = stage_cost(s.e, a, model_jerk(a, s.a, p), p).total;
            let r = reward(c);
            let s2 = rk4_step(&s, a, 0.0, p.dt, p);
            buffer.push(Transition {
                s,
                a,
                r,
                s2,
                done: cfg.time_limit_terminal && t + 1 == cfg.episode_len,
            });
            episode_reward += r;
            s = s2;
            step += 1;

            if buffer.len() >= warmup {
                let idx = buffer
                    .sample_indices(&mut rng, cfg.batch)
                    .expect("buffer holds a batch");
                batch.clear();
                batch.extend(idx.iter().map(|&i| *buffer.get(i)));
                nets.critic_update(&batch, cfg.gamma);
                nets.actor_update(&batch);
                nets.soft_update(cfg.tau_target);
            }
        }
        if complete {
            curve.push(episode_reward);
            if curve.len() % log_every == 0 {
                log::info!(
                    "seed {seed}: step {step}, episode {} reward {episode_reward:.2}",
                    curve.len()
                );
            }
            if cfg.snapshot_every > 0 && curve.len() % cfg.snapshot_every == 0 && nets.is_finite() {
                let cost = validation_cost(&nets.policy(), &validation, cfg.episode_len, p)?;
                if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
                    log::debug!("seed {seed}: episode {} validation cost {cost:.4}", curve.len());
                    best = Some((cost, curve.len(), nets.clone()));
                }
            }
        }
        if !nets.is_finite() {
            log::warn!("seed {seed}: non-finite weights at step {step}");
            return Ok(TrainOutcome {
                seed,
                nets,
                curve,
                failed: true,
                snapshot_episode: None,
                validation_cost: None,
            });
        }
    }
    let failed = diverged(&curve, cfg.divergence_reward);
    if failed {
        log::warn!("seed {seed}: episode reward stuck at the floor for the last tenth of training");
    }
    if cfg.snapshot_every > 0 {
        let cost = validation_cost(&nets.policy(), &validation, cfg.episode_len, p)?;
        if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
            best = Some((cost, curve.len(), nets.clone()));
        }
    }
    let (nets, snapshot_episode, validation_cost) = match best {
        Some((c, ep, snap)) => (snap, Some(ep), Some(c)),
        None => (nets, None, None),
    };
    Ok(TrainOutcome {
        seed,
        nets,
        curve,
        failed,
        snapshot_episode,
        validation_cost,
    })
}

/// True when every episode in the final tenth scored at or below `floor`.
pub fn diverged(curve: &[f64], floor: f64) -> bool {
    if curve.is_empty() {
        return false;
    }
    let tail = (curve.len() / 10).max(1);
    curve[curve.len() - tail..]
        .iter()
        .all(|&r| r <= floor || !r.is_finite())
}

/// Per-seed summary from a multi-seed run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub failed: bool,
    /// Evaluation cost used for selection; infinite for failed seeds.
    pub eval_cost: f64,
    pub final_reward_mean: f64,
    pub curve: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MultiSeedOutcome {
    pub best: ActorCritic,
    pub best_seed: u64,
    pub seeds: Vec<SeedReport>,
}

impl MultiSeedOutcome {
    pub fn all_failed(&self) -> bool {
        self.seeds.iter().all(|s| s.failed)
    }
}

/// Trains every configured seed and keeps the policy with the lowest
/// evaluation cost. Failed seeds are only chosen if all seeds failed.
pub fn train_multi<F>(cfg: &TrainConfig, p: &AccParams, evaluate: F) -> Result<MultiSeedOutcome>
where
    F: Fn(&Policy) -> Result<f64> + Sync,
{
    if cfg.seeds.is_empty() {
        return Err(Error::param("seeds", "at least one seed is required"));
    }
    let runs: Vec<Result<(TrainOutcome, f64)>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let out = train(cfg, p, seed)?;
            let cost = if out.failed {
                f64::INFINITY
            } else {
                evaluate(&out.nets.policy())?
            };
            Ok((out, cost))
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let seeds = runs
        .iter()
        .map(|(o, c)| {
            let tail = (o.curve.len() / 10).max(1).min(o.curve.len());
            let final_reward_mean = if tail == 0 {
                0.0
            } else {
                o.curve[o.curve.len() - tail..].iter().sum::<f64>() / tail as f64
            };
            SeedReport {
                seed: o.seed,
                failed: o.failed,
                eval_cost: *c,
                final_reward_mean,
                curve: o.curve.clone(),
            }
        })
        .collect();
    let best_idx = runs
        .iter()
        .enumerate()
        .min_by(|(_, (a, ca)), (_, (b, cb))| a.failed.cmp(&b.failed).then(ca.total_cmp(cb)))
        .map(|(i, _)| i)
        .expect("non-empty");
    let (best, _) = runs.into_iter().nth(best_idx).expect("index in range");
    Ok(MultiSeedOutcome {
        best_seed: best.seed,
        best: best.nets,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> AccParams {
        AccParams::default()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![3],
            final_init: 0.3,
            ..Default::default()
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<Transition> {
        let cfg = TrainConfig::default();
        (0..n)
            .map(|i| Transition {
                s: sample_initial_state(&cfg, rng),
                a: rng.gen_range(-3.0..2.0),
                r: -rng.gen_range(0.0..1.0),
                s2: sample_initial_state(&cfg, rng),
                done: i % 3 == 0,
            })
            .collect()
    }

    /// Perturbs biases away from zero so no ReLU sits on its kink.
    fn tiny_nets(seed: u64) -> ActorCritic {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nets = ActorCritic::new(&cfg, &p(), &mut rng);
        for net in [&mut nets.actor, &mut nets.critic] {
            for x in net.params.iter_mut() {
                *x += 0.1;
            }
        }
        let mut other = ActorCritic::new(&cfg, &p(), &mut rng);
        for x in other.critic.params.iter_mut() {
            *x -= 0.05;
        }
        nets.actor_target = other.actor;
        nets.critic_target = other.critic;
        nets
    }

    #[test]
    fn zero_actor_gives_midpoint() {
        let cfg = TrainConfig {
            final_init: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let nets = ActorCritic::new(&cfg, &p(), &mut rng);
        let pol = nets.policy();
        for _ in 0..100 {
            let s = sample_initial_state(&cfg, &mut rng);
            assert_eq!(policy_act(&pol, &s), -0.5);
        }
    }

    #[test]
    fn zero_rewards_and_zero_nets_give_zero_loss() {
        let cfg = TrainConfig {
            final_init: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut nets = ActorCritic::new(&cfg, &p(), &mut rng);
        let mut batch = random_batch(&mut rng, 64);
        batch.iter_mut().for_each(|t| t.r = 0.0);
        let (loss, grad) = nets.critic_loss_and_grad(&batch, 0.99);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn consistent_rewards_give_zero_td_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut nets = tiny_nets(8);
        let mut batch = random_batch(&mut rng, 16);
        let gamma = 0.99;
        for t in batch.iter_mut() {
            let q = nets
                .critic
                .predict(&[nets.scaling.state(&t.s).as_slice(), &[nets.scaling.action(t.a)]].concat())[0];
            let a2 = nets.actor_target.predict(&nets.scaling.state(&t.s2))[0];
            let q2 = nets
                .critic_target
                .predict(&[nets.scaling.state(&t.s2).as_slice(), &[nets.scaling.action(a2)]].concat())[0];
            t.r = q - if t.done { 0.0 } else { gamma * q2 };
        }
        let (loss, grad) = nets.critic_loss_and_grad(&batch, gamma);
        assert!(loss < 1e-28, "{loss}");
        assert!(grad.iter().all(|g| g.abs() < 1e-13));
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut nets = tiny_nets(21);
        let batch = random_batch(&mut rng, 8);
        let (_, grad) = nets.critic_loss_and_grad(&batch, 0.99);
        let h = 1e-6;
        for i in 0..grad.len() {
            let base = nets.critic.params[i];
            nets.critic.params[i] = base + h;
            let fp = nets.critic_loss_and_grad(&batch, 0.99).0;
            nets.critic.params[i] = base - h;
            let fm = nets.critic_loss_and_grad(&batch, 0.99).0;
            nets.critic.params[i] = base;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(1e-6);
            assert!(rel < 1e-4, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut nets = tiny_nets(33);
        let batch = random_batch(&mut rng, 8);
        let (_, grad) = nets.actor_objective_and_grad(&batch);
        let h = 1e-6;
        for i in 0..grad.len() {
            let base = nets.actor.params[i];
            nets.actor.params[i] = base + h;
            let fp = -nets.actor_objective_and_grad(&batch).0;
            nets.actor.params[i] = base - h;
            let fm = -nets.actor_objective_and_grad(&batch).0;
            nets.actor.params[i] = base;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(1e-6);
            assert!(rel < 1e-4, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn constant_critic_gives_zero_actor_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut nets = tiny_nets(2);
        let n = nets.critic.num_layers();
        let (w, b) = nets.critic.layer_mut(n - 1);
        w.iter_mut().for_each(|x| *x = 0.0);
        b[0] = 0.7;
        let batch = random_batch(&mut rng, 16);
        let (q, grad) = nets.actor_objective_and_grad(&batch);
        assert!((q - 0.7).abs() < 1e-15);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    /// Hand-set critic `Q = -|a|` on the raw command. It shares its maximizer
    /// `a = 0` with `-a^2` and is exact with two ReLU units.
    fn abs_critic(scaling: &InputScaling) -> Mlp {
        let k = scaling.action_scale;
        let c = scaling.action_offset;
        // hidden: relu(+-(k x + c)) where x is the scaled action input
        let w1 = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, k, -k];
        let b1 = vec![c, -c];
        let w2 = vec![-1.0, -1.0];
        let b2 = vec![0.0];
        Mlp::from_layers(&[4, 2, 1], OutputActivation::Identity, &[(w1, b1), (w2, b2)]).unwrap()
    }

    #[test]
    fn actor_climbs_surrogate_critic_towards_zero() {
        let cfg = TrainConfig {
            lr_actor: 1e-2,
            ..Default::default()
        };
        let p = p();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut nets = ActorCritic::new(&cfg, &p, &mut rng);
        nets.critic = abs_critic(&nets.scaling);
        let probe = random_batch(&mut rng, 64);
        let mean_abs = |nets: &ActorCritic| probe.iter().map(|t| nets.policy().command(&t.s).abs()).sum::<f64>() / 64.0;
        let before = mean_abs(&nets);
        assert!(before > 0.4, "initial policy sits near the -0.5 midpoint");
        for _ in 0..300 {
            let batch = random_batch(&mut rng, 64);
            nets.actor_update(&batch);
        }
        let after = mean_abs(&nets);
        assert!(after < 0.1 * before, "before {before} after {after}");
    }

    #[test]
    fn soft_update_examples() {
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut nets = ActorCritic::new(&cfg, &p(), &mut rng);
        nets.actor.params.iter_mut().for_each(|x| *x = 1.0);
        nets.actor_target.params.iter_mut().for_each(|x| *x = 0.0);
        let critic_before = nets.critic_target.clone();
        nets.soft_update(0.0);
        assert!(nets.actor_target.params.iter().all(|&x| x == 0.0));
        assert_eq!(nets.critic_target, critic_before);
        nets.soft_update(0.001);
        assert!(nets.actor_target.params.iter().all(|&x| x == 0.001));
        nets.soft_update(1.0);
        assert_eq!(nets.actor_target, nets.actor);
        assert_eq!(nets.critic_target, nets.critic);
    }

    #[test]
    fn zero_steps_returns_initialized_nets() {
        let cfg = TrainConfig {
            total_steps: 0,
            ..Default::default()
        };
        let out = train(&cfg, &p(), 3).unwrap();
        assert!(out.curve.is_empty());
        assert!(!out.failed);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fresh = ActorCritic::new(&cfg, &p(), &mut rng);
        assert_eq!(out.nets.actor, fresh.actor);
        assert_eq!(out.nets.critic, fresh.critic);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let cfg = TrainConfig {
            total_steps: 3000,
            ..Default::default()
        };
        let a = train(&cfg, &p(), 42).unwrap();
        let b = train(&cfg, &p(), 42).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.nets.actor, b.nets.actor);
        let c = train(&cfg, &p(), 43).unwrap();
        assert_ne!(a.curve, c.curve);
    }

    #[test]
    fn policy_output_is_bounded() {
        let cfg = TrainConfig {
            final_init: 5.0,
            ..Default::default()
        };
        let p = p();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pol = ActorCritic::new(&cfg, &p, &mut rng).policy();
        for _ in 0..20_000 {
            let s = KinematicState::new(
                rng.gen_range(-1e4..1e4),
                rng.gen_range(-1e4..1e4),
                rng.gen_range(-1e3..1e3),
            );
            let u = pol.command(&s);
            assert!((p.u_min..=p.u_max).contains(&u), "{u}");
        }
    }

    #[test]
    fn divergence_detector() {
        assert!(!diverged(&[], -190.0));
        let mut curve = vec![-20.0; 90];
        curve.extend([-199.0; 10]);
        assert!(diverged(&curve, -190.0));
        curve[95] = -50.0;
        assert!(!diverged(&curve, -190.0));
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * x[0], 8.0 * x[1]];
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-3), "{x:?}");
    }
}
