//! Closed- and open-loop episode drivers shared by every controller.

use std::time::Instant;

use crate::cost::stage_cost;
use crate::dynamics::{AccParams, KinematicState, ModelSpec, Plant, WorldState};
use crate::error::{Error, Result};
use crate::trace::{EpisodeTrace, TraceStep};

/// A command chosen by a controller for one control period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action {
    pub u: f64,
    /// False when an iterative solver stopped at its iteration cap.
    pub converged: bool,
}

impl Action {
    pub fn new(u: f64) -> Self {
        Action { u, converged: true }
    }
}

/// Anything that maps a measured kinematic state to a command.
pub trait Controller {
    fn name(&self) -> String;

    /// Clears per-episode memory such as warm starts.
    fn reset(&mut self) {}

    fn act(&mut self, s: &KinematicState) -> Action;
}

/// Preceding-vehicle acceleration at control step `k`.
pub type Disturbance<'a> = &'a dyn Fn(usize) -> f64;

pub fn no_disturbance(_: usize) -> f64 {
    0.0
}

/// Runs `steps` control periods in closed loop. Commands are clamped to the
/// admissible range before actuation.
pub fn run_closed_loop(
    ctrl: &mut dyn Controller,
    model: &ModelSpec,
    w0: WorldState,
    steps: usize,
    p: &AccParams,
    a_prec: Disturbance<'_>,
) -> Result<EpisodeTrace> {
    let mut plant = Plant::new(model, w0, p)?;
    ctrl.reset();
    let mut trace = EpisodeTrace {
        steps: Vec::with_capacity(steps),
        ..Default::default()
    };
    for k in 0..steps {
        let s = plant.kinematic();
        let t0 = Instant::now();
        let action = ctrl.act(&s);
        trace.controller_secs += t0.elapsed().as_secs_f64();
        if !action.u.is_finite() {
            return Err(Error::Unsupported(format!(
                "controller {} produced a non-finite command at step {k}",
                ctrl.name()
            )));
        }
        let u = p.clamp_command(action.u);
        let t1 = Instant::now();
        let out = plant.step(u, a_prec(k));
        trace.simulation_secs += t1.elapsed().as_secs_f64();
        trace.steps.push(log_step(
            k,
            &s,
            u,
            out.realized_accel,
            out.power_limited,
            action.converged,
            p,
        ));
    }
    Ok(trace)
}

/// Applies a fixed command sequence.
pub fn run_open_loop(
    commands: &[f64],
    model: &ModelSpec,
    w0: WorldState,
    p: &AccParams,
    a_prec: Disturbance<'_>,
) -> Result<EpisodeTrace> {
    let mut plant = Plant::new(model, w0, p)?;
    let mut trace = EpisodeTrace {
        steps: Vec::with_capacity(commands.len()),
        ..Default::default()
    };
    let t1 = Instant::now();
    for (k, &cmd) in commands.iter().enumerate() {
        let s = plant.kinematic();
        let u = p.clamp_command(cmd);
        let out = plant.step(u, a_prec(k));
        trace
            .steps
            .push(log_step(k, &s, u, out.realized_accel, out.power_limited, true, p));
    }
    trace.simulation_secs = t1.elapsed().as_secs_f64();
    Ok(trace)
}

fn log_step(
    k: usize,
    s: &KinematicState,
    u: f64,
    realized: f64,
    power_limited: bool,
    converged: bool,
    p: &AccParams,
) -> TraceStep {
    let jerk = (realized - s.a) / p.dt;
    TraceStep {
        t: k as f64 * p.dt,
        e: s.e,
        ev: s.ev,
        a: s.a,
        u,
        realized_accel: realized,
        jerk,
        stage: stage_cost(s.e, u, jerk, p),
        power_limited,
        solver_converged: converged,
    }
}

/// A controller that always issues the same command.
#[derive(Clone, Copy, Debug)]
pub struct ConstantCommand(pub f64);

impl Controller for ConstantCommand {
    fn name(&self) -> String {
        format!("constant({})", self.0)
    }

    fn act(&mut self, _: &KinematicState) -> Action {
        Action::new(self.0)
    }
}
