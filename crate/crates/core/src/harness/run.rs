use crate::drl::Policy;
use crate::dynamics::{AccParams, ModelSpec, WorldState};
use crate::episode::{run_closed_loop, run_open_loop, Disturbance};
use crate::error::{Error, Result};
use crate::mpc::{BarrierConfig, BarrierSolver, MpcConfig, MpcController};
use crate::trace::EpisodeTrace;

/// A controller an experiment can run.
#[derive(Clone, Debug)]
pub enum ControllerSpec<'a> {
    Drl(&'a Policy),
    Mpc(MpcConfig),
    /// Whole-episode open-loop optimum; COM only.
    Ipo(BarrierConfig),
}

impl ControllerSpec<'_> {
    pub fn label(&self) -> String {
        match self {
            ControllerSpec::Drl(_) => "DRL".into(),
            ControllerSpec::Mpc(cfg) => format!("MPC(H={})", cfg.horizon),
            ControllerSpec::Ipo(_) => "IPO".into(),
        }
    }
}

/// Runs one episode of `steps` control periods. Commands are clamped to the
/// admissible range before they reach the plant.
pub fn run_episode(
    ctrl: &ControllerSpec<'_>,
    model: &ModelSpec,
    w0: WorldState,
    steps: usize,
    p: &AccParams,
    a_prec: Disturbance<'_>,
) -> Result<EpisodeTrace> {
    if steps == 0 {
        return Err(Error::param("steps", "episode must have at least one step"));
    }
    match ctrl {
        ControllerSpec::Drl(policy) => {
            let mut c = (*policy).clone();
            run_closed_loop(&mut c, model, w0, steps, p, a_prec)
        }
        ControllerSpec::Mpc(cfg) => {
            let mut c = MpcController::new(*cfg, p)?;
            let trace = run_closed_loop(&mut c, model, w0, steps, p, a_prec)?;
            let failures = trace.solver_failures();
            if failures > 0 {
                log::warn!("{}: {failures} of {steps} solves hit the iteration cap", ctrl.label());
            }
            Ok(trace)
        }
        ControllerSpec::Ipo(barrier) => {
            if *model != ModelSpec::Com {
                return Err(Error::Unsupported(format!(
                    "IPO benchmark is defined on the COM only, not on {}",
                    model.label()
                )));
            }
            let mut solver = BarrierSolver::new(steps, p, *barrier);
            let t0 = std::time::Instant::now();
            let (u, report) = solver.solve(w0.kin, None, barrier.mu_init);
            let solve_secs = t0.elapsed().as_secs_f64();
            let mut trace = run_open_loop(&u, model, w0, p, a_prec)?;
            trace.controller_secs = solve_secs;
            for s in trace.steps.iter_mut() {
                s.solver_converged = report.converged;
            }
            Ok(trace)
        }
    }
}
