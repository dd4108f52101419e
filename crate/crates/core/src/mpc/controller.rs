use serde::{Deserialize, Serialize};

use crate::dynamics::{AccParams, KinematicState, ModelSpec, WorldState};
use crate::episode::{no_disturbance, run_closed_loop, run_open_loop, Action, Controller, Disturbance};
use crate::error::{Error, Result};
use crate::mpc::barrier::{BarrierConfig, BarrierSolver, SolveReport};
use crate::trace::EpisodeTrace;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon in control steps.
    pub horizon: usize,
    /// Seed each solve with the previous solution shifted by one step.
    pub warm_start: bool,
    /// Initial barrier parameter for warm-started solves.
    pub warm_mu: f64,
    pub barrier: BarrierConfig,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 50,
            warm_start: true,
            warm_mu: 1e-4,
            barrier: BarrierConfig::default(),
        }
    }
}

impl MpcConfig {
    pub fn with_horizon(horizon: usize) -> Self {
        MpcConfig {
            horizon,
            ..Default::default()
        }
    }
}

/// Receding-horizon controller. The prediction model is always the COM with
/// zero preceding-vehicle acceleration, whatever plant it is driving.
#[derive(Clone, Debug)]
pub struct MpcController {
    cfg: MpcConfig,
    solver: BarrierSolver,
    previous: Option<Vec<f64>>,
    /// Reports from every solve since the last reset.
    pub reports: Vec<SolveReport>,
}

impl MpcController {
    pub fn new(cfg: MpcConfig, p: &AccParams) -> Result<Self> {
        if cfg.horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        Ok(MpcController {
            solver: BarrierSolver::new(cfg.horizon, p, cfg.barrier),
            cfg,
            previous: None,
            reports: Vec::new(),
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    /// Solves from `s` and returns the full planned sequence.
    pub fn plan(&mut self, s: &KinematicState) -> (Vec<f64>, SolveReport) {
        let warm = if self.cfg.warm_start {
            self.previous.as_ref().map(|prev| {
                let mut w = prev[1.min(prev.len() - 1)..].to_vec();
                w.push(*prev.last().unwrap());
                w
            })
        } else {
            None
        };
        let mu0 = if warm.is_some() {
            self.cfg.warm_mu
        } else {
            self.cfg.barrier.mu_init
        };
        let (u, rep) = self.solver.solve(*s, warm.as_deref(), mu0);
        if !rep.converged {
            log::warn!(
                "MPC solve did not converge (|g|={:.3e}, iters={}); applying best iterate",
                rep.grad_inf_norm,
                rep.iterations
            );
        }
        self.previous = Some(u.clone());
        self.reports.push(rep);
        (u, rep)
    }
}

impl Controller for MpcController {
    fn name(&self) -> String {
        format!("MPC(H={})", self.cfg.horizon)
    }

    fn reset(&mut self) {
        self.previous = None;
        self.reports.clear();
    }

    fn act(&mut self, s: &KinematicState) -> Action {
        let (u, rep) = self.plan(s);
        Action {
            u: u[0],
            converged: rep.converged,
        }
    }
}

/// Closed-loop MPC episode on `model` for `steps` control periods.
pub fn mpc_controller(
    model: &ModelSpec,
    w0: WorldState,
    steps: usize,
    p: &AccParams,
    cfg: &MpcConfig,
    a_prec: Disturbance<'_>,
) -> Result<EpisodeTrace> {
    let mut ctrl = MpcController::new(*cfg, p)?;
    run_closed_loop(&mut ctrl, model, w0, steps, p, a_prec)
}

/// Whole-episode open-loop optimum on the COM.
#[derive(Clone, Debug)]
pub struct IpoSolution {
    pub commands: Vec<f64>,
    pub report: SolveReport,
    pub trace: EpisodeTrace,
}

/// Optimizes the entire episode once (horizon = episode length) and applies
/// the result open loop on the COM.
pub fn ipo_benchmark(s0: KinematicState, steps: usize, p: &AccParams, barrier: &BarrierConfig) -> Result<IpoSolution> {
    if steps == 0 {
        return Err(Error::param("steps", "episode must have at least one step"));
    }
    p.validate()?;
    let start = std::time::Instant::now();
    let mut solver = BarrierSolver::new(steps, p, *barrier);
    let (commands, report) = solver.solve(s0, None, barrier.mu_init);
    let solve_secs = start.elapsed().as_secs_f64();
    if !report.converged {
        log::warn!("IPO benchmark did not converge: {report:?}");
    }
    let w0 = WorldState::from_kinematic(s0, 20.0, p);
    let mut trace = run_open_loop(&commands, &ModelSpec::Com, w0, p, &no_disturbance)?;
    trace.controller_secs = solve_secs;
    for s in trace.steps.iter_mut() {
        s.solver_converged = report.converged;
    }
    Ok(IpoSolution {
        commands,
        report,
        trace,
    })
}
