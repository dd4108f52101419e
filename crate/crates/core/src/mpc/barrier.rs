//! Primal log-barrier interior-point method for box-constrained command
//! sequences.
//!
//! Minimizes `J(u) + mu * sum_k [-ln(u_k - lo) - ln(hi - u_k)]` for a
//! decreasing sequence of `mu`. Each barrier subproblem is solved by damped
//! Newton steps (exact Hessian) with a fraction-to-boundary rule and Armijo
//! backtracking, so every iterate stays strictly inside the box. Long
//! horizons switch to limited-memory BFGS.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{AccParams, KinematicState};
use crate::mpc::rollout::ShootingProblem;

/// Tunables of the interior-point solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierConfig {
    /// Barrier parameter for cold starts.
    pub mu_init: f64,
    pub mu_final: f64,
    /// Geometric reduction factor applied between barrier subproblems.
    pub mu_factor: f64,
    /// Newton iterations allowed per barrier subproblem.
    pub max_inner: usize,
    /// Number of barrier subproblems allowed.
    pub max_outer: usize,
    /// Stationarity tolerance (infinity norm) at the final barrier parameter.
    pub tol: f64,
    /// Intermediate subproblems stop once `|grad|_inf <= stage_tol_factor * mu`.
    pub stage_tol_factor: f64,
    /// Horizons above this use L-BFGS instead of a dense Newton system.
    pub dense_max_horizon: usize,
    pub lbfgs_memory: usize,
    pub max_inner_quasi: usize,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig {
            mu_init: 1e-2,
            mu_final: 1e-8,
            mu_factor: 0.2,
            max_inner: 50,
            max_outer: 10,
            tol: 1e-6,
            stage_tol_factor: 10.0,
            dense_max_horizon: 400,
            lbfgs_memory: 12,
            max_inner_quasi: 2000,
        }
    }
}

impl BarrierConfig {
    /// Barrier parameters visited starting from `mu0`.
    pub fn schedule(&self, mu0: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut mu = mu0.max(self.mu_final);
        loop {
            out.push(mu);
            if mu <= self.mu_final || out.len() >= self.max_outer {
                break;
            }
            mu = (mu * self.mu_factor).max(self.mu_final);
        }
        out
    }
}

/// Single-shooting nonlinear program over `horizon` commands.
#[derive(Clone, Debug, PartialEq)]
pub struct NlpProblem {
    pub s0: KinematicState,
    pub horizon: usize,
    pub u_min: f64,
    pub u_max: f64,
    /// Initial barrier parameter.
    pub mu: f64,
    pub warm_start: Option<Vec<f64>>,
}

impl NlpProblem {
    pub fn new(s0: KinematicState, horizon: usize, p: &AccParams) -> Self {
        NlpProblem {
            s0,
            horizon,
            u_min: p.u_min,
            u_max: p.u_max,
            mu: BarrierConfig::default().mu_init,
            warm_start: None,
        }
    }

    pub fn with_warm_start(mut self, u: Vec<f64>) -> Self {
        self.warm_start = Some(u);
        self
    }
}

/// Outcome of one interior-point solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Rollout cost at the returned commands, without the barrier term.
    pub objective: f64,
    pub iterations: usize,
    /// Stationarity residual of the barrier subproblem at the final `mu`.
    pub grad_inf_norm: f64,
    pub final_mu: f64,
    pub converged: bool,
}

/// Reusable solver: caches the prediction model for a fixed horizon.
#[derive(Clone, Debug)]
pub struct BarrierSolver {
    prob: ShootingProblem,
    cfg: BarrierConfig,
    lo: f64,
    hi: f64,
    hess: Vec<f64>,
}

impl BarrierSolver {
    pub fn new(horizon: usize, p: &AccParams, cfg: BarrierConfig) -> Self {
        assert!(horizon >= 1, "horizon must be at least one step");
        BarrierSolver {
            prob: ShootingProblem::new(KinematicState::ZERO, horizon, p),
            cfg,
            lo: p.u_min,
            hi: p.u_max,
            hess: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.prob.horizon
    }

    pub fn problem(&self) -> &ShootingProblem {
        &self.prob
    }

    pub fn set_bounds(&mut self, lo: f64, hi: f64) {
        assert!(lo < hi);
        self.lo = lo;
        self.hi = hi;
    }

    /// Strictly interior starting point: the warm start projected with a
    /// margin, or the box midpoint.
    pub fn initial_point(&self, warm: Option<&[f64]>) -> Vec<f64> {
        let h = self.prob.horizon;
        let mid = 0.5 * (self.lo + self.hi);
        let margin = 1e-6 * (self.hi - self.lo);
        match warm {
            Some(w) if !w.is_empty() => (0..h)
                .map(|k| {
                    let v = w[k.min(w.len() - 1)];
                    let v = if v.is_finite() { v } else { mid };
                    v.clamp(self.lo + margin, self.hi - margin)
                })
                .collect(),
            _ => vec![mid; h],
        }
    }

    pub fn solve(&mut self, s0: KinematicState, warm: Option<&[f64]>, mu0: f64) -> (Vec<f64>, SolveReport) {
        self.prob.set_initial_state(s0);
        let mut u = self.initial_point(warm);
        let schedule = self.cfg.schedule(mu0);
        let dense = self.prob.horizon <= self.cfg.dense_max_horizon;
        let mut iterations = 0;
        let mut grad_inf = f64::INFINITY;
        let mut last_mu = mu0;
        for (stage, &mu) in schedule.iter().enumerate() {
            let last = stage + 1 == schedule.len();
            let stage_tol = if last {
                self.cfg.tol
            } else {
                self.cfg.tol.max(self.cfg.stage_tol_factor * mu)
            };
            let (it, g) = if dense {
                self.newton_stage(&mut u, mu, stage_tol)
            } else {
                self.lbfgs_stage(&mut u, mu, stage_tol)
            };
            iterations += it;
            grad_inf = g;
            last_mu = mu;
        }
        let converged = last_mu <= self.cfg.mu_final * (1.0 + 1e-12) && grad_inf < self.cfg.tol;
        let report = SolveReport {
            objective: self.prob.cost(&u),
            iterations,
            grad_inf_norm: grad_inf,
            final_mu: last_mu,
            converged,
        };
        (u, report)
    }

    fn barrier_value(&self, u: &[f64], mu: f64) -> f64 {
        let mut b = 0.0;
        for &x in u {
            let dl = x - self.lo;
            let du = self.hi - x;
            if dl <= 0.0 || du <= 0.0 {
                return f64::INFINITY;
            }
            b -= dl.ln() + du.ln();
        }
        mu * b
    }

    /// Objective and gradient of the barrier subproblem.
    fn eval(&self, u: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        let j = self.prob.cost_and_gradient(u, grad);
        for (g, &x) in grad.iter_mut().zip(u) {
            *g += mu * (-1.0 / (x - self.lo) + 1.0 / (self.hi - x));
        }
        j + self.barrier_value(u, mu)
    }

    fn merit(&self, u: &[f64], mu: f64) -> f64 {
        let b = self.barrier_value(u, mu);
        if !b.is_finite() {
            return f64::INFINITY;
        }
        self.prob.cost(u) + b
    }

    /// Largest step in `(0, 1]` keeping 0.5% of the distance to each bound.
    fn max_step(&self, u: &[f64], d: &[f64]) -> f64 {
        const FRACTION: f64 = 0.995;
        let mut alpha: f64 = 1.0;
        for (&x, &dx) in u.iter().zip(d) {
            if dx > 0.0 {
                alpha = alpha.min(FRACTION * (self.hi - x) / dx);
            } else if dx < 0.0 {
                alpha = alpha.min(FRACTION * (x - self.lo) / -dx);
            }
        }
        alpha
    }

    /// Armijo backtracking from `alpha0`. Returns the accepted step length
    /// and merit value, or `None` if no decrease was found.
    #[allow(clippy::too_many_arguments)]
    fn line_search(
        &self,
        u: &[f64],
        d: &[f64],
        f0: f64,
        slope: f64,
        mu: f64,
        alpha0: f64,
        trial: &mut Vec<f64>,
    ) -> Option<(f64, f64)> {
        const ARMIJO: f64 = 1e-4;
        let mut alpha = alpha0;
        for _ in 0..60 {
            trial.clear();
            trial.extend(u.iter().zip(d).map(|(x, dx)| x + alpha * dx));
            let f = self.merit(trial, mu);
            if f.is_finite() && f <= f0 + ARMIJO * alpha * slope {
                return Some((alpha, f));
            }
            alpha *= 0.5;
        }
        None
    }

    fn newton_stage(&mut self, u: &mut Vec<f64>, mu: f64, stage_tol: f64) -> (usize, f64) {
        let h = u.len();
        let mut grad = vec![0.0; h];
        let mut trial = Vec::with_capacity(h);
        self.hess.resize(h * h, 0.0);
        let mut it = 0;
        loop {
            let f = self.eval(u, mu, &mut grad);
            let g_inf = inf_norm(&grad);
            if g_inf <= stage_tol || it >= self.cfg.max_inner {
                return (it, g_inf);
            }
            it += 1;
            self.prob.hessian(u, &mut self.hess);
            for k in 0..h {
                let dl = u[k] - self.lo;
                let du = self.hi - u[k];
                self.hess[k * h + k] += mu * (1.0 / (dl * dl) + 1.0 / (du * du));
            }
            let d = match newton_direction(&self.hess, &grad, h) {
                Some(d) => d,
                None => return (it, g_inf),
            };
            let slope: f64 = grad.iter().zip(&d).map(|(g, x)| g * x).sum();
            if slope >= 0.0 {
                return (it, g_inf);
            }
            let alpha0 = self.max_step(u, &d);
            // Newton decrement below roundoff of the merit value: the line
            // search cannot see a decrease, so take the step unconditionally.
            if -slope < 1e-12 * f.abs().max(1.0) {
                u.iter_mut().zip(&d).for_each(|(x, dx)| *x += alpha0 * dx);
                continue;
            }
            match self.line_search(u, &d, f, slope, mu, alpha0, &mut trial) {
                Some(_) => std::mem::swap(u, &mut trial),
                None => return (it, g_inf),
            }
        }
    }

    fn lbfgs_stage(&mut self, u: &mut Vec<f64>, mu: f64, stage_tol: f64) -> (usize, f64) {
        let h = u.len();
        let m = self.cfg.lbfgs_memory.max(1);
        let mut grad = vec![0.0; h];
        let mut new_grad = vec![0.0; h];
        let mut trial = Vec::with_capacity(h);
        let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(m);
        let mut f = self.eval(u, mu, &mut grad);
        let mut it = 0;
        loop {
            let g_inf = inf_norm(&grad);
            if g_inf <= stage_tol || it >= self.cfg.max_inner_quasi {
                return (it, g_inf);
            }
            it += 1;
            // Two-loop recursion with a diagonal barrier-curvature seed.
            let mut q = grad.clone();
            let mut alphas = Vec::with_capacity(mem.len());
            for (s, y, rho) in mem.iter().rev() {
                let a = rho * dot(s, &q);
                q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                alphas.push(a);
            }
            let gamma = mem.back().map(|(s, y, _)| dot(s, y) / dot(y, y)).unwrap_or(0.0);
            for (k, qk) in q.iter_mut().enumerate() {
                let dl = u[k] - self.lo;
                let du = self.hi - u[k];
                let diag = mu * (1.0 / (dl * dl) + 1.0 / (du * du));
                let h0 = if gamma > 0.0 {
                    1.0 / (1.0 / gamma + diag)
                } else {
                    1.0 / (1.0 + diag)
                };
                *qk *= h0;
            }
            for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
                let b = rho * dot(y, &q);
                q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
            }
            let mut d: Vec<f64> = q.iter().map(|x| -x).collect();
            let mut slope = dot(&grad, &d);
            if slope >= 0.0 {
                mem.clear();
                d = grad.iter().map(|g| -g).collect();
                slope = dot(&grad, &d);
            }
            let alpha0 = self.max_step(u, &d);
            let Some((_, f_new)) = self.line_search(u, &d, f, slope, mu, alpha0, &mut trial) else {
                if mem.is_empty() {
                    return (it, g_inf);
                }
                mem.clear();
                continue;
            };
            let f_next = self.eval(&trial, mu, &mut new_grad);
            debug_assert!((f_next - f_new).abs() <= 1e-9 * f_new.abs().max(1.0));
            let s: Vec<f64> = trial.iter().zip(u.iter()).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                if mem.len() == m {
                    mem.pop_front();
                }
                mem.push_back((s, y, 1.0 / sy));
            }
            std::mem::swap(u, &mut trial);
            std::mem::swap(&mut grad, &mut new_grad);
            f = f_next;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Solves `H d = -g` by Cholesky, adding a growing ridge if `H` is not
/// numerically positive definite.
fn newton_direction(hess: &[f64], grad: &[f64], n: usize) -> Option<Vec<f64>> {
    let max_diag = (0..n).map(|i| hess[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
    let rhs = DVector::from_iterator(n, grad.iter().map(|g| -g));
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut m = DMatrix::from_row_slice(n, n, hess);
        if ridge > 0.0 {
            for i in 0..n {
                m[(i, i)] += ridge;
            }
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&rhs);
            if d.iter().all(|x| x.is_finite()) {
                return Some(d.as_slice().to_vec());
            }
        }
        ridge = if ridge == 0.0 { 1e-12 * max_diag } else { ridge * 100.0 };
    }
    None
}

/// Minimizes the single-shooting objective plus a log barrier on the
/// command bounds.
pub fn solve_barrier(prob: &NlpProblem, p: &AccParams, cfg: &BarrierConfig) -> (Vec<f64>, SolveReport) {
    let mut solver = BarrierSolver::new(prob.horizon, p, *cfg);
    solver.set_bounds(prob.u_min, prob.u_max);
    solver.solve(prob.s0, prob.warm_start.as_deref(), prob.mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> AccParams {
        AccParams::default()
    }

    #[test]
    fn schedule_reaches_final_mu() {
        let cfg = BarrierConfig::default();
        let s = cfg.schedule(1e-2);
        assert_eq!(s.first(), Some(&1e-2));
        assert_eq!(*s.last().unwrap(), 1e-8);
        assert!(s.windows(2).all(|w| w[1] < w[0]));
        assert!(s.len() <= cfg.max_outer);
        assert_eq!(cfg.schedule(1e-9), vec![1e-8]);
    }

    #[test]
    fn equilibrium_solution_is_zero() {
        let p = p();
        let prob = NlpProblem::new(KinematicState::ZERO, 30, &p);
        let (u, rep) = solve_barrier(&prob, &p, &BarrierConfig::default());
        assert!(rep.converged, "{rep:?}");
        assert!(u.iter().all(|x| x.abs() < 1e-3));
        assert!((rep.objective - 30.0 * 1e-4).abs() < 1e-8);
    }

    #[test]
    fn iterates_stay_strictly_interior() {
        let p = p();
        for s0 in [
            KinematicState::new(5.0, 5.0, 0.0),
            KinematicState::new(-15.0, -5.0, 2.0),
            KinematicState::new(20.0, 5.0, -3.0),
        ] {
            let prob = NlpProblem::new(s0, 40, &p);
            let (u, rep) = solve_barrier(&prob, &p, &BarrierConfig::default());
            assert!(rep.converged, "{s0:?}: {rep:?}");
            assert!(rep.grad_inf_norm < 1e-6);
            assert!(u.iter().all(|&x| p.u_min < x && x < p.u_max));
        }
    }

    #[test]
    fn infeasible_warm_start_is_projected() {
        let p = p();
        let solver = BarrierSolver::new(4, &p, BarrierConfig::default());
        let u0 = solver.initial_point(Some(&[5.0, -9.0, f64::NAN, 0.3]));
        let margin = 1e-6 * 5.0;
        assert_eq!(u0, vec![2.0 - margin, -3.0 + margin, -0.5, 0.3]);
        let prob = NlpProblem::new(KinematicState::new(5.0, 5.0, 0.0), 20, &p).with_warm_start(vec![7.0; 20]);
        let (u, rep) = solve_barrier(&prob, &p, &BarrierConfig::default());
        assert!(rep.converged);
        assert!(u.iter().all(|&x| p.u_min < x && x < p.u_max));
    }

    #[test]
    fn quasi_newton_agrees_with_newton() {
        let p = p();
        let s0 = KinematicState::new(4.0, -2.0, 1.0);
        let prob = NlpProblem::new(s0, 30, &p);
        let (_, newton) = solve_barrier(&prob, &p, &BarrierConfig::default());
        let cfg = BarrierConfig {
            dense_max_horizon: 10,
            ..Default::default()
        };
        let (u, quasi) = solve_barrier(&prob, &p, &cfg);
        assert!(u.iter().all(|&x| p.u_min < x && x < p.u_max));
        let rel = (quasi.objective - newton.objective).abs() / newton.objective;
        assert!(rel < 1e-3, "newton {} quasi {}", newton.objective, quasi.objective);
    }
}
