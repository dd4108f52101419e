//! Single-shooting transcription: the command sequence is the only decision
//! variable and predicted states come from RK4 rollouts of the COM.

use crate::cost::{model_jerk, smooth_abs, stage_cost};
use crate::dynamics::{rk4_step, AccParams, KinematicState};

/// Discrete-time transition `s' = A s + B u` of the RK4-discretized COM with
/// no preceding-vehicle acceleration. RK4 applied to a linear system is
/// itself linear, so the matrices are read off exactly by stepping unit
/// vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearCom {
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
}

impl LinearCom {
    pub fn new(p: &AccParams) -> Self {
        let mut a = [[0.0; 3]; 3];
        for j in 0..3 {
            let mut x = [0.0; 3];
            x[j] = 1.0;
            let col = rk4_step(&KinematicState::from_array(x), 0.0, 0.0, p.dt, p).to_array();
            for i in 0..3 {
                a[i][j] = col[i];
            }
        }
        let b = rk4_step(&KinematicState::ZERO, 1.0, 0.0, p.dt, p).to_array();
        LinearCom { a, b }
    }

    pub fn apply(&self, s: &[f64; 3], u: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = self.a[i][0] * s[0] + self.a[i][1] * s[1] + self.a[i][2] * s[2] + self.b[i] * u;
        }
        out
    }

    fn apply_transpose(&self, l: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for j in 0..3 {
            out[j] = self.a[0][j] * l[0] + self.a[1][j] * l[1] + self.a[2][j] * l[2];
        }
        out
    }

    /// Impulse response `A^m B` for `m = 0..n`.
    pub fn markov(&self, n: usize) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(n);
        let mut x = self.b;
        for _ in 0..n {
            out.push(x);
            x = self.apply(&x, 0.0);
        }
        out
    }
}

/// Finite-horizon prediction problem from a fixed initial state.
#[derive(Clone, Debug)]
pub struct ShootingProblem {
    pub s0: KinematicState,
    pub horizon: usize,
    params: AccParams,
    lin: LinearCom,
    markov: Vec<[f64; 3]>,
}

impl ShootingProblem {
    pub fn new(s0: KinematicState, horizon: usize, p: &AccParams) -> Self {
        let lin = LinearCom::new(p);
        ShootingProblem {
            s0,
            horizon,
            params: *p,
            markov: lin.markov(horizon),
            lin,
        }
    }

    pub fn params(&self) -> &AccParams {
        &self.params
    }

    /// Re-targets the problem at a new initial state, keeping cached matrices.
    pub fn set_initial_state(&mut self, s0: KinematicState) {
        self.s0 = s0;
    }

    /// Predicted states `s_0 .. s_{H-1}` under `u`.
    pub fn states(&self, u: &[f64]) -> Vec<KinematicState> {
        let mut out = Vec::with_capacity(u.len());
        let mut s = self.s0;
        for &uk in u {
            out.push(s);
            s = rk4_step(&s, uk, 0.0, self.params.dt, &self.params);
        }
        out
    }

    /// Sum of stage costs along the rollout. No terminal cost.
    pub fn cost(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.horizon);
        let p = &self.params;
        let mut s = self.s0;
        let mut total = 0.0;
        for &uk in u {
            total += stage_cost(s.e, uk, model_jerk(uk, s.a, p), p).total;
            s = rk4_step(&s, uk, 0.0, p.dt, p);
        }
        total
    }

    /// Cost and its gradient by reverse accumulation through the rollout.
    pub fn cost_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let p = &self.params;
        let h = u.len();
        debug_assert_eq!(grad.len(), h);
        let states = self.states(u);
        let ke = p.alpha / p.e_nmax;
        let ku = p.beta / p.u_min;
        let kj = p.gamma_w / (p.tau * p.jerk_scale());
        let mut total = 0.0;
        // dJ/ds_{k+1}, starting past the end of the horizon
        let mut lambda = [0.0; 3];
        for k in (0..h).rev() {
            let s = states[k];
            let jerk = model_jerk(u[k], s.a, p);
            let [ze, zu, zj] = crate::cost::normalized_args(s.e, u[k], jerk, p);
            let (ve, de, _) = smooth_abs(ze, p.eps);
            let (vu, du, _) = smooth_abs(zu, p.eps);
            let (vj, dj, _) = smooth_abs(zj, p.eps);
            total += p.alpha * ve + p.beta * vu + p.gamma_w * vj;
            let b_dot = self.lin.b[0] * lambda[0] + self.lin.b[1] * lambda[1] + self.lin.b[2] * lambda[2];
            grad[k] = ku * du + kj * dj + b_dot;
            let mut next = self.lin.apply_transpose(&lambda);
            next[0] += ke * de;
            next[2] -= kj * dj;
            lambda = next;
        }
        total
    }

    /// Exact Hessian of the cost, written row-major into `hess` (H×H).
    ///
    /// Every normalized argument is affine in `u`, so the Hessian is
    /// `sum_r phi''(z_r) g_r g_r^T` over the 3H arguments.
    pub fn hessian(&self, u: &[f64], hess: &mut [f64]) {
        let p = &self.params;
        let h = u.len();
        debug_assert_eq!(hess.len(), h * h);
        hess.iter_mut().for_each(|x| *x = 0.0);
        let states = self.states(u);
        let ce = 1.0 / p.e_nmax;
        let cj = 1.0 / (p.tau * p.jerk_scale());
        let mut row = vec![0.0; h];
        for k in 0..h {
            let s = states[k];
            let jerk = model_jerk(u[k], s.a, p);
            let [ze, zu, zj] = crate::cost::normalized_args(s.e, u[k], jerk, p);

            // e_k depends on u_j, j < k
            let we = p.alpha * smooth_abs(ze, p.eps).2 * ce * ce;
            for j in 0..k {
                row[j] = self.markov[k - 1 - j][0];
            }
            add_outer(hess, h, &row[..k], we);

            let wu = p.beta * smooth_abs(zu, p.eps).2 / (p.u_min * p.u_min);
            hess[k * h + k] += wu;

            // (u_k - a_k) depends on u_j, j <= k
            let wj = p.gamma_w * smooth_abs(zj, p.eps).2 * cj * cj;
            for j in 0..k {
                row[j] = -self.markov[k - 1 - j][2];
            }
            row[k] = 1.0;
            add_outer(hess, h, &row[..=k], wj);
        }
        // mirror upper triangle
        for i in 0..h {
            for j in 0..i {
                hess[i * h + j] = hess[j * h + i];
            }
        }
    }
}

/// Adds `w * v v^T` into the leading block, upper triangle only.
fn add_outer(hess: &mut [f64], n: usize, v: &[f64], w: f64) {
    if w == 0.0 {
        return;
    }
    for (i, &vi) in v.iter().enumerate() {
        let wi = w * vi;
        if wi == 0.0 {
            continue;
        }
        let row = &mut hess[i * n + i..i * n + v.len()];
        for (hij, &vj) in row.iter_mut().zip(&v[i..]) {
            *hij += wi * vj;
        }
    }
}

/// Cost and gradient of the single-shooting objective from `s0` under `u`.
pub fn rollout_cost(s0: &KinematicState, u: &[f64], p: &AccParams) -> (f64, Vec<f64>) {
    let prob = ShootingProblem::new(*s0, u.len(), p);
    let mut g = vec![0.0; u.len()];
    let c = prob.cost_and_gradient(u, &mut g);
    (c, g)
}
