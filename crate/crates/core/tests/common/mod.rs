//! Independent oracles shared by the integration tests. Nothing in this
//! file calls into the library's rollout or solver code; the checks that
//! exercise the library against these oracles live in `checks`.
#![allow(dead_code)]

use accbench::AccParams;

type Mat4 = [[f64; 4]; 4];

fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// exp(M) by scaling and squaring of a truncated Taylor series.
pub fn expm4(m: &Mat4) -> Mat4 {
    let norm = m
        .iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a: Mat4 = std::array::from_fn(|i| std::array::from_fn(|j| m[i][j] * scale));
    let mut result: Mat4 = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }));
    let mut term = result;
    for k in 1..=20 {
        term = matmul(&term, &a);
        for i in 0..4 {
            for j in 0..4 {
                term[i][j] /= k as f64;
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    result
}

/// Exact zero-order-hold transition of the kinematic model over `h` seconds:
/// state `[e, ev, a]` with command `u` held and no preceding acceleration.
pub struct ExactCom {
    phi: Mat4,
}

impl ExactCom {
    pub fn new(p: &AccParams, h: f64) -> Self {
        let t = 1.0 / p.tau;
        let m: Mat4 = [
            [0.0, h, -p.t_g * h, 0.0],
            [0.0, 0.0, -h, 0.0],
            [0.0, 0.0, -t * h, t * h],
            [0.0, 0.0, 0.0, 0.0],
        ];
        ExactCom { phi: expm4(&m) }
    }

    pub fn step(&self, s: [f64; 3], u: f64) -> [f64; 3] {
        let x = [s[0], s[1], s[2], u];
        std::array::from_fn(|i| (0..4).map(|k| self.phi[i][k] * x[k]).sum())
    }
}

fn phi(z: f64, eps: f64) -> f64 {
    (z * z + eps).sqrt()
}

/// Open-loop episode cost written out from the model equations: classical
/// RK4 on the kinematic model, stage cost with the model jerk.
pub fn open_loop_cost(s0: [f64; 3], u: &[f64], p: &AccParams) -> f64 {
    let f = |s: [f64; 3], u: f64| [s[1] - p.t_g * s[2], -s[2], (u - s[2]) / p.tau];
    let add = |s: [f64; 3], k: [f64; 3], h: f64| [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]];
    let h = p.dt;
    let mut s = s0;
    let mut total = 0.0;
    for &uk in u {
        let jerk = (uk - s[2]) / p.tau;
        total += p.alpha * phi(s[0] / p.e_nmax, p.eps)
            + p.beta * phi(uk / p.u_min, p.eps)
            + p.gamma_w * phi(jerk * p.dt / (p.u_max - p.u_min), p.eps);
        let k1 = f(s, uk);
        let k2 = f(add(s, k1, 0.5 * h), uk);
        let k3 = f(add(s, k2, 0.5 * h), uk);
        let k4 = f(add(s, k3, h), uk);
        s = std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    total
}

/// Derivative-free box-constrained minimizer: CMA-ES on the clamped point
/// with a quadratic penalty on the excess outside `[lo, hi]`.
pub fn cma_minimize(
    f: impl Fn(&[f64]) -> f64,
    n: usize,
    lo: f64,
    hi: f64,
    budget: std::time::Duration,
) -> (Vec<f64>, f64) {
    use cmaes::{CMAESOptions, DVector};
    let obj = |x: &DVector<f64>| {
        let u: Vec<f64> = x.iter().map(|v| v.clamp(lo, hi)).collect();
        let excess: f64 = x.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
        f(&u) + 10.0 * excess
    };
    let x0 = vec![0.0f64.clamp(lo, hi); n];
    let mut state = CMAESOptions::new(x0, 0.1 * (hi - lo))
        .seed(1)
        .max_time(budget)
        .tol_fun(1e-12)
        .tol_x(1e-12)
        .build(obj)
        .expect("valid CMA-ES options");
    let best = state.run().overall_best.expect("at least one generation");
    let u: Vec<f64> = best.point.iter().map(|v| v.clamp(lo, hi)).collect();
    let fu = f(&u);
    (u, fu)
}

/// Central-difference gradient.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `max |a - b| / max |b|`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-300);
    num / den
}
pub mod checks;
pub mod invariants;
