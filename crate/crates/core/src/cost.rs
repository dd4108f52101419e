//! Smoothed absolute-value stage cost, episode accumulation, and the reward
//! transformation used for training.

use serde::{Deserialize, Serialize};

use crate::dynamics::AccParams;
use crate::error::{Error, Result};
use crate::trace::EpisodeTrace;

/// The three weighted terms of one stage cost evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCostBreakdown {
    pub c_err: f64,
    pub c_ctrl: f64,
    pub c_jerk: f64,
    pub total: f64,
}

/// `sqrt(z^2 + eps)` with its first and second derivatives in `z`.
#[inline]
pub fn smooth_abs(z: f64, eps: f64) -> (f64, f64, f64) {
    let r = (z * z + eps).sqrt();
    (r, z / r, eps / (r * r * r))
}

/// Normalized arguments `(e / e_nmax, u / u_min, jerk / jerk_scale)`.
#[inline]
pub fn normalized_args(e: f64, u: f64, jerk: f64, p: &AccParams) -> [f64; 3] {
    [e / p.e_nmax, u / p.u_min, jerk / p.jerk_scale()]
}

pub fn stage_cost(e: f64, u: f64, jerk: f64, p: &AccParams) -> StageCostBreakdown {
    let [ze, zu, zj] = normalized_args(e, u, jerk, p);
    let c_err = (ze * ze + p.eps).sqrt();
    let c_ctrl = (zu * zu + p.eps).sqrt();
    let c_jerk = (zj * zj + p.eps).sqrt();
    StageCostBreakdown {
        c_err,
        c_ctrl,
        c_jerk,
        total: p.alpha * c_err + p.beta * c_ctrl + p.gamma_w * c_jerk,
    }
}

/// Gradient of the stage total with respect to `(e, u, jerk)`.
pub fn stage_cost_gradient(e: f64, u: f64, jerk: f64, p: &AccParams) -> [f64; 3] {
    let [ze, zu, zj] = normalized_args(e, u, jerk, p);
    [
        p.alpha * smooth_abs(ze, p.eps).1 / p.e_nmax,
        p.beta * smooth_abs(zu, p.eps).1 / p.u_min,
        p.gamma_w * smooth_abs(zj, p.eps).1 / p.jerk_scale(),
    ]
}

/// Jerk implied by the first-order lag model: `(u - a) / tau`.
#[inline]
pub fn model_jerk(u: f64, a: f64, p: &AccParams) -> f64 {
    (u - a) / p.tau
}

/// Undiscounted sum of stage totals. Empty traces are rejected.
pub fn episode_cost(trace: &EpisodeTrace) -> Result<f64> {
    if trace.steps.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(trace.steps.iter().map(|s| s.stage.total).sum())
}

/// Training reward: the negated stage cost clipped into `[-1, 0]`.
pub fn reward(c: f64) -> f64 {
    (-c).clamp(-1.0, 0.0)
}

pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut g = 1.0;
    let mut acc = 0.0;
    for r in rewards {
        acc += g * r;
        g *= gamma;
    }
    acc
}
