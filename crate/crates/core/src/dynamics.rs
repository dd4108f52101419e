//! Car-following models: the three-state control-oriented model (COM), a
//! variant with a pure transport delay on the command, and a surrogate
//! high-fidelity vehicle used to probe modeling error.
//!
//! All models advance one control period `dt` per call. The COM and its
//! delayed variant are integrated with classical RK4; the surrogate runs an
//! inner loop at `inner_dt` (100 Hz by default).

use std::collections::VecDeque;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.81;

/// Resolution at which command delays are represented (s).
pub const DELAY_RESOLUTION: f64 = 0.01;

/// Gap-keeping error, relative speed and ego acceleration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    /// Gap-keeping error (m).
    pub e: f64,
    /// Preceding minus ego speed (m/s).
    pub ev: f64,
    /// Ego acceleration (m/s²).
    pub a: f64,
}

impl KinematicState {
    pub const ZERO: KinematicState = KinematicState {
        e: 0.0,
        ev: 0.0,
        a: 0.0,
    };

    pub const fn new(e: f64, ev: f64, a: f64) -> Self {
        KinematicState { e, ev, a }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.e, self.ev, self.a]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        KinematicState::new(x[0], x[1], x[2])
    }

    pub fn is_finite(&self) -> bool {
        self.e.is_finite() && self.ev.is_finite() && self.a.is_finite()
    }

    pub fn max_abs_diff(&self, other: &KinematicState) -> f64 {
        (self.e - other.e)
            .abs()
            .max((self.ev - other.ev).abs())
            .max((self.a - other.a).abs())
    }
}

impl Add for KinematicState {
    type Output = KinematicState;
    fn add(self, o: KinematicState) -> KinematicState {
        KinematicState::new(self.e + o.e, self.ev + o.ev, self.a + o.a)
    }
}

impl Sub for KinematicState {
    type Output = KinematicState;
    fn sub(self, o: KinematicState) -> KinematicState {
        KinematicState::new(self.e - o.e, self.ev - o.ev, self.a - o.a)
    }
}

impl Mul<f64> for KinematicState {
    type Output = KinematicState;
    fn mul(self, k: f64) -> KinematicState {
        KinematicState::new(self.e * k, self.ev * k, self.a * k)
    }
}

/// Physical and cost constants shared by every controller and model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccParams {
    /// Constant time gap (s).
    pub t_g: f64,
    /// First-order lag of the acceleration response (s).
    pub tau: f64,
    /// Control period (s).
    pub dt: f64,
    pub u_max: f64,
    pub u_min: f64,
    /// Nominal maximum gap-keeping error (m).
    pub e_nmax: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_w: f64,
    /// Smoothing constant inside the square roots of the stage cost.
    pub eps: f64,
    /// Standstill distance (m).
    pub d_0: f64,
    /// Body length of the preceding vehicle (m).
    pub b: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        AccParams {
            t_g: 1.0,
            tau: 0.1,
            dt: 0.1,
            u_max: 2.0,
            u_min: -3.0,
            e_nmax: 15.0,
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            gamma_w: 1.0 / 3.0,
            eps: 1e-8,
            d_0: 2.0,
            b: 4.5,
        }
    }
}

impl AccParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("t_g", self.t_g),
            ("tau", self.tau),
            ("dt", self.dt),
            ("u_max", self.u_max),
            ("u_min", self.u_min),
            ("e_nmax", self.e_nmax),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma_w", self.gamma_w),
            ("eps", self.eps),
            ("d_0", self.d_0),
            ("b", self.b),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if !(self.u_min < 0.0 && self.u_max > 0.0) {
            return Err(Error::param("u_min", "require u_min < 0 < u_max"));
        }
        if self.tau <= 0.0 {
            return Err(Error::param("tau", "must be positive"));
        }
        if self.dt <= 0.0 {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.eps <= 0.0 {
            return Err(Error::param("eps", "must be positive"));
        }
        if self.e_nmax <= 0.0 {
            return Err(Error::param("e_nmax", "must be positive"));
        }
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma_w", self.gamma_w)] {
            if w < 0.0 {
                return Err(Error::param(name, "weights must be non-negative"));
            }
        }
        let sum = self.alpha + self.beta + self.gamma_w;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param("alpha", format!("weights must sum to 1 (got {sum})")));
        }
        Ok(())
    }

    /// Jerk normalization `(u_max - u_min) / dt`.
    pub fn jerk_scale(&self) -> f64 {
        (self.u_max - self.u_min) / self.dt
    }

    /// Largest command magnitude.
    pub fn u_abs_max(&self) -> f64 {
        self.u_max.abs().max(self.u_min.abs())
    }

    pub fn u_mid(&self) -> f64 {
        0.5 * (self.u_min + self.u_max)
    }

    pub fn clamp_command(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }

    /// Desired inter-vehicle distance at ego speed `v`.
    pub fn desired_gap(&self, v: f64) -> f64 {
        self.d_0 + self.t_g * v
    }
}

/// Time derivative of the COM state under command `u` and preceding-vehicle
/// acceleration `a_prec`.
pub fn com_derivative(s: &KinematicState, u: f64, a_prec: f64, p: &AccParams) -> KinematicState {
    KinematicState {
        e: s.ev - p.t_g * s.a,
        ev: a_prec - s.a,
        a: (u - s.a) / p.tau,
    }
}

/// One classical RK4 step of the COM with `u` and `a_prec` held over `dt`.
pub fn rk4_step(s: &KinematicState, u: f64, a_prec: f64, dt: f64, p: &AccParams) -> KinematicState {
    let k1 = com_derivative(s, u, a_prec, p);
    let k2 = com_derivative(&(*s + k1 * (0.5 * dt)), u, a_prec, p);
    let k3 = com_derivative(&(*s + k2 * (0.5 * dt)), u, a_prec, p);
    let k4 = com_derivative(&(*s + k3 * dt), u, a_prec, p);
    *s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Absolute positions and speeds of both vehicles, plus the kinematic state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub x_prec: f64,
    pub v_prec: f64,
    pub x_ego: f64,
    pub v_ego: f64,
    pub kin: KinematicState,
}

impl WorldState {
    /// Places the ego vehicle at the origin with speed `v_ego` and positions
    /// the preceding vehicle so that the gap error equals `kin.e`.
    pub fn from_kinematic(kin: KinematicState, v_ego: f64, p: &AccParams) -> Self {
        let x_ego = 0.0;
        WorldState {
            x_prec: x_ego + kin.e + p.b + p.desired_gap(v_ego),
            v_prec: v_ego + kin.ev,
            x_ego,
            v_ego,
            kin,
        }
    }

    /// Gap error computed from positions and ego speed.
    pub fn reconstructed_gap_error(&self, p: &AccParams) -> f64 {
        self.x_prec - self.x_ego - p.b - p.desired_gap(self.v_ego)
    }

    pub fn reconstructed_relative_speed(&self) -> f64 {
        self.v_prec - self.v_ego
    }

    fn sync_kinematics(&mut self, a: f64, p: &AccParams) {
        self.kin = KinematicState {
            e: self.reconstructed_gap_error(p),
            ev: self.reconstructed_relative_speed(),
            a,
        };
    }
}

/// Parameters of the surrogate high-fidelity vehicle.
///
/// The numeric defaults describe a plausible mid-size hybrid sedan. Nothing
/// downstream relies on their exact values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateParams {
    /// Vehicle mass (kg).
    pub mass: f64,
    /// Lumped `0.5 * rho * Cd * A` (kg/m).
    pub drag_area: f64,
    /// Rolling-resistance coefficient.
    pub c_rr: f64,
    /// Traction power limit (W).
    pub p_max: f64,
    /// Command transport delay (s).
    pub control_delay: f64,
    pub pi_kp: f64,
    pub pi_ki: f64,
    /// Lag between commanded and delivered traction force (s).
    pub powertrain_lag: f64,
    /// Inner integration step (s).
    pub inner_dt: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            mass: 1530.0,
            drag_area: 0.36,
            c_rr: 0.008,
            p_max: 73_000.0,
            control_delay: 0.2,
            pi_kp: 2.0,
            pi_ki: 1.0,
            powertrain_lag: 0.05,
            inner_dt: 0.01,
        }
    }
}

impl SurrogateParams {
    pub fn validate(&self, p: &AccParams) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::param("mass", "must be positive"));
        }
        if !(self.p_max > 0.0) {
            return Err(Error::param("p_max", "must be positive"));
        }
        if !(self.drag_area >= 0.0 && self.c_rr >= 0.0) {
            return Err(Error::param("drag_area", "resistance coefficients must be >= 0"));
        }
        if !(self.powertrain_lag > 0.0) {
            return Err(Error::param("powertrain_lag", "must be positive"));
        }
        if !(self.pi_kp >= 0.0 && self.pi_ki >= 0.0) {
            return Err(Error::param("pi_kp", "PI gains must be >= 0"));
        }
        if !(self.inner_dt > 0.0) || integer_ratio(p.dt, self.inner_dt).is_none() {
            return Err(Error::param("inner_dt", "must divide dt exactly"));
        }
        delay_steps(self.control_delay, self.inner_dt, "control_delay")?;
        Ok(())
    }

    /// Aerodynamic drag plus rolling resistance at speed `v` (N).
    pub fn resistive_force(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        self.drag_area * v * v + self.c_rr * self.mass * GRAVITY
    }
}

/// Which plant the closed loop is simulated on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Com,
    DelayedCom { tau_d: f64 },
    SurrogateHfm(SurrogateParams),
}

impl ModelSpec {
    pub fn validate(&self, p: &AccParams) -> Result<()> {
        p.validate()?;
        match self {
            ModelSpec::Com => Ok(()),
            ModelSpec::DelayedCom { tau_d } => delay_steps(*tau_d, DELAY_RESOLUTION, "tau_d").map(|_| ()),
            ModelSpec::SurrogateHfm(sp) => sp.validate(p),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Com => "com".into(),
            ModelSpec::DelayedCom { tau_d } => format!("delayed_com({tau_d})"),
            ModelSpec::SurrogateHfm(_) => "shfm".into(),
        }
    }
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    if n >= 0.0 && (r - n).abs() < 1e-9 * n.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

fn delay_steps(delay: f64, resolution: f64, field: &'static str) -> Result<usize> {
    if !(delay >= 0.0) || !delay.is_finite() {
        return Err(Error::param(field, "delay must be finite and >= 0"));
    }
    integer_ratio(delay, resolution)
        .ok_or_else(|| Error::param(field, format!("delay {delay} is not a multiple of {resolution} s")))
}

/// Result of advancing a plant by one control period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    /// Ego acceleration at the end of the period (m/s²).
    pub realized_accel: f64,
    /// True when the traction power limit clamped the force at any inner step.
    pub power_limited: bool,
}

#[derive(Clone, Debug)]
enum PlantState {
    Com,
    Delayed {
        /// Whole control periods of delay.
        whole: usize,
        /// Fractional remainder of the delay within one period (s).
        frac: f64,
        /// Issued commands, newest last.
        history: VecDeque<f64>,
    },
    Surrogate {
        sp: SurrogateParams,
        inner_steps: usize,
        buffer: VecDeque<f64>,
        force: f64,
        integral: f64,
        a_ref: f64,
    },
}

/// A simulated vehicle pair. Cloning a plant snapshots all internal buffers.
#[derive(Clone, Debug)]
pub struct Plant {
    params: AccParams,
    world: WorldState,
    state: PlantState,
}

impl Plant {
    pub fn new(model: &ModelSpec, world: WorldState, params: &AccParams) -> Result<Plant> {
        model.validate(params)?;
        if !world.kin.is_finite() || !world.v_ego.is_finite() || !world.v_prec.is_finite() {
            return Err(Error::param("world", "initial state must be finite"));
        }
        let a0 = world.kin.a;
        let state = match *model {
            ModelSpec::Com => PlantState::Com,
            ModelSpec::DelayedCom { tau_d } => {
                let total = delay_steps(tau_d, DELAY_RESOLUTION, "tau_d")?;
                let per_period = integer_ratio(params.dt, DELAY_RESOLUTION);
                let (whole, frac) = match per_period {
                    Some(n) if n > 0 => (total / n, (total % n) as f64 * DELAY_RESOLUTION),
                    _ => {
                        let whole = (tau_d / params.dt).floor() as usize;
                        (whole, tau_d - whole as f64 * params.dt)
                    }
                };
                let history = std::iter::repeat_n(a0, whole + 2).collect();
                PlantState::Delayed { whole, frac, history }
            }
            ModelSpec::SurrogateHfm(sp) => {
                let inner_steps = integer_ratio(params.dt, sp.inner_dt).unwrap_or(1).max(1);
                let d = delay_steps(sp.control_delay, sp.inner_dt, "control_delay")?;
                if world.v_ego < 0.0 {
                    return Err(Error::param("v_ego", "surrogate model requires v_ego >= 0"));
                }
                PlantState::Surrogate {
                    sp,
                    inner_steps,
                    buffer: std::iter::repeat_n(a0, d).collect(),
                    force: sp.mass * a0 + sp.resistive_force(world.v_ego),
                    integral: 0.0,
                    a_ref: a0,
                }
            }
        };
        Ok(Plant {
            params: *params,
            world,
            state,
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn kinematic(&self) -> KinematicState {
        self.world.kin
    }

    pub fn params(&self) -> &AccParams {
        &self.params
    }

    /// Advances one control period with command `u` (already clamped by the
    /// caller) and preceding-vehicle acceleration `a_prec`.
    pub fn step(&mut self, u: f64, a_prec: f64) -> StepOutcome {
        let p = self.params;
        match &mut self.state {
            PlantState::Com => {
                advance_com(&mut self.world, u, a_prec, p.dt, &p);
                StepOutcome {
                    realized_accel: self.world.kin.a,
                    power_limited: false,
                }
            }
            PlantState::Delayed { whole, frac, history } => {
                history.push_back(u);
                let n = history.len();
                let current = history[n - 1 - *whole];
                if *frac > 0.0 {
                    let older = history[n - 2 - *whole];
                    advance_com(&mut self.world, older, a_prec, *frac, &p);
                    advance_com(&mut self.world, current, a_prec, p.dt - *frac, &p);
                } else {
                    advance_com(&mut self.world, current, a_prec, p.dt, &p);
                }
                while history.len() > *whole + 2 {
                    history.pop_front();
                }
                StepOutcome {
                    realized_accel: self.world.kin.a,
                    power_limited: false,
                }
            }
            PlantState::Surrogate {
                sp,
                inner_steps,
                buffer,
                force,
                integral,
                a_ref,
            } => {
                let mut limited = false;
                for _ in 0..*inner_steps {
                    let applied = if buffer.is_empty() {
                        u
                    } else {
                        buffer.push_back(u);
                        buffer.pop_front().unwrap_or(u)
                    };
                    limited |= surrogate_inner_step(&mut self.world, sp, &p, applied, a_prec, force, integral, a_ref);
                }
                StepOutcome {
                    realized_accel: self.world.kin.a,
                    power_limited: limited,
                }
            }
        }
    }
}

/// RK4 on the COM kinematics and, consistently, on absolute positions.
fn advance_com(w: &mut WorldState, u: f64, a_prec: f64, h: f64, p: &AccParams) {
    let kin = rk4_step(&w.kin, u, a_prec, h, p);
    // y = (x_prec, v_prec, x_ego, v_ego, a)
    let f = |y: &[f64; 5]| -> [f64; 5] { [y[1], a_prec, y[3], y[4], (u - y[4]) / p.tau] };
    let y0 = [w.x_prec, w.v_prec, w.x_ego, w.v_ego, w.kin.a];
    let y = rk4_array(&y0, h, f);
    w.x_prec = y[0];
    w.v_prec = y[1];
    w.x_ego = y[2];
    w.v_ego = y[3];
    w.kin = kin;
}

fn rk4_array<const N: usize>(y: &[f64; N], h: f64, f: impl Fn(&[f64; N]) -> [f64; N]) -> [f64; N] {
    let axpy = |a: &[f64; N], k: &[f64; N], s: f64| -> [f64; N] {
        let mut out = *a;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += s * ki;
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&axpy(y, &k1, 0.5 * h));
    let k3 = f(&axpy(y, &k2, 0.5 * h));
    let k4 = f(&axpy(y, &k3, h));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Force bounds at speed `v`: magnitude limit and traction power limit.
fn clamp_force(f: f64, v: f64, sp: &SurrogateParams, p: &AccParams) -> (f64, bool) {
    let f_abs = sp.mass * p.u_abs_max();
    let mut out = f.clamp(-f_abs, f_abs);
    let mut power_limited = false;
    if out > 0.0 && v > 0.0 && out * v > sp.p_max {
        out = sp.p_max / v;
        power_limited = true;
    }
    (out, power_limited)
}

#[allow(clippy::too_many_arguments)]
fn surrogate_inner_step(
    w: &mut WorldState,
    sp: &SurrogateParams,
    p: &AccParams,
    command: f64,
    a_prec: f64,
    force: &mut f64,
    integral: &mut f64,
    a_ref: &mut f64,
) -> bool {
    let h = sp.inner_dt;
    let m = sp.mass;

    // Reference response the low-level loop is tuned to reproduce.
    *a_ref = command + (*a_ref - command) * (-h / p.tau).exp();
    let err = *a_ref - w.kin.a;
    let feedforward = sp.resistive_force(w.v_ego);
    let raw_cmd = m * (*a_ref + sp.pi_kp * err + sp.pi_ki * (*integral + err * h)) + feedforward;
    let (cmd, cmd_power_limited) = clamp_force(raw_cmd, w.v_ego, sp, p);
    // Conditional integration: freeze the integrator while the command saturates.
    if cmd == raw_cmd {
        *integral += err * h;
    }

    *force = cmd + (*force - cmd) * (-h / sp.powertrain_lag).exp();
    let (applied, power_limited) = clamp_force(*force, w.v_ego, sp, p);

    let accel = |v: f64| -> f64 {
        let net = applied - sp.resistive_force(v);
        if v <= 0.0 && net < 0.0 {
            0.0
        } else {
            net / m
        }
    };
    let f = |y: &[f64; 2]| -> [f64; 2] { [y[1], accel(y[1])] };
    let y = rk4_array(&[w.x_ego, w.v_ego], h, f);
    w.x_ego = y[0];
    w.v_ego = y[1].max(0.0);

    w.x_prec += w.v_prec * h + 0.5 * a_prec * h * h;
    w.v_prec += a_prec * h;

    let a = accel(w.v_ego);
    w.sync_kinematics(a, p);
    power_limited || cmd_power_limited
}
