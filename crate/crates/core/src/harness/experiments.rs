//! The experiment matrix: horizon sweep, IC grids, delay sweep, surrogate
//! constant-speed following and drive cycles.

use rayon::prelude::*;

use crate::drl::Policy;
use crate::dynamics::{AccParams, KinematicState, ModelSpec, SurrogateParams, WorldState};
use crate::episode::no_disturbance;
use crate::error::{Error, Result};
use crate::harness::config::MethodKind;
use crate::harness::cycle::DriveCycle;
use crate::harness::grid::IcGrid;
use crate::harness::run::{run_episode, ControllerSpec};
use crate::harness::summary::{
    relative_increase, trajectory_series, EpisodeStats, ExperimentSummary, Series, SummaryRow, TimingEntry,
};
use crate::mpc::{BarrierConfig, MpcConfig};
use crate::trace::EpisodeTrace;

/// Shared settings of every experiment.
#[derive(Clone, Debug)]
pub struct Context<'a> {
    pub params: AccParams,
    /// Episode length in control steps for IC experiments.
    pub steps: usize,
    /// Ego speed used to place the vehicles for kinematic-model runs (m/s).
    pub v_ego0: f64,
    pub mpc: MpcConfig,
    pub ipo: BarrierConfig,
    pub surrogate: SurrogateParams,
    pub policy: Option<&'a Policy>,
}

impl<'a> Context<'a> {
    pub fn new(params: AccParams) -> Self {
        Context {
            params,
            steps: 200,
            v_ego0: 20.0,
            mpc: MpcConfig::default(),
            ipo: BarrierConfig::default(),
            surrogate: SurrogateParams::default(),
            policy: None,
        }
    }

    pub fn with_policy(mut self, policy: &'a Policy) -> Self {
        self.policy = Some(policy);
        self
    }

    fn require_policy(&self) -> Result<&'a Policy> {
        self.policy
            .ok_or_else(|| Error::Config("this experiment needs a trained policy (pass --checkpoint)".into()))
    }

    fn world(&self, s0: KinematicState) -> WorldState {
        WorldState::from_kinematic(s0, self.v_ego0, &self.params)
    }

    fn mpc_spec(&self) -> ControllerSpec<'a> {
        ControllerSpec::Mpc(self.mpc)
    }
}

/// Tables, plot series, timing and selected traces produced by one
/// experiment.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub series: Vec<Series>,
    pub timing: Vec<TimingEntry>,
    /// `(file stem, trace)` pairs worth saving in full.
    pub traces: Vec<(String, EpisodeTrace)>,
}

fn timing(scenario: &str, method: &str, traces: &[&EpisodeTrace]) -> TimingEntry {
    TimingEntry {
        scenario: scenario.into(),
        method: method.into(),
        episodes: traces.len(),
        controller_secs: traces.iter().map(|t| t.controller_secs).sum(),
        simulation_secs: traces.iter().map(|t| t.simulation_secs).sum(),
    }
}

fn ic_label(s: &KinematicState) -> String {
    format!("ic({},{},{})", s.e, s.ev, s.a)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

/// MPC at each horizon plus IPO (and DRL when a policy is available) from a
/// single initial state on the COM. Increases are relative to IPO.
pub fn horizon_sweep(ctx: &Context<'_>, ic: KinematicState, horizons: &[usize]) -> Result<ExperimentOutput> {
    if horizons.contains(&0) {
        return Err(Error::param("horizons", "every horizon must be at least 1"));
    }
    let p = &ctx.params;
    let scenario = ic_label(&ic);
    let w0 = ctx.world(ic);
    let mut specs = vec![ControllerSpec::Ipo(ctx.ipo)];
    if let Some(pol) = ctx.policy {
        specs.push(ControllerSpec::Drl(pol));
    }
    specs.extend(
        horizons
            .iter()
            .map(|&h| ControllerSpec::Mpc(MpcConfig { horizon: h, ..ctx.mpc })),
    );
    let traces = specs
        .par_iter()
        .map(|s| run_episode(s, &ModelSpec::Com, w0, ctx.steps, p, &no_disturbance))
        .collect::<Result<Vec<_>>>()?;

    let base = traces[0].cost()?;
    let mut out = ExperimentOutput {
        summary: ExperimentSummary::new("horizon_sweep"),
        ..Default::default()
    };
    let mut cost_pts = Vec::new();
    let mut time_pts = Vec::new();
    for (spec, trace) in specs.iter().zip(&traces) {
        let label = spec.label();
        let mut row = SummaryRow::from_trace(&scenario, &label, trace)?;
        if !matches!(spec, ControllerSpec::Ipo(_)) {
            row = row.with_baseline("IPO", base);
        }
        if let ControllerSpec::Mpc(cfg) = spec {
            let h_secs = cfg.horizon as f64 * p.dt;
            cost_pts.push((h_secs, row.increase_pct().unwrap_or(0.0)));
            time_pts.push((h_secs, trace.controller_secs));
        }
        out.summary.rows.push(row);
        out.timing.push(timing(&scenario, &label, &[trace]));
        out.traces
            .push((format!("horizon_sweep_{}", sanitize(&label)), trace.clone()));
        out.series
            .extend(trajectory_series(&format!("single_ic_{}", sanitize(&label)), trace));
    }
    out.series.push(Series::new(
        "horizon_cost_increase",
        "horizon_s",
        "increase_pct",
        cost_pts,
    ));
    out.series.push(Series::new(
        "horizon_controller_time",
        "horizon_s",
        "controller_s",
        time_pts,
    ));
    Ok(out)
}

/// Episode statistics of several methods over one IC grid on one model.
#[derive(Clone, Debug)]
pub struct GridResult {
    pub grid: IcGrid,
    pub model: String,
    pub methods: Vec<String>,
    pub ics: Vec<KinematicState>,
    /// `stats[m][i]` belongs to method `m` and initial state `ics[i]`.
    pub stats: Vec<Vec<EpisodeStats>>,
}

impl GridResult {
    fn index(&self, method: &str) -> Result<usize> {
        self.methods
            .iter()
            .position(|m| m == method)
            .ok_or_else(|| Error::Config(format!("method {method} was not evaluated")))
    }

    pub fn average_cost(&self, method: &str) -> Result<f64> {
        let s = &self.stats[self.index(method)?];
        Ok(s.iter().map(|e| e.cost).sum::<f64>() / s.len() as f64)
    }

    /// Increase of the average episode cost of `method` over `baseline`.
    pub fn increase(&self, method: &str, baseline: &str) -> Result<f64> {
        Ok(relative_increase(
            self.average_cost(method)?,
            self.average_cost(baseline)?,
        ))
    }

    /// The same increase restricted to each initial gap error.
    pub fn per_e0_increase(&self, method: &str, baseline: &str) -> Result<Vec<(f64, f64)>> {
        let (m, b) = (self.index(method)?, self.index(baseline)?);
        Ok(self
            .grid
            .e0
            .iter()
            .map(|&e0| {
                let pick = |k: usize| -> f64 {
                    self.ics
                        .iter()
                        .zip(&self.stats[k])
                        .filter(|(s, _)| s.e == e0)
                        .map(|(_, st)| st.cost)
                        .sum()
                };
                (e0, relative_increase(pick(m), pick(b)))
            })
            .collect())
    }

    pub fn rows(&self, baseline: Option<&str>) -> Result<Vec<SummaryRow>> {
        let scenario = format!("{}/{}", self.grid.name, self.model);
        let base = baseline.map(|b| self.average_cost(b).map(|c| (b, c))).transpose()?;
        Ok(self
            .methods
            .iter()
            .zip(&self.stats)
            .map(|(m, st)| {
                let row = SummaryRow::aggregate(&scenario, m, st);
                match base {
                    Some((b, c)) if b != m => row.with_baseline(b, c),
                    _ => row,
                }
            })
            .collect())
    }

    pub fn timing(&self) -> Vec<TimingEntry> {
        let scenario = format!("{}/{}", self.grid.name, self.model);
        self.methods
            .iter()
            .zip(&self.stats)
            .map(|(m, st)| TimingEntry {
                scenario: scenario.clone(),
                method: m.clone(),
                episodes: st.len(),
                controller_secs: st.iter().map(|s| s.controller_secs).sum(),
                simulation_secs: st.iter().map(|s| s.simulation_secs).sum(),
            })
            .collect()
    }
}

/// Runs every method from every initial state of `grid` on `model`.
/// Episodes run in parallel; results are stored in grid order.
pub fn grid_eval(
    ctx: &Context<'_>,
    grid: &IcGrid,
    specs: &[ControllerSpec<'_>],
    model: &ModelSpec,
) -> Result<GridResult> {
    let ics = grid.ics();
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|m| (0..ics.len()).map(move |i| (m, i)))
        .collect();
    let flat = jobs
        .par_iter()
        .map(|&(m, i)| {
            let trace = run_episode(
                &specs[m],
                model,
                ctx.world(ics[i]),
                ctx.steps,
                &ctx.params,
                &no_disturbance,
            )?;
            EpisodeStats::of(&trace)
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = flat.chunks(ics.len()).map(<[EpisodeStats]>::to_vec).collect();
    Ok(GridResult {
        grid: grid.clone(),
        model: model.label(),
        methods: specs.iter().map(ControllerSpec::label).collect(),
        ics,
        stats,
    })
}

/// The selected methods over a grid on `model`. Increases are relative to
/// IPO when it runs (COM only), otherwise to DRL. DRL runs only when a
/// policy is available.
pub fn grid_experiment(
    ctx: &Context<'_>,
    grid: &IcGrid,
    model: &ModelSpec,
    methods: &[MethodKind],
) -> Result<(ExperimentOutput, GridResult)> {
    let mut specs = Vec::new();
    if methods.contains(&MethodKind::Ipo) {
        if *model == ModelSpec::Com {
            specs.push(ControllerSpec::Ipo(ctx.ipo));
        } else {
            log::warn!("skipping IPO: it is defined on the COM only");
        }
    }
    if methods.contains(&MethodKind::Mpc) {
        specs.push(ctx.mpc_spec());
    }
    if methods.contains(&MethodKind::Drl) {
        match ctx.policy {
            Some(pol) => specs.push(ControllerSpec::Drl(pol)),
            None => log::warn!("skipping DRL: no policy loaded"),
        }
    }
    if specs.is_empty() {
        return Err(Error::Config(
            "no runnable method selected for the grid experiment".into(),
        ));
    }
    let labels: Vec<String> = specs.iter().map(ControllerSpec::label).collect();
    let baseline = ["IPO", "DRL"].into_iter().find(|b| labels.iter().any(|l| l == b));
    let res = grid_eval(ctx, grid, &specs, model)?;
    let name = if *model == ModelSpec::Com {
        format!("grid_{}", grid.name)
    } else {
        format!("grid_{}_{}", grid.name, sanitize(&model.label()))
    };
    let mut out = ExperimentOutput {
        summary: ExperimentSummary::new(&name),
        ..Default::default()
    };
    out.summary.rows = res.rows(baseline)?;
    out.timing = res.timing();
    if let Some(b) = baseline {
        for m in res.methods.iter().filter(|m| *m != b) {
            out.series.push(Series::new(
                &format!("{}_e0_increase_{}", grid.name, sanitize(m)),
                "e0_m",
                "increase_pct",
                res.per_e0_increase(m, b)?,
            ));
        }
    }
    Ok((out, res))
}

/// DRL and MPC on the delayed COM for each transport delay.
pub fn delay_sweep(
    ctx: &Context<'_>,
    grid: &IcGrid,
    delays: &[f64],
) -> Result<(ExperimentOutput, Vec<(f64, GridResult)>)> {
    let policy = ctx.require_policy()?;
    let specs = [ControllerSpec::Drl(policy), ctx.mpc_spec()];
    let mut out = ExperimentOutput {
        summary: ExperimentSummary::new("delay_sweep"),
        ..Default::default()
    };
    let mut results = Vec::with_capacity(delays.len());
    for &tau_d in delays {
        let model = ModelSpec::DelayedCom { tau_d };
        model.validate(&ctx.params)?;
        let res = grid_eval(ctx, grid, &specs, &model)?;
        out.summary.rows.extend(res.rows(Some("DRL"))?);
        out.timing.extend(res.timing());
        results.push((tau_d, res));
    }
    for m in specs.iter().map(ControllerSpec::label) {
        let pts = results
            .iter()
            .map(|(d, r)| r.average_cost(&m).map(|c| (*d, c)))
            .collect::<Result<Vec<_>>>()?;
        out.series.push(Series::new(
            &format!("delay_average_cost_{}", sanitize(&m)),
            "tau_d_s",
            "average_cost",
            pts,
        ));
    }
    Ok((out, results))
}

/// Per-speed results of constant-speed following on the surrogate vehicle.
#[derive(Clone, Debug)]
pub struct ShfmResult {
    pub speeds: Vec<f64>,
    pub drl: Vec<EpisodeStats>,
    pub mpc: Vec<EpisodeStats>,
    /// DRL on the kinematic model from the same states, for reference.
    pub drl_com: Vec<EpisodeStats>,
}

/// The preceding vehicle drives at `v_i0 + e_v0` from the state `ic`; the
/// ego vehicle starts at `v_i0` on the surrogate model.
pub fn shfm_constant_speed(
    ctx: &Context<'_>,
    ic: KinematicState,
    speeds: &[f64],
) -> Result<(ExperimentOutput, ShfmResult)> {
    let policy = ctx.require_policy()?;
    if speeds.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::param("speeds", "initial speeds must be finite and >= 0"));
    }
    let p = &ctx.params;
    let shfm = ModelSpec::SurrogateHfm(ctx.surrogate);
    shfm.validate(p)?;
    let specs = [ControllerSpec::Drl(policy), ctx.mpc_spec()];
    let jobs: Vec<(usize, usize, bool)> = (0..speeds.len())
        .flat_map(|i| [(i, 0, false), (i, 1, false), (i, 0, true)])
        .collect();
    let traces = jobs
        .par_iter()
        .map(|&(i, m, com)| {
            let w0 = WorldState::from_kinematic(ic, speeds[i], p);
            let model = if com { ModelSpec::Com } else { shfm };
            run_episode(&specs[m], &model, w0, ctx.steps, p, &no_disturbance)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = ExperimentOutput {
        summary: ExperimentSummary::new("shfm_constant_speed"),
        ..Default::default()
    };
    let mut res = ShfmResult {
        speeds: speeds.to_vec(),
        drl: Vec::new(),
        mpc: Vec::new(),
        drl_com: Vec::new(),
    };
    let mut drl_pts = Vec::new();
    let mut mpc_pts = Vec::new();
    for (i, &v) in speeds.iter().enumerate() {
        let [drl, mpc, drl_com] = [&traces[3 * i], &traces[3 * i + 1], &traces[3 * i + 2]];
        let scenario = format!("v_i0={v}");
        let drl_row = SummaryRow::from_trace(&scenario, "DRL", drl)?;
        let drl_cost = drl_row.cost;
        let mpc_label = specs[1].label();
        out.summary.rows.push(drl_row);
        out.summary
            .rows
            .push(SummaryRow::from_trace(&scenario, &mpc_label, mpc)?.with_baseline("DRL", drl_cost));
        out.summary
            .rows
            .push(SummaryRow::from_trace(&format!("{scenario}/com"), "DRL", drl_com)?);
        out.timing.push(timing(&scenario, "DRL", &[drl]));
        out.timing.push(timing(&scenario, &mpc_label, &[mpc]));
        res.drl.push(EpisodeStats::of(drl)?);
        res.mpc.push(EpisodeStats::of(mpc)?);
        res.drl_com.push(EpisodeStats::of(drl_com)?);
        drl_pts.push((v, drl_cost));
        mpc_pts.push((v, res.mpc[i].cost));
        if i + 1 == speeds.len() {
            for (label, t) in [("DRL", drl), (mpc_label.as_str(), mpc)] {
                let stem = format!("shfm_v{}_{}", sanitize(&v.to_string()), sanitize(label));
                out.series.extend(trajectory_series(&stem, t));
                out.traces.push((stem, t.clone()));
            }
        }
    }
    out.series
        .push(Series::new("shfm_speed_cost_DRL", "v_i0_mps", "episode_cost", drl_pts));
    out.series.push(Series::new(
        &format!("shfm_speed_cost_{}", sanitize(&specs[1].label())),
        "v_i0_mps",
        "episode_cost",
        mpc_pts,
    ));
    Ok((out, res))
}

/// DRL and MPC following a preceding vehicle that drives `cycle`, on the
/// surrogate vehicle from rest with zero initial errors.
pub fn drive_cycle_eval(ctx: &Context<'_>, cycle: &DriveCycle) -> Result<ExperimentOutput> {
    let policy = ctx.require_policy()?;
    let p = &ctx.params;
    let rs = cycle.resample(p.dt)?;
    let shfm = ModelSpec::SurrogateHfm(ctx.surrogate);
    let w0 = WorldState::from_kinematic(KinematicState::ZERO, rs.speed[0], p);
    let accel = rs.accel.clone();
    let a_prec = move |k: usize| accel.get(k).copied().unwrap_or(0.0);
    let specs = [ControllerSpec::Drl(policy), ctx.mpc_spec()];
    let traces = specs
        .par_iter()
        .map(|s| run_episode(s, &shfm, w0, rs.steps(), p, &a_prec))
        .collect::<Result<Vec<_>>>()?;
    let scenario = cycle.name.clone();
    let drl_row = SummaryRow::from_trace(&scenario, "DRL", &traces[0])?;
    let base = drl_row.cost;
    let mut out = ExperimentOutput {
        summary: ExperimentSummary::new(&format!("cycle_{}", sanitize(&cycle.name))),
        ..Default::default()
    };
    out.summary.rows.push(drl_row);
    out.summary
        .rows
        .push(SummaryRow::from_trace(&scenario, &specs[1].label(), &traces[1])?.with_baseline("DRL", base));
    for (spec, t) in specs.iter().zip(&traces) {
        let stem = format!("cycle_{}_{}", sanitize(&cycle.name), sanitize(&spec.label()));
        out.timing.push(timing(&scenario, &spec.label(), &[t]));
        out.series.extend(trajectory_series(&stem, t));
        out.traces.push((stem, t.clone()));
    }
    out.series.push(Series::new(
        &format!("cycle_{}_lead_speed", sanitize(&cycle.name)),
        "t_s",
        "v_mps",
        rs.speed
            .iter()
            .enumerate()
            .map(|(k, &v)| (k as f64 * p.dt, v))
            .collect(),
    ));
    Ok(out)
}

/// Learning curve as a plot series.
pub fn training_curve_series(name: &str, curve: &[f64]) -> Series {
    Series::new(
        name,
        "episode",
        "undiscounted_reward",
        curve.iter().enumerate().map(|(i, &r)| ((i + 1) as f64, r)).collect(),
    )
}
