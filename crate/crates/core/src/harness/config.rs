//! TOML experiment configuration. Every section is optional and unknown keys
//! are rejected.
//!
//! ```toml
//! [acc]
//! t_g = 1.0
//!
//! [mpc]
//! horizon = 50
//!
//! [train]
//! total_steps = 300000
//! seeds = [1, 2, 3]
//!
//! [experiment]
//! grid = "cut_in"
//! model = { kind = "delayed_com", tau_d = 0.2 }
//! methods = ["mpc", "drl"]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drl::{Policy, TrainConfig};
use crate::dynamics::{AccParams, KinematicState, ModelSpec, SurrogateParams};
use crate::error::{Error, Result};
use crate::harness::cycle::DriveCycle;
use crate::harness::experiments::Context;
use crate::harness::grid::IcGrid;
use crate::mpc::{BarrierConfig, MpcConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Ipo,
    Mpc,
    Drl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Episode length in control steps for IC experiments.
    pub episode_steps: usize,
    /// Ego speed used to place the vehicles on the kinematic models (m/s).
    pub v_ego0: f64,
    /// Initial `[e, ev, a]` for single-state experiments.
    pub ic: [f64; 3],
    pub horizons: Vec<usize>,
    /// Grid for the `grid` command: `in_range`, `cut_in`, or a custom grid.
    pub grid: GridChoice,
    /// Plant for the `grid` command.
    pub model: ModelSpec,
    pub methods: Vec<MethodKind>,
    /// Transport delays for the delay sweep (s).
    pub delays: Vec<f64>,
    /// Initial ego speeds for surrogate constant-speed following (m/s).
    pub speeds: Vec<f64>,
    /// Built-in cycle names or CSV paths.
    pub cycles: Vec<String>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            episode_steps: 200,
            v_ego0: 20.0,
            ic: [5.0, 5.0, 0.0],
            horizons: vec![10, 20, 25, 27, 28, 30, 32, 40, 50],
            grid: GridChoice::Named("in_range".into()),
            model: ModelSpec::Com,
            methods: vec![MethodKind::Ipo, MethodKind::Mpc, MethodKind::Drl],
            delays: vec![0.1, 0.2, 0.4],
            speeds: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            cycles: vec!["hwfet".into(), "ftp75".into(), "us06".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridChoice {
    Named(String),
    Custom(IcGrid),
}

impl GridChoice {
    pub fn resolve(&self) -> Result<IcGrid> {
        match self {
            GridChoice::Named(n) => IcGrid::by_name(n),
            GridChoice::Custom(g) => {
                if g.is_empty() || g.e0.iter().chain(&g.ev0).chain(&g.ai0).any(|x| !x.is_finite()) {
                    return Err(Error::Config(format!(
                        "grid {}: values must be finite and non-empty",
                        g.name
                    )));
                }
                Ok(g.clone())
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub acc: AccParams,
    pub mpc: MpcConfig,
    /// Solver settings of the whole-episode benchmark.
    pub ipo: BarrierConfig,
    pub surrogate: SurrogateParams,
    pub train: TrainConfig,
    pub experiment: ExperimentSettings,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.acc.validate().map_err(cfg_err)?;
        self.surrogate.validate(&self.acc).map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        self.experiment.model.validate(&self.acc).map_err(cfg_err)?;
        validate_barrier(&self.mpc.barrier)?;
        validate_barrier(&self.ipo)?;
        let x = &self.experiment;
        if self.mpc.horizon == 0 {
            return Err(Error::Config("mpc.horizon must be at least 1".into()));
        }
        if !(self.mpc.warm_mu > 0.0) {
            return Err(Error::Config("mpc.warm_mu must be positive".into()));
        }
        if x.episode_steps == 0 {
            return Err(Error::Config("experiment.episode_steps must be at least 1".into()));
        }
        if !x.v_ego0.is_finite() || x.ic.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("experiment.ic and v_ego0 must be finite".into()));
        }
        if x.horizons.contains(&0) {
            return Err(Error::Config("experiment.horizons must all be at least 1".into()));
        }
        for &d in &x.delays {
            ModelSpec::DelayedCom { tau_d: d }
                .validate(&self.acc)
                .map_err(cfg_err)?;
        }
        if x.speeds.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("experiment.speeds must be finite and >= 0".into()));
        }
        x.grid.resolve()?;
        Ok(())
    }

    pub fn ic(&self) -> KinematicState {
        KinematicState::from_array(self.experiment.ic)
    }

    pub fn wants(&self, m: MethodKind) -> bool {
        self.experiment.methods.contains(&m)
    }

    pub fn context<'a>(&self, policy: Option<&'a Policy>) -> Context<'a> {
        Context {
            params: self.acc,
            steps: self.experiment.episode_steps,
            v_ego0: self.experiment.v_ego0,
            mpc: self.mpc,
            ipo: self.ipo,
            surrogate: self.surrogate,
            policy,
        }
    }

    /// Resolves a cycle entry: a built-in name or a CSV path.
    pub fn cycle(&self, entry: &str) -> Result<DriveCycle> {
        let path = Path::new(entry);
        if entry.ends_with(".csv") || path.exists() {
            DriveCycle::from_file(path)
        } else {
            DriveCycle::builtin(entry)
        }
    }
}

fn validate_barrier(b: &BarrierConfig) -> Result<()> {
    let ok = b.mu_init > 0.0
        && b.mu_final > 0.0
        && b.mu_final <= b.mu_init
        && b.mu_factor > 0.0
        && b.mu_factor < 1.0
        && b.tol > 0.0
        && b.max_outer >= 1
        && b.max_inner >= 1
        && b.lbfgs_memory >= 1;
    if ok {
        Ok(())
    } else {
        Err(Error::Config(
            "barrier settings need 0 < mu_final <= mu_init, 0 < mu_factor < 1, tol > 0 and positive iteration caps"
                .into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(
            ExperimentConfig::from_toml_str("").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [acc]
            t_g = 1.5
            [mpc]
            horizon = 30
            [mpc.barrier]
            tol = 1e-7
            [train]
            total_steps = 10
            seeds = [4]
            [experiment]
            grid = "cut_in"
            model = { kind = "delayed_com", tau_d = 0.2 }
            methods = ["mpc"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.acc.t_g, 1.5);
        assert_eq!(cfg.mpc.horizon, 30);
        assert_eq!(cfg.mpc.barrier.tol, 1e-7);
        assert_eq!(cfg.train.seeds, vec![4]);
        assert_eq!(cfg.experiment.grid.resolve().unwrap(), IcGrid::cut_in());
        assert_eq!(cfg.experiment.model, ModelSpec::DelayedCom { tau_d: 0.2 });
        assert!(cfg.wants(MethodKind::Mpc) && !cfg.wants(MethodKind::Drl));
    }

    #[test]
    fn custom_grid() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [experiment.grid]
            name = "tiny"
            e0 = [1.0]
            ev0 = [0.0, 1.0]
            ai0 = [0.0]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiment.grid.resolve().unwrap().len(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "[acc]\nbogus = 1",
            "[mpc]\nhorizon = 0",
            "[acc]\ndt = -1.0",
            "[experiment]\ndelays = [0.123]",
            "[experiment]\ngrid = \"diagonal\"",
            "[train]\ngamma = 2.0",
            "[ipo]\nmu_factor = 1.5",
            "not toml at all [",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml_str(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }
}
