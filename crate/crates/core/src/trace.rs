use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cost::{episode_cost, StageCostBreakdown};
use crate::error::Result;

/// One logged control period.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: f64,
    /// State at the start of the period.
    pub e: f64,
    pub ev: f64,
    pub a: f64,
    /// Command actuated during the period.
    pub u: f64,
    /// Ego acceleration at the end of the period.
    pub realized_accel: f64,
    /// Finite-difference jerk `(realized_accel - a) / dt`.
    pub jerk: f64,
    pub stage: StageCostBreakdown,
    pub power_limited: bool,
    pub solver_converged: bool,
}

/// Per-step log of a closed- or open-loop episode plus timing counters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    /// Seconds spent inside the controller.
    pub controller_secs: f64,
    /// Seconds spent advancing the plant.
    pub simulation_secs: f64,
}

/// Minimum, mean and maximum of a logged quantity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Extremes {
    fn of(values: impl Iterator<Item = f64>) -> Extremes {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            return Extremes::default();
        }
        Extremes {
            min,
            mean: sum / n as f64,
            max,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn cost(&self) -> Result<f64> {
        episode_cost(self)
    }

    pub fn gap_error_stats(&self) -> Extremes {
        Extremes::of(self.steps.iter().map(|s| s.e))
    }

    pub fn jerk_stats(&self) -> Extremes {
        Extremes::of(self.steps.iter().map(|s| s.jerk))
    }

    pub fn power_limit_engaged(&self) -> bool {
        self.steps.iter().any(|s| s.power_limited)
    }

    pub fn solver_failures(&self) -> usize {
        self.steps.iter().filter(|s| !s.solver_converged).count()
    }

    pub const CSV_HEADER: &'static str = "t,e,ev,a,u,jerk,stage_cost,power_limited";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.t,
                s.e,
                s.ev,
                s.a,
                s.u,
                s.jerk,
                s.stage.total,
                u8::from(s.power_limited)
            )?;
        }
        Ok(())
    }
}
