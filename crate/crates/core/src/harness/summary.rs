//! Result tables, figure data files and their serialization.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{EpisodeTrace, Extremes};

/// `(cost / base - 1) * 100`.
pub fn relative_increase(cost: f64, base: f64) -> f64 {
    (cost / base - 1.0) * 100.0
}

/// One line of an experiment table. Percentages are never stored; they are
/// recomputed from `cost` and `baseline_cost` whenever they are shown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    /// Episode cost, or the average episode cost for grid rows.
    pub cost: f64,
    pub e_min: f64,
    pub e_mean: f64,
    pub e_max: f64,
    pub j_min: f64,
    pub j_mean: f64,
    pub j_max: f64,
    pub baseline: Option<String>,
    pub baseline_cost: Option<f64>,
    #[serde(default)]
    pub power_limited: bool,
    #[serde(default)]
    pub solver_failures: usize,
    #[serde(default = "one")]
    pub episodes: usize,
}

fn one() -> usize {
    1
}

impl SummaryRow {
    pub fn from_trace(scenario: &str, method: &str, trace: &EpisodeTrace) -> Result<Self> {
        let e = trace.gap_error_stats();
        let j = trace.jerk_stats();
        Ok(SummaryRow {
            scenario: scenario.into(),
            method: method.into(),
            cost: trace.cost()?,
            e_min: e.min,
            e_mean: e.mean,
            e_max: e.max,
            j_min: j.min,
            j_mean: j.mean,
            j_max: j.max,
            baseline: None,
            baseline_cost: None,
            power_limited: trace.power_limit_engaged(),
            solver_failures: trace.solver_failures(),
            episodes: 1,
        })
    }

    /// Aggregate over several episodes: mean cost, extreme minima and
    /// maxima, mean of means.
    pub fn aggregate(scenario: &str, method: &str, episodes: &[EpisodeStats]) -> Self {
        let n = episodes.len().max(1) as f64;
        let fold = |f: &dyn Fn(&EpisodeStats) -> f64, init: f64, op: fn(f64, f64) -> f64| {
            episodes.iter().map(f).fold(init, op)
        };
        SummaryRow {
            scenario: scenario.into(),
            method: method.into(),
            cost: episodes.iter().map(|s| s.cost).sum::<f64>() / n,
            e_min: fold(&|s| s.e.min, f64::INFINITY, f64::min),
            e_mean: episodes.iter().map(|s| s.e.mean).sum::<f64>() / n,
            e_max: fold(&|s| s.e.max, f64::NEG_INFINITY, f64::max),
            j_min: fold(&|s| s.jerk.min, f64::INFINITY, f64::min),
            j_mean: episodes.iter().map(|s| s.jerk.mean).sum::<f64>() / n,
            j_max: fold(&|s| s.jerk.max, f64::NEG_INFINITY, f64::max),
            baseline: None,
            baseline_cost: None,
            power_limited: episodes.iter().any(|s| s.power_limited),
            solver_failures: episodes.iter().map(|s| s.solver_failures).sum(),
            episodes: episodes.len(),
        }
    }

    pub fn with_baseline(mut self, name: &str, cost: f64) -> Self {
        self.baseline = Some(name.into());
        self.baseline_cost = Some(cost);
        self
    }

    pub fn increase_pct(&self) -> Option<f64> {
        self.baseline_cost.map(|b| relative_increase(self.cost, b))
    }

    pub fn e_abs_max(&self) -> f64 {
        self.e_min.abs().max(self.e_max.abs())
    }

    pub fn j_abs_max(&self) -> f64 {
        self.j_min.abs().max(self.j_max.abs())
    }
}

/// The per-episode numbers kept by grid evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub cost: f64,
    pub e: Extremes,
    pub jerk: Extremes,
    pub power_limited: bool,
    pub solver_failures: usize,
    pub controller_secs: f64,
    pub simulation_secs: f64,
}

impl EpisodeStats {
    pub fn of(trace: &EpisodeTrace) -> Result<Self> {
        Ok(EpisodeStats {
            cost: trace.cost()?,
            e: trace.gap_error_stats(),
            jerk: trace.jerk_stats(),
            power_limited: trace.power_limit_engaged(),
            solver_failures: trace.solver_failures(),
            controller_secs: trace.controller_secs,
            simulation_secs: trace.simulation_secs,
        })
    }
}

/// Wall-clock accounting, kept apart from the deterministic summaries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub scenario: String,
    pub method: String,
    pub episodes: usize,
    pub controller_secs: f64,
    pub simulation_secs: f64,
}

/// Rows of one experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub rows: Vec<SummaryRow>,
}

const CSV_HEADER: &str =
    "scenario,method,cost,e_min,e_mean,e_max,j_min,j_mean,j_max,baseline,increase_pct,power_limited";

impl ExperimentSummary {
    pub fn new(experiment: &str) -> Self {
        ExperimentSummary {
            experiment: experiment.into(),
            rows: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Shown<'a> {
            #[serde(flatten)]
            row: &'a SummaryRow,
            increase_pct: Option<f64>,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            experiment: &'a str,
            rows: Vec<Shown<'a>>,
        }
        let doc = Doc {
            experiment: &self.experiment,
            rows: self
                .rows
                .iter()
                .map(|row| Shown {
                    row,
                    increase_pct: row.increase_pct(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Reads a summary written by `to_json`; displayed percentages are
    /// discarded and recomputed.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            experiment: String,
            rows: Vec<serde_json::Value>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        let rows = doc
            .rows
            .into_iter()
            .map(|mut v| {
                if let Some(obj) = v.as_object_mut() {
                    obj.remove("increase_pct");
                }
                serde_json::from_value(v)
            })
            .collect::<std::result::Result<Vec<SummaryRow>, _>>()?;
        Ok(ExperimentSummary {
            experiment: doc.experiment,
            rows,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&r.scenario),
                csv_field(&r.method),
                r.cost,
                r.e_min,
                r.e_mean,
                r.e_max,
                r.j_min,
                r.j_mean,
                r.j_max,
                r.baseline.as_deref().map(csv_field).unwrap_or_default(),
                r.increase_pct().map(|x| x.to_string()).unwrap_or_default(),
                u8::from(r.power_limited)
            );
        }
        out
    }

    /// Fixed-width text table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "== {} ==", self.experiment);
        let _ = writeln!(
            out,
            "{:<28} {:<12} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "scenario", "method", "cost", "vs", "incr%", "e_min", "e_max", "j_min", "j_max", "plim"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<28} {:<12} {:>10.4} {:>10} {:>8} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8}",
                r.scenario,
                r.method,
                r.cost,
                r.baseline.as_deref().unwrap_or("-"),
                r.increase_pct()
                    .map(|x| format!("{x:.2}"))
                    .unwrap_or_else(|| "-".into()),
                r.e_min,
                r.e_max,
                r.j_min,
                r.j_max,
                if r.power_limited { "yes" } else { "no" }
            );
        }
        out
    }

    pub fn row(&self, scenario: &str, method: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.method == method)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A two-column series for plotting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: &str, x_label: &str, y_label: &str, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            points,
        }
    }

    pub fn to_dat(&self) -> String {
        let mut out = format!("# {} {}\n", self.x_label, self.y_label);
        for (x, y) in &self.points {
            let _ = writeln!(out, "{x} {y}");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(format!("{}.dat", self.name));
        std::fs::write(&path, self.to_dat()).map_err(|e| Error::io(&path, e))
    }
}

/// Time series of gap error, jerk and command from one trace.
pub fn trajectory_series(prefix: &str, trace: &EpisodeTrace) -> Vec<Series> {
    let pts = |f: fn(&crate::trace::TraceStep) -> f64| trace.steps.iter().map(|s| (s.t, f(s))).collect();
    vec![
        Series::new(&format!("{prefix}_e"), "t_s", "e_m", pts(|s| s.e)),
        Series::new(&format!("{prefix}_jerk"), "t_s", "jerk_mps3", pts(|s| s.jerk)),
        Series::new(&format!("{prefix}_u"), "t_s", "u_mps2", pts(|s| s.u)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cost: f64, base: Option<f64>) -> SummaryRow {
        SummaryRow {
            scenario: "s".into(),
            method: "m".into(),
            cost,
            e_min: -1.0,
            e_mean: 0.0,
            e_max: 2.0,
            j_min: -3.0,
            j_mean: 0.0,
            j_max: 1.0,
            baseline: base.map(|_| "IPO".into()),
            baseline_cost: base,
            power_limited: false,
            solver_failures: 0,
            episodes: 1,
        }
    }

    #[test]
    fn increase_is_recomputed() {
        let r = row(11.0, Some(10.0));
        assert!((r.increase_pct().unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(row(1.0, None).increase_pct(), None);
        assert_eq!(r.e_abs_max(), 2.0);
        assert_eq!(r.j_abs_max(), 3.0);
    }

    #[test]
    fn json_round_trip_ignores_displayed_percentages() {
        let mut s = ExperimentSummary::new("grid");
        s.rows.push(row(11.0, Some(10.0)));
        s.rows.push(row(3.0, None));
        let text = s.to_json().unwrap();
        assert!(text.contains("increase_pct"));
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["rows"][0]["increase_pct"] = serde_json::json!(999.0);
        let back = ExperimentSummary::from_json(&doc.to_string()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.render(), s.render());
    }

    #[test]
    fn csv_layout() {
        let mut s = ExperimentSummary::new("x");
        s.rows.push(row(2.0, Some(1.0)));
        let csv = s.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), CSV_HEADER.split(',').count());
        assert_eq!(fields[10], "100");
    }

    #[test]
    fn aggregate_rows() {
        let ep = |cost: f64, lo: f64, hi: f64| EpisodeStats {
            cost,
            e: Extremes {
                min: lo,
                mean: 0.0,
                max: hi,
            },
            jerk: Extremes {
                min: lo,
                mean: 1.0,
                max: hi,
            },
            power_limited: false,
            solver_failures: 1,
            controller_secs: 0.0,
            simulation_secs: 0.0,
        };
        let r = SummaryRow::aggregate("g", "m", &[ep(1.0, -1.0, 2.0), ep(3.0, -4.0, 1.0)]);
        assert_eq!(r.cost, 2.0);
        assert_eq!((r.e_min, r.e_max), (-4.0, 2.0));
        assert_eq!(r.j_mean, 1.0);
        assert_eq!(r.solver_failures, 2);
        assert_eq!(r.episodes, 2);
    }
}
