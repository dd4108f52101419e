//! Speed traces the preceding vehicle follows in drive-cycle tests.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

const WHAT: &str = "drive cycle";

/// A preceding-vehicle speed trace sampled at strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveCycle {
    pub name: String,
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

/// A cycle resampled onto the control grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ResampledCycle {
    pub dt: f64,
    /// Speed at `k * dt` for `k = 0..=steps`.
    pub speed: Vec<f64>,
    /// Centered finite-difference acceleration at each grid point.
    pub accel: Vec<f64>,
}

impl ResampledCycle {
    /// Control periods spanned by the trace.
    pub fn steps(&self) -> usize {
        self.speed.len() - 1
    }
}

pub const BUILTIN_CYCLES: [&str; 3] = ["hwfet", "ftp75", "us06"];

/// Upper bound on resampled points (about 11 days at 0.1 s).
const MAX_RESAMPLED_STEPS: usize = 10_000_000;

impl DriveCycle {
    /// Parses CSV with header `t_s,v_mps`. Errors name the offending line.
    pub fn from_csv<R: Read>(name: &str, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let err = |line: usize, reason: String| Error::Parse {
            what: WHAT,
            line,
            reason,
        };
        let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "t_s" || &headers[1] != "v_mps" {
            return Err(err(
                1,
                format!(
                    "expected header \"t_s,v_mps\", found \"{}\"",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }
        let mut t = Vec::new();
        let mut v = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                err(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.len() != 2 {
                return Err(err(line, format!("expected 2 fields, found {}", rec.len())));
            }
            let field = |i: usize, col: &str| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(line, format!("{col} is not a finite number: \"{}\"", &rec[i])))
            };
            let ti = field(0, "t_s")?;
            let vi = field(1, "v_mps")?;
            if vi < 0.0 {
                return Err(err(line, format!("v_mps must be >= 0, found {vi}")));
            }
            if let Some(&prev) = t.last() {
                if ti <= prev {
                    return Err(err(line, format!("t_s must increase strictly ({ti} after {prev})")));
                }
            }
            t.push(ti);
            v.push(vi);
        }
        if t.len() < 2 {
            return Err(err(0, "need at least two samples".into()));
        }
        Ok(DriveCycle {
            name: name.into(),
            t,
            v,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cycle");
        Self::from_csv(name, std::io::BufReader::new(file))
    }

    /// One of the bundled EPA cycles: `hwfet`, `ftp75` or `us06`.
    pub fn builtin(name: &str) -> Result<Self> {
        let text: &str = match name.to_ascii_lowercase().replace('-', "").as_str() {
            "hwfet" => include_str!("../../resources/cycles/hwfet.csv"),
            "ftp75" => include_str!("../../resources/cycles/ftp75.csv"),
            "us06" => include_str!("../../resources/cycles/us06.csv"),
            _ => {
                return Err(Error::Config(format!(
                    "unknown drive cycle \"{name}\" (expected one of {})",
                    BUILTIN_CYCLES.join(", ")
                )))
            }
        };
        Self::from_csv(name, text.as_bytes())
    }

    pub fn duration(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }

    /// Linear interpolation onto `t0 + k * dt`, followed by centered
    /// differences for the acceleration (one-sided at the ends).
    pub fn resample(&self, dt: f64) -> Result<ResampledCycle> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        let t0 = self.t[0];
        let n_steps = (self.duration() / dt + 1e-9).floor();
        if !(n_steps < MAX_RESAMPLED_STEPS as f64) {
            return Err(Error::param(
                "dt",
                format!("cycle of {} s needs too many samples at dt = {dt}", self.duration()),
            ));
        }
        let steps = n_steps as usize;
        let mut speed = Vec::with_capacity(steps + 1);
        let mut j = 0;
        for k in 0..=steps {
            let tk = (t0 + k as f64 * dt).min(self.t[self.t.len() - 1]);
            while j + 2 < self.t.len() && self.t[j + 1] < tk {
                j += 1;
            }
            let (ta, tb) = (self.t[j], self.t[j + 1]);
            let w = ((tk - ta) / (tb - ta)).clamp(0.0, 1.0);
            speed.push(((1.0 - w) * self.v[j] + w * self.v[j + 1]).max(0.0));
        }
        let n = speed.len();
        let accel = (0..n)
            .map(|k| {
                if n < 2 {
                    0.0
                } else if k == 0 {
                    (speed[1] - speed[0]) / dt
                } else if k + 1 == n {
                    (speed[n - 1] - speed[n - 2]) / dt
                } else {
                    (speed[k + 1] - speed[k - 1]) / (2.0 * dt)
                }
            })
            .collect();
        Ok(ResampledCycle { dt, speed, accel })
    }
}
