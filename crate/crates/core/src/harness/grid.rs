use serde::{Deserialize, Serialize};

use crate::dynamics::KinematicState;
use crate::error::{Error, Result};

/// Cartesian product of initial gap errors, relative speeds and
/// accelerations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcGrid {
    pub name: String,
    pub e0: Vec<f64>,
    pub ev0: Vec<f64>,
    pub ai0: Vec<f64>,
}

const EV0: [f64; 5] = [-5.0, -2.5, 0.0, 2.5, 5.0];
const AI0: [f64; 3] = [-3.0, 0.0, 2.0];

impl IcGrid {
    /// Initial gap errors inside the training range.
    pub fn in_range() -> Self {
        IcGrid {
            name: "in_range".into(),
            e0: vec![-5.0, -2.5, 0.0, 2.5, 5.0],
            ev0: EV0.to_vec(),
            ai0: AI0.to_vec(),
        }
    }

    /// A vehicle cutting in ahead: gap errors well below the training range.
    pub fn cut_in() -> Self {
        IcGrid {
            name: "cut_in".into(),
            e0: vec![-20.0, -17.5, -15.0, -12.5, -10.0],
            ev0: EV0.to_vec(),
            ai0: AI0.to_vec(),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "in" | "in_range" => Ok(Self::in_range()),
            "cut-in" | "cut_in" | "cutin" => Ok(Self::cut_in()),
            other => Err(Error::Config(format!(
                "unknown grid \"{other}\" (expected in_range or cut_in)"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.e0.len() * self.ev0.len() * self.ai0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All initial states, `e0` varying slowest.
    pub fn ics(&self) -> Vec<KinematicState> {
        let mut out = Vec::with_capacity(self.len());
        for &e in &self.e0 {
            for &ev in &self.ev0 {
                for &a in &self.ai0 {
                    out.push(KinematicState::new(e, ev, a));
                }
            }
        }
        out
    }
}

/// Parses an initial state written as `e,ev,a`.
pub fn parse_ic(text: &str) -> Result<KinematicState> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Parse {
            what: "initial condition",
            line: 1,
            reason: format!("expected three comma-separated numbers, got {}", parts.len()),
        });
    }
    let mut v = [0.0; 3];
    for (i, (slot, s)) in v.iter_mut().zip(&parts).enumerate() {
        *slot = s
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Parse {
                what: "initial condition",
                line: 1,
                reason: format!(
                    "field {} ({}) is not a finite number: \"{s}\"",
                    i + 1,
                    ["e", "ev", "a"][i]
                ),
            })?;
    }
    Ok(KinematicState::from_array(v))
}
