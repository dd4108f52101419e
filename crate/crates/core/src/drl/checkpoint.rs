//! Versioned little-endian binary checkpoint of trained networks.
//!
//! Layout:
//! ```text
//! magic "ACCBCKPT" | version u32 | seed u64 | steps u64
//! scaling: 8 x f64 (state offsets, state scales, action offset, action scale)
//! n_nets u32, then per net:
//!   name_len u16 | name utf-8 | output kind u8 | mid f64 | half f64
//!   n_sizes u32 | sizes u32... | parameters f64... (per layer: row-major weights, bias)
//! ```

use std::path::Path;

use crate::drl::ddpg::{ActorCritic, InputScaling, Policy};
use crate::drl::mlp::{Mlp, OutputActivation};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ACCBCKPT";
pub const FORMAT_VERSION: u32 = 1;

const MAX_NETS: usize = 16;
const MAX_LAYERS: usize = 16;
const MAX_WIDTH: usize = 4096;
const MAX_NAME: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    /// Environment steps the networks were trained for.
    pub steps: u64,
    pub scaling: InputScaling,
    pub nets: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn from_nets(nets: &ActorCritic, seed: u64, steps: u64) -> Self {
        Checkpoint {
            seed,
            steps,
            scaling: nets.scaling,
            nets: vec![
                ("actor".into(), nets.actor.clone()),
                ("critic".into(), nets.critic.clone()),
                ("actor_target".into(), nets.actor_target.clone()),
                ("critic_target".into(), nets.critic_target.clone()),
            ],
        }
    }

    pub fn net(&self, name: &str) -> Option<&Mlp> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// The deployable actor with its input scaling.
    pub fn policy(&self) -> Result<Policy> {
        let actor = self
            .net("actor")
            .ok_or_else(|| Error::Checkpoint("no network named \"actor\"".into()))?;
        if actor.n_in() != 3 || actor.n_out() != 1 {
            return Err(Error::Checkpoint(format!(
                "actor must map 3 inputs to 1 output, found {} -> {}",
                actor.n_in(),
                actor.n_out()
            )));
        }
        if !matches!(actor.output, OutputActivation::BoundedTanh { .. }) {
            return Err(Error::Checkpoint("actor output must be bounded".into()));
        }
        Ok(Policy {
            actor: actor.clone(),
            scaling: self.scaling,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.steps.to_le_bytes());
        let s = &self.scaling;
        for x in s
            .state_offset
            .iter()
            .chain(&s.state_scale)
            .chain(&[s.action_offset, s.action_scale])
        {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for (name, net) in &self.nets {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let (kind, mid, half) = match net.output {
                OutputActivation::Identity => (0u8, 0.0, 0.0),
                OutputActivation::BoundedTanh { mid, half } => (1u8, mid, half),
            };
            out.push(kind);
            out.extend_from_slice(&mid.to_le_bytes());
            out.extend_from_slice(&half.to_le_bytes());
            out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
            for &n in net.sizes() {
                out.extend_from_slice(&(n as u32).to_le_bytes());
            }
            for x in &net.params {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Parses untrusted bytes. Every size is bounded before allocation and
    /// trailing data is rejected.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let seed = r.u64()?;
        let steps = r.u64()?;
        let mut sc = [0.0; 8];
        for x in sc.iter_mut() {
            *x = r.f64()?;
        }
        let scaling = InputScaling {
            state_offset: [sc[0], sc[1], sc[2]],
            state_scale: [sc[3], sc[4], sc[5]],
            action_offset: sc[6],
            action_scale: sc[7],
        };
        if !scaling.is_valid() {
            return Err(Error::Checkpoint(
                "input scaling must be finite with positive scales".into(),
            ));
        }
        let n_nets = r.u32()? as usize;
        if n_nets > MAX_NETS {
            return Err(Error::Checkpoint(format!("too many networks ({n_nets})")));
        }
        let mut nets = Vec::with_capacity(n_nets);
        for _ in 0..n_nets {
            let name_len = r.u16()? as usize;
            if name_len == 0 || name_len > MAX_NAME {
                return Err(Error::Checkpoint(format!(
                    "network name length {name_len} out of range"
                )));
            }
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("network name is not UTF-8".into()))?
                .to_string();
            let kind = r.u8()?;
            let mid = r.f64()?;
            let half = r.f64()?;
            let output = match kind {
                0 => OutputActivation::Identity,
                1 if mid.is_finite() && half.is_finite() && half > 0.0 => OutputActivation::BoundedTanh { mid, half },
                1 => return Err(Error::Checkpoint(format!("{name}: invalid output bounds"))),
                k => return Err(Error::Checkpoint(format!("{name}: unknown output kind {k}"))),
            };
            let n_sizes = r.u32()? as usize;
            if !(2..=MAX_LAYERS + 1).contains(&n_sizes) {
                return Err(Error::Checkpoint(format!("{name}: layer count {n_sizes} out of range")));
            }
            let mut sizes = Vec::with_capacity(n_sizes);
            for _ in 0..n_sizes {
                let n = r.u32()? as usize;
                if n == 0 || n > MAX_WIDTH {
                    return Err(Error::Checkpoint(format!("{name}: layer width {n} out of range")));
                }
                sizes.push(n);
            }
            let mut net = Mlp::zeros(&sizes, output);
            if net.num_params() * 8 > r.remaining() {
                return Err(Error::Checkpoint(format!("{name}: truncated parameters")));
            }
            for x in net.params.iter_mut() {
                *x = r.f64()?;
                if !x.is_finite() {
                    return Err(Error::Checkpoint(format!("{name}: non-finite parameter")));
                }
            }
            if nets.iter().any(|(n, _): &(String, Mlp)| *n == name) {
                return Err(Error::Checkpoint(format!("duplicate network {name}")));
            }
            nets.push((name, net));
        }
        if r.remaining() != 0 {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Checkpoint {
            seed,
            steps,
            scaling,
            nets,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Checkpoint(format!(
                "unexpected end of data at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }
}
