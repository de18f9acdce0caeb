//! Binary checkpoints.
//!
//! Layout: the magic bytes `RBNS1`, a little-endian `u32` header length, a
//! UTF-8 header of `key=value` lines, then little-endian `f64` arrays in
//! row-major order (`j * n1 + i`): omega, psi, temp, and when present the
//! previous explicit terms for omega and temp. Header floats are written in
//! shortest round-trip form so restarts are bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{FourierMode, FourierSeries, HeightProfile};
use crate::grid::{BcKind, ScalarField};
use crate::solver::{FlowState, History, Model, PhysicalParams, Simulation, SolverOptions};

pub const MAGIC: &[u8; 5] = b"RBNS1";

/// Parsed checkpoint contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub n1: usize,
    pub n2: usize,
    pub profile: HeightProfile,
    pub alpha_bottom: FourierSeries,
    pub alpha_top: FourierSeries,
    pub params: PhysicalParams,
    pub time: f64,
    pub psi_top: f64,
    pub history: History,
    pub omega: Vec<f64>,
    pub psi: Vec<f64>,
    pub temp: Vec<f64>,
}

fn modes_to_string(modes: &[FourierMode]) -> String {
    modes.iter().map(|m| format!("{}:{:?}:{:?}", m.k, m.cos, m.sin)).collect::<Vec<_>>().join(",")
}

fn modes_from_string(s: &str) -> Result<Vec<FourierMode>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|item| {
            let p: Vec<&str> = item.split(':').collect();
            if p.len() != 3 {
                return Err(Error::Checkpoint(format!("bad mode entry '{item}'")));
            }
            Ok(FourierMode {
                k: p[0].parse().map_err(|_| Error::Checkpoint(format!("bad wavenumber '{}'", p[0])))?,
                cos: parse_f64(p[1])?,
                sin: parse_f64(p[2])?,
            })
        })
        .collect()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Checkpoint(format!("bad float '{s}'")))
}

impl Checkpoint {
    pub fn from_simulation(sim: &Simulation) -> Self {
        let m = &sim.model;
        Self {
            n1: m.grid.n1,
            n2: m.grid.n2,
            profile: m.grid.profile.clone(),
            alpha_bottom: m.alpha_bottom.clone(),
            alpha_top: m.alpha_top.clone(),
            params: m.params,
            time: sim.state.time,
            psi_top: sim.state.psi_top,
            history: sim.history.clone(),
            omega: sim.state.omega.values.clone(),
            psi: sim.state.psi.values.clone(),
            temp: sim.state.temp.values.clone(),
        }
    }

    fn header(&self) -> String {
        let h = &self.history;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("n1", self.n1.to_string());
        kv("n2", self.n2.to_string());
        kv("gamma", format!("{:?}", self.profile.gamma));
        kv("h_mean_offset", format!("{:?}", self.profile.mean_offset));
        kv("h_modes", modes_to_string(&self.profile.modes));
        kv("alpha_bottom_mean", format!("{:?}", self.alpha_bottom.mean));
        kv("alpha_bottom_modes", modes_to_string(&self.alpha_bottom.modes));
        kv("alpha_top_mean", format!("{:?}", self.alpha_top.mean));
        kv("alpha_top_modes", modes_to_string(&self.alpha_top.modes));
        kv("ra", format!("{:?}", self.params.ra));
        kv("pr", format!("{:?}", self.params.pr));
        kv("time", format!("{:?}", self.time));
        kv("psi_top", format!("{:?}", self.psi_top));
        kv("step", h.step.to_string());
        kv("dt_prev", format!("{:?}", h.dt_prev));
        kv("circulation", format!("{:?}", h.circulation));
        kv("flux_prev", format!("{:?}", h.flux_prev));
        kv("has_prev", (h.n_omega_prev.is_some() && h.n_temp_prev.is_some()).to_string());
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header();
        let mut out = Vec::with_capacity(16 + header.len() + 8 * 5 * self.omega.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let mut arrays = vec![&self.omega, &self.psi, &self.temp];
        if let (Some(a), Some(b)) = (&self.history.n_omega_prev, &self.history.n_temp_prev) {
            arrays.push(a);
            arrays.push(b);
        }
        for a in arrays {
            for v in a.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 || &bytes[..5] != MAGIC {
            return Err(Error::Checkpoint("missing RBNS1 magic".into()));
        }
        let hlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let body_start = 9 + hlen;
        if bytes.len() < body_start {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let text = std::str::from_utf8(&bytes[9..body_start]).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
        let mut map = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Checkpoint(format!("bad header line '{line}'")))?;
            map.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| map.get(k).map(String::as_str).ok_or_else(|| Error::Checkpoint(format!("missing key '{k}'")));
        let getf = |k: &str| get(k).and_then(parse_f64);
        let getu = |k: &str| get(k)?.parse::<u64>().map_err(|_| Error::Checkpoint(format!("bad integer for '{k}'")));
        let n1 = getu("n1")? as usize;
        let n2 = getu("n2")? as usize;
        let has_prev = get("has_prev")? == "true";
        let n = n1 * n2;
        let count = if has_prev { 5 } else { 3 };
        let body = &bytes[body_start..];
        if body.len() != 8 * n * count {
            return Err(Error::Checkpoint(format!("body has {} bytes, expected {} for {n1}x{n2}", body.len(), 8 * n * count)));
        }
        let mut arrays: Vec<Vec<f64>> =
            body.chunks_exact(8 * n).map(|c| c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()).collect();
        let (n_omega_prev, n_temp_prev) = if has_prev {
            let t = arrays.pop();
            (arrays.pop(), t)
        } else {
            (None, None)
        };
        let temp = arrays.pop().unwrap();
        let psi = arrays.pop().unwrap();
        let omega = arrays.pop().unwrap();
        let profile = HeightProfile::new(getf("gamma")?, modes_from_string(get("h_modes")?)?, getf("h_mean_offset")?)?;
        Ok(Self {
            n1,
            n2,
            profile,
            alpha_bottom: FourierSeries { mean: getf("alpha_bottom_mean")?, modes: modes_from_string(get("alpha_bottom_modes")?)? },
            alpha_top: FourierSeries { mean: getf("alpha_top_mean")?, modes: modes_from_string(get("alpha_top_modes")?)? },
            params: PhysicalParams::new(getf("ra")?, getf("pr")?)?,
            time: getf("time")?,
            psi_top: getf("psi_top")?,
            history: History {
                step: getu("step")?,
                dt_prev: getf("dt_prev")?,
                n_omega_prev,
                n_temp_prev,
                circulation: getf("circulation")?,
                flux_prev: getf("flux_prev")?,
            },
            omega,
            psi,
            temp,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Rebuilds the simulation with the stored geometry and parameters.
    pub fn into_simulation(self, options: SolverOptions) -> Result<Simulation> {
        let model = Model::new(&self.profile, self.n1, self.n2, &self.alpha_bottom, &self.alpha_top, self.params, options)?;
        let (u1, u2) = model.velocity(&self.psi);
        let (a, b) = (self.n1, self.n2);
        let state = FlowState {
            omega: ScalarField::from_values(a, b, self.omega, BcKind::DirichletGiven),
            psi: ScalarField::from_values(a, b, self.psi, BcKind::DirichletGiven),
            temp: ScalarField::from_values(a, b, self.temp, BcKind::DirichletGiven),
            time: self.time,
            u1,
            u2,
            psi_top: self.psi_top,
        };
        Ok(Simulation::from_parts(model, state, self.history))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::InitialCondition;

    fn sim() -> Simulation {
        let p = HeightProfile::sine(1.0, 1, 0.05);
        let a = FourierSeries { mean: 2.0, modes: vec![FourierMode { k: 1, cos: 0.1, sin: -0.3 }] };
        let m = Model::new(&p, 16, 17, &a, &FourierSeries::constant(1.0), PhysicalParams::new(3e3, 0.7).unwrap(), SolverOptions::default())
            .unwrap();
        Simulation::new(m, &InitialCondition { temp_amplitude: 0.1, seed: 7, ..Default::default() }).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let mut s = sim();
        for _ in 0..3 {
            let dt = s.auto_dt(0.3, 1e-3);
            s.step(dt).unwrap();
        }
        let c = Checkpoint::from_simulation(&s);
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(c, back);
        assert_eq!(&c.to_bytes()[..5], b"RBNS1");
    }

    #[test]
    fn fresh_state_has_no_history_arrays() {
        let c = Checkpoint::from_simulation(&sim());
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert!(back.history.n_omega_prev.is_none());
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_corrupt_input() {
        let bytes = Checkpoint::from_simulation(&sim()).to_bytes();
        assert!(Checkpoint::from_bytes(b"XXXX").is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'Q';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
