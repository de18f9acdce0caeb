//! Run configuration: a sectioned TOML document with documented defaults.
//!
//! ```toml
//! [physical]
//! ra = 1e5
//! pr = 10.0            # default 10
//!
//! [grid]
//! n1 = 128             # product of 2, 3, 5, 7
//! n2 = 129             # >= 8
//!
//! [geometry]           # default: flat walls, gamma = 2
//! gamma = 2.0
//! modes = [{ k = 1, cos = 0.0, sin = 0.1 }]
//!
//! [boundary]           # default: alpha = 1 on both walls
//! alpha_bottom = { mean = 1.0, modes = [] }
//!
//! [time]               # dt omitted = adaptive from the CFL number
//! t_end = 0.3
//! sample_interval = 2e-4
//! ```

use serde::{Deserialize, Serialize};

use crate::bounds::{choose_proof_parameters, BoundaryInputs, ProofCase};
use crate::error::{Error, Result};
use crate::geometry::{FourierMode, FourierSeries, HeightProfile};
use crate::grid::is_fft_friendly;
use crate::solver::{InitialCondition, Model, PhysicalParams, SolverOptions, StreamMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub mean_offset: f64,
    #[serde(default)]
    pub modes: Vec<FourierMode>,
}

fn default_gamma() -> f64 {
    2.0
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { gamma: default_gamma(), mean_offset: 0.0, modes: Vec::new() }
    }
}

fn default_alpha() -> FourierSeries {
    FourierSeries::constant(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default = "default_alpha")]
    pub alpha_bottom: FourierSeries,
    #[serde(default = "default_alpha")]
    pub alpha_top: FourierSeries,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self { alpha_bottom: default_alpha(), alpha_top: default_alpha() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConfig {
    pub ra: f64,
    #[serde(default = "default_pr")]
    pub pr: f64,
}

fn default_pr() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n1: usize,
    pub n2: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    /// Fixed step; adaptive when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// CFL number of the adaptive step.
    pub cfl: f64,
    pub dt_max: f64,
    pub t_end: f64,
    /// Start of the averaging window; 20% of `t_end` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    pub sample_interval: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_interval: Option<f64>,
    /// Recover the pressure at every sample (needed for the enstrophy balance).
    pub pressure_samples: bool,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            dt: None,
            cfl: 0.4,
            dt_max: 1e-3,
            t_end: 1.0,
            burn_in: None,
            sample_interval: 1e-3,
            checkpoint_interval: None,
            pressure_samples: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub temp_amplitude: f64,
    pub seed: u64,
    pub zero_temperature: bool,
    pub stream_modes: Vec<StreamMode>,
    pub mean_flow: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        let ic = InitialCondition::default();
        Self {
            temp_amplitude: ic.temp_amplitude,
            seed: ic.seed,
            zero_temperature: ic.zero_temperature,
            stream_modes: ic.stream_modes,
            mean_flow: ic.mean_flow,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub fixed_point_sweeps: usize,
    pub fixed_point_tol: f64,
    pub cfl_max: f64,
    pub dealias: bool,
    pub startup_implicit_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            fixed_point_sweeps: o.fixed_point_sweeps,
            fixed_point_tol: o.fixed_point_tol,
            cfl_max: o.cfl_max,
            dealias: o.dealias,
            startup_implicit_steps: o.startup_implicit_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub cases: Vec<ProofCase>,
    pub user_c: f64,
    pub user_c_bar: f64,
    /// Placeholder for the initial-data norm in the constants.
    pub u0_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_override: Option<f64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { cases: ProofCase::ALL.to_vec(), user_c: 1.0, user_c_bar: 1.0, u0_norm: 1.0, delta_override: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    /// Significant digits in CSV output (fixed at 17).
    pub precision: u32,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "output".into(), precision: 17 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physical: PhysicalConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn invalid(key: &str, msg: String) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Minimal configuration with every default applied.
    pub fn new(ra: f64, pr: f64, n1: usize, n2: usize) -> Self {
        Self {
            physical: PhysicalConfig { ra, pr },
            grid: GridConfig { n1, n2 },
            geometry: GeometryConfig::default(),
            boundary: BoundaryConfig::default(),
            time: TimeConfig::default(),
            initial: InitialConfig::default(),
            solver: SolverConfig::default(),
            bounds: BoundsConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(is_fft_friendly(g.n1) && g.n1 >= 4) {
            return Err(invalid("grid.n1", format!("{} is not a product of 2, 3, 5, 7 (and >= 4)", g.n1)));
        }
        if g.n2 < 8 {
            return Err(invalid("grid.n2", format!("n2 = {} violates the rule n2 >= 8", g.n2)));
        }
        let p = &self.physical;
        PhysicalParams::new(p.ra, p.pr).map_err(|e| invalid("physical", e.to_string()))?;
        if !(self.geometry.gamma > 0.0 && self.geometry.gamma.is_finite()) {
            return Err(invalid("geometry.gamma", format!("must be positive, got {}", self.geometry.gamma)));
        }
        for (i, m) in self.geometry.modes.iter().enumerate() {
            if m.k == 0 {
                return Err(invalid(&format!("geometry.modes[{i}].k"), "wavenumber must be >= 1 (use mean_offset)".into()));
            }
        }
        for (name, a) in [("boundary.alpha_bottom", &self.boundary.alpha_bottom), ("boundary.alpha_top", &self.boundary.alpha_top)] {
            if a.modes.iter().any(|m| m.k == 0) {
                return Err(invalid(name, "wavenumber must be >= 1 (use mean)".into()));
            }
        }
        let t = &self.time;
        if let Some(dt) = t.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid("time.dt", format!("must be > 0, got {dt}")));
            }
        }
        if !(t.cfl > 0.0 && t.cfl <= self.solver.cfl_max) {
            return Err(invalid("time.cfl", format!("must lie in (0, solver.cfl_max = {}], got {}", self.solver.cfl_max, t.cfl)));
        }
        if !(t.dt_max > 0.0) {
            return Err(invalid("time.dt_max", format!("must be > 0, got {}", t.dt_max)));
        }
        if !(t.t_end >= 0.0 && t.t_end.is_finite()) {
            return Err(invalid("time.t_end", format!("must be >= 0, got {}", t.t_end)));
        }
        if !(t.sample_interval > 0.0) {
            return Err(invalid("time.sample_interval", format!("must be > 0, got {}", t.sample_interval)));
        }
        if let Some(c) = t.checkpoint_interval {
            if !(c > 0.0) {
                return Err(invalid("time.checkpoint_interval", format!("must be > 0, got {c}")));
            }
        }
        if let Some(b) = t.burn_in {
            if !(b >= 0.0) {
                return Err(invalid("time.burn_in", format!("must be >= 0, got {b}")));
            }
        }
        if self.initial.temp_amplitude < 0.0 {
            return Err(invalid("initial.temp_amplitude", format!("must be >= 0, got {}", self.initial.temp_amplitude)));
        }
        if let Some(d) = self.bounds.delta_override {
            if !(d > 0.0 && d <= 0.5) {
                return Err(invalid("bounds.delta_override", format!("must lie in (0, 1/2], got {d}")));
            }
        }
        for (key, v) in [("bounds.user_c", self.bounds.user_c), ("bounds.user_c_bar", self.bounds.user_c_bar)] {
            if !(v > 0.0) {
                return Err(invalid(key, format!("must be > 0, got {v}")));
            }
        }
        if self.bounds.u0_norm < 0.0 {
            return Err(invalid("bounds.u0_norm", format!("must be >= 0, got {}", self.bounds.u0_norm)));
        }
        if self.initial.seed > i64::MAX as u64 {
            return Err(invalid("initial.seed", format!("must be <= {} to fit a TOML integer, got {}", i64::MAX, self.initial.seed)));
        }
        if self.output.precision != 17 {
            return Err(invalid("output.precision", format!("only 17 significant digits are supported, got {}", self.output.precision)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn profile(&self) -> Result<HeightProfile> {
        HeightProfile::new(self.geometry.gamma, self.geometry.modes.clone(), self.geometry.mean_offset)
    }

    pub fn params(&self) -> Result<PhysicalParams> {
        PhysicalParams::new(self.physical.ra, self.physical.pr)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            fixed_point_sweeps: s.fixed_point_sweeps,
            fixed_point_tol: s.fixed_point_tol,
            cfl_max: s.cfl_max,
            dealias: s.dealias,
            startup_implicit_steps: s.startup_implicit_steps,
        }
    }

    pub fn initial_condition(&self) -> InitialCondition {
        let i = &self.initial;
        InitialCondition {
            temp_amplitude: i.temp_amplitude,
            seed: i.seed,
            zero_temperature: i.zero_temperature,
            stream_modes: i.stream_modes.clone(),
            mean_flow: i.mean_flow,
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(
            &self.profile()?,
            self.grid.n1,
            self.grid.n2,
            &self.boundary.alpha_bottom,
            &self.boundary.alpha_top,
            self.params()?,
            self.solver_options(),
        )
    }

    pub fn boundary_inputs(&self) -> Result<BoundaryInputs> {
        BoundaryInputs::from_geometry(&self.profile()?, self.grid.n1, &self.boundary.alpha_bottom, &self.boundary.alpha_top)
    }

    pub fn burn_in(&self) -> f64 {
        self.time.burn_in.unwrap_or(0.2 * self.time.t_end)
    }

    /// Strip widths of every configured bound case (or the override).
    pub fn bound_deltas(&self) -> Result<Vec<f64>> {
        if let Some(d) = self.bounds.delta_override {
            return Ok(vec![d]);
        }
        let bi = self.boundary_inputs()?;
        let mut out: Vec<f64> = Vec::new();
        for &case in &self.bounds.cases {
            let p = choose_proof_parameters(
                case,
                self.physical.ra.max(1.0),
                &bi.norms,
                bi.height_range,
                self.bounds.user_c,
                self.bounds.u0_norm,
                None,
            )?;
            let d = p.delta.min(0.5);
            if !out.contains(&d) {
                out.push(d);
            }
        }
        Ok(out)
    }

    /// Non-fatal findings: strip resolution and the coupling heuristic.
    pub fn warnings(&self) -> Result<Vec<String>> {
        let mut w = Vec::new();
        let dx2 = 1.0 / (self.grid.n2 as f64 - 1.0);
        for d in self.bound_deltas()? {
            if dx2 > d / 4.0 {
                w.push(format!("dx2 = {dx2:.3e} exceeds delta/4 = {:.3e}; the background strip is under-resolved", d / 4.0));
            }
        }
        if let Some(dt) = self.time.dt {
            let m = self.model()?;
            let lim = m.coupling_limit();
            if dt > lim {
                w.push(format!("dt = {dt:.3e} exceeds the wall-coupling heuristic {lim:.3e}; sweeps use the flat-channel preconditioner"));
            }
        }
        Ok(w)
    }

    /// Returns a copy with one dotted key (e.g. `physical.ra`) replaced by a
    /// TOML literal; bare words are taken as strings.
    pub fn with_override(&self, key: &str, value: &str) -> Result<RunConfig> {
        let mut doc: toml::Value = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        let mut cur = &mut doc;
        for (i, p) in parts.iter().enumerate() {
            let table = cur.as_table_mut().ok_or_else(|| Error::Config(format!("{key}: '{p}' is not inside a table")))?;
            if i + 1 == parts.len() {
                table.insert(p.to_string(), parsed.clone());
                break;
            }
            cur = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
        parse_config(&text).map_err(|e| Error::Config(format!("override {key} = {value}: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[physical]\nra = 1e4\npr = 7.0\n[grid]\nn1 = 32\nn2 = 33\n";

    #[test]
    fn minimal_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert!(c.geometry.modes.is_empty());
        assert_eq!(c.boundary.alpha_bottom, FourierSeries::constant(1.0));
        assert_eq!(c.boundary.alpha_top, FourierSeries::constant(1.0));
        assert_eq!(c.time.dt, None);
        assert_eq!(c.burn_in(), 0.2 * c.time.t_end);
        assert_eq!(c.bounds.user_c, 1.0);
        assert_eq!(c.output.precision, 17);
        let p = parse_config("[physical]\nra = 1.0\n[grid]\nn1 = 8\nn2 = 9\n").unwrap();
        assert_eq!(p.physical.pr, 10.0);
    }

    #[test]
    fn mode_pass_through() {
        let c = parse_config(&format!("{MINIMAL}[geometry]\ngamma = 1.0\nmodes = [{{ k = 1, cos = 0.0, sin = 0.1 }}]\n")).unwrap();
        let p = c.profile().unwrap();
        assert_eq!(p.modes, vec![FourierMode { k: 1, cos: 0.0, sin: 0.1 }]);
    }

    #[test]
    fn rejections_are_located() {
        let e = parse_config("[physical]\nra = 1e4\n[grid]\nn1 = 32\nn2 = 4\n").unwrap_err().to_string();
        assert!(e.contains("n2 >= 8"), "{e}");
        let e = parse_config("[physical]\nra = 1e4\n[grid]\nn1 = 22\nn2 = 9\n").unwrap_err().to_string();
        assert!(e.contains("grid.n1"), "{e}");
        let e = parse_config(&format!("{MINIMAL}[time]\ndt = 0.0\n")).unwrap_err().to_string();
        assert!(e.contains("time.dt"), "{e}");
        let e = parse_config(&format!("{MINIMAL}[bounds]\ndelta_override = 0.6\n")).unwrap_err().to_string();
        assert!(e.contains("delta_override"), "{e}");
        let e = parse_config(&format!("{MINIMAL}[initial]\ntemp_amplitude = -1.0\n")).unwrap_err().to_string();
        assert!(e.contains("temp_amplitude"), "{e}");
        let e = parse_config(&format!("{MINIMAL}[grid2]\nx = 1\n")).unwrap_err().to_string();
        assert!(e.contains("grid2") && e.contains("line"), "{e}");
        let e = parse_config("[physical]\nra = \"big\"\n[grid]\nn1 = 32\nn2 = 33\n").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn round_trip_idempotent() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.time.dt = Some(1e-4);
        c.geometry.modes.push(FourierMode { k: 2, cos: 0.01, sin: -0.02 });
        c.initial.stream_modes.push(StreamMode { k: 1, m: 1, amp_cos: 0.3, amp_sin: 0.0 });
        c.bounds.delta_override = Some(0.05);
        let text = c.to_toml();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn overrides() {
        let c = parse_config(MINIMAL).unwrap();
        let d = c.with_override("physical.ra", "3e4").unwrap();
        assert_eq!(d.physical.ra, 3e4);
        let d = c.with_override("output.directory", "runs/a").unwrap();
        assert_eq!(d.output.directory, "runs/a");
        assert!(c.with_override("grid.n2", "4").is_err());
    }

    #[test]
    fn coarse_strip_warns() {
        let c = parse_config(&format!("{MINIMAL}[bounds]\ndelta_override = 0.01\n")).unwrap();
        assert!(c.warnings().unwrap().iter().any(|w| w.contains("delta/4")));
    }
}
