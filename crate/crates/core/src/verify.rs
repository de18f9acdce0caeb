//! Verification suites shared by the command line and the test harness.

use std::f64::consts::PI;
use std::fmt;

use crate::diagnostics::{self, SampleOptions};
use crate::elliptic::{solve_poisson_dirichlet, solve_poisson_neumann};
use crate::error::{Error, Result};
use crate::geometry::{boundary_frames, FourierSeries, HeightProfile};
use crate::grid::MappedGrid;
use crate::solver::{InitialCondition, Model, PhysicalParams, Simulation, SolverOptions, StreamMode};

/// One row of a pass/fail table.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `true` when the check requires `value >= threshold`.
    pub at_least: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, at_least: false }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, at_least: true }
    }

    pub fn pass(&self) -> bool {
        if self.at_least {
            self.value >= self.threshold
        } else {
            self.value <= self.threshold
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = if self.at_least { ">=" } else { "<=" };
        let tag = if self.pass() { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {:.6e} {op} {:.6e}", self.name, self.value, self.threshold)
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(Check::pass)
}

pub fn table(checks: &[Check]) -> String {
    checks.iter().map(|c| format!("{c}\n")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Geometry,
    Mms,
    Balances,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometry" => Ok(Suite::Geometry),
            "mms" => Ok(Suite::Mms),
            "balances" => Ok(Suite::Balances),
            _ => Err(Error::Invalid(format!("unknown suite {s:?}; expected geometry, mms or balances"))),
        }
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<Check>> {
    match suite {
        Suite::Geometry => {
            let mut v = geometry_checks("flat", &HeightProfile::flat(1.0), 64)?;
            v.extend(geometry_checks("rough", &HeightProfile::sine(1.0, 1, 0.1), 64)?);
            Ok(v)
        }
        Suite::Mms => mms_checks(),
        Suite::Balances => {
            let d = energy_decay(32, 33)?;
            Ok(d.checks())
        }
    }
}

/// Frame orthogonality, unit normals, zero total curvature and the
/// top/bottom curvature antisymmetry.
pub fn geometry_checks(label: &str, profile: &HeightProfile, n1: usize) -> Result<Vec<Check>> {
    let (b, t) = boundary_frames(profile, n1, &FourierSeries::constant(1.0))?;
    let mut orth = 0.0f64;
    let mut unit = 0.0f64;
    for w in [&b, &t] {
        for (n, tau) in w.normal.iter().zip(&w.tangent) {
            orth = orth.max((n[0] * tau[0] + n[1] * tau[1]).abs());
            unit = unit.max(((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs());
        }
    }
    let dy = profile.gamma / n1 as f64;
    let total = |w: &crate::geometry::BoundaryData| -> f64 { w.kappa.iter().zip(&w.ds_weight).map(|(k, s)| k * s * dy).sum() };
    let int_k = total(&b).abs().max(total(&t).abs());
    let anti = b.kappa.iter().zip(&t.kappa).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
    Ok(vec![
        Check::at_most(format!("{label}: max |tau.n|"), orth, 1e-14),
        Check::at_most(format!("{label}: max ||n| - 1|"), unit, 1e-14),
        Check::at_most(format!("{label}: |int kappa dS|"), int_k, 1e-12),
        Check::at_most(format!("{label}: max |kappa_top + kappa_bottom|"), anti, 0.0),
    ])
}

pub const MMS_N2: [usize; 3] = [32, 64, 128];
pub const MMS_MIN_ORDER: f64 = 1.9;

/// `F = sin(2 pi x1) cos(1.3 x2 + 0.2) + x2^2` and
/// `[F, F1, F2, F11, F12, F22]`.
fn manufactured(x: f64, y: f64) -> [f64; 6] {
    let (s, c) = (2.0 * PI * x).sin_cos();
    let w = 2.0 * PI;
    let (a, b) = ((1.3 * y + 0.2).cos(), (1.3 * y + 0.2).sin());
    [s * a + y * y, w * c * a, -1.3 * s * b + 2.0 * y, -w * w * s * a, -1.3 * w * c * b, -1.69 * s * a + 2.0]
}

fn mms_grid(n2: usize) -> Result<MappedGrid> {
    MappedGrid::new(&HeightProfile::sine(1.0, 1, 0.1), 32, n2)
}

fn exact_l(g: &MappedGrid) -> Vec<f64> {
    let mut v = Vec::with_capacity(g.len());
    for j in 0..g.n2 {
        for i in 0..g.n1 {
            let d = manufactured(g.x1[i], g.x2[j]);
            v.push(d[3] - 2.0 * g.hp[i] * d[4] - g.hpp[i] * d[2] + g.a22[i] * d[5]);
        }
    }
    v
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Observed orders between consecutive grids of [`MMS_N2`].
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    (1..errors.len())
        .map(|k| {
            let r = (MMS_N2[k] - 1) as f64 / (MMS_N2[k - 1] - 1) as f64;
            (errors[k - 1] / errors[k]).ln() / r.ln()
        })
        .collect()
}

/// Max-norm errors on each grid of [`MMS_N2`] for the four operators, in
/// the order grad_physical, apply_L_tilde, Dirichlet solve, Neumann solve.
pub fn mms_errors() -> Result<Vec<(&'static str, Vec<f64>)>> {
    let mut out: Vec<(&'static str, Vec<f64>)> =
        vec![("grad_physical", vec![]), ("apply_L_tilde", vec![]), ("solve_poisson_dirichlet", vec![]), ("solve_poisson_neumann", vec![])];
    for &n2 in &MMS_N2 {
        let g = mms_grid(n2)?;
        let u = g.sample(|x, y| manufactured(x, y)[0]);
        let (g1, g2) = g.grad_physical(&u);
        let e2 = g.sample(|x, y| manufactured(x, y)[2]);
        let e1: Vec<f64> = g.sample(|x, y| manufactured(x, y)[1]).iter().enumerate().map(|(k, v)| v - g.hp[k % g.n1] * e2[k]).collect();
        out[0].1.push(max_err(&g1, &e1).max(max_err(&g2, &e2)));
        let lu = exact_l(&g);
        out[1].1.push(max_err(&g.apply_l_tilde(&u), &lu));
        let t = g.top() * g.n1;
        let (phi, _) = solve_poisson_dirichlet(&g, &lu, &u[..g.n1], &u[t..t + g.n1])?;
        out[2].1.push(max_err(&phi, &u));
        let mean = g.integrate(&u) / g.area();
        let um: Vec<f64> = u.iter().map(|v| v - mean).collect();
        let flux = |y: f64, sign: f64| -> Vec<f64> {
            (0..g.n1)
                .map(|i| {
                    let d = manufactured(g.x1[i], y);
                    sign * (-g.hp[i] * d[1] + g.a22[i] * d[2])
                })
                .collect()
        };
        let (p, _) = solve_poisson_neumann(&g, &lu, &flux(0.0, -1.0), &flux(1.0, 1.0))?;
        out[3].1.push(max_err(&p, &um));
    }
    Ok(out)
}

pub fn mms_checks() -> Result<Vec<Check>> {
    let mut v = Vec::new();
    for (name, errs) in mms_errors()? {
        for (k, o) in observed_orders(&errs).into_iter().enumerate() {
            v.push(Check::at_least(format!("{name}: order n2 {}->{}", MMS_N2[k], MMS_N2[k + 1]), o, MMS_MIN_ORDER));
        }
    }
    Ok(v)
}

/// Outcome of the buoyancy-free decay run.
#[derive(Clone, Debug)]
pub struct DecayResult {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// Least-squares slope of `-log ||u||^2` over the fit window.
    pub fitted_rate: f64,
    /// `(1/4) min(1, alpha_min) Pr`.
    pub bound_rate: f64,
    pub monotone: bool,
}

impl DecayResult {
    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::at_least("decay: fitted rate of -log||u||^2", self.fitted_rate, 0.95 * self.bound_rate),
            Check::at_least("decay: energy monotone (1 = yes)", self.monotone as u8 as f64, 1.0),
        ]
    }
}

/// `Ra = 0`, flat, `alpha = 1`, `Pr = 1` decay of a smooth single-cell
/// flow. The fit window spans the first tenfold decrease after the
/// initial transient.
pub fn energy_decay(n1: usize, n2: usize) -> Result<DecayResult> {
    let params = PhysicalParams::new(0.0, 1.0)?;
    let alpha = FourierSeries::constant(1.0);
    let model = Model::new(&HeightProfile::flat(2.0), n1, n2, &alpha, &alpha, params, SolverOptions::default())?;
    let ic = InitialCondition {
        temp_amplitude: 0.0,
        stream_modes: vec![StreamMode { k: 1, m: 1, amp_cos: 0.0, amp_sin: 1.0 }],
        ..InitialCondition::default()
    };
    let mut sim = Simulation::new(model, &ic)?;
    let dt = 1e-3;
    let mut times = vec![0.0];
    let mut energy = vec![diagnostics::energy(&sim.model, &sim.state)];
    let e0 = energy[0];
    while *energy.last().unwrap() > 1e-4 * e0 && times.len() < 20_000 {
        sim.step(dt)?;
        times.push(sim.state.time);
        energy.push(diagnostics::energy(&sim.model, &sim.state));
    }
    let monotone = energy.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let (lo, hi) = (1e-1 * e0, 1e-3 * e0);
    let pts: Vec<(f64, f64)> = times.iter().zip(&energy).filter(|(_, &e)| e <= lo && e >= hi).map(|(&t, &e)| (t, e.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::Invalid("decay run produced too few points in the fit window".into()));
    }
    let fitted_rate = -least_squares_slope(&pts);
    Ok(DecayResult { times, energy, fitted_rate, bound_rate: 0.25 * params.pr, monotone })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Averaged Nusselt lower bound and averaged energy inequality, each with
/// an absolute slack of `slack`. `area` normalizes the space integrals.
pub fn inequality_checks(label: &str, avg: &diagnostics::Averages, ra: f64, area: f64, height_range: f64, slack: f64) -> Vec<Check> {
    let lower = avg.nu_volume / (1.0 + height_range);
    let dissipation = (avg.grad_u_sq + avg.boundary_friction) / area;
    let budget = ra * ((1.0 + height_range) * avg.nu_flux - 1.0);
    vec![
        Check::at_least(format!("{label}: nu - <(u2 - d2) T>/(1 + dh)"), avg.nu_flux - lower, -slack),
        Check::at_most(
            format!("{label}: energy inequality excess / max(1, budget)"),
            (dissipation - budget) / budget.abs().max(1.0),
            slack,
        ),
    ]
}

/// Samples a short run and returns the post-burn-in averages.
pub fn short_run_averages(model: Model, ic: &InitialCondition, t_end: f64, interval: f64) -> Result<diagnostics::Averages> {
    let mut sim = Simulation::new(model, ic)?;
    let opts = SampleOptions { with_pressure: true, deltas: vec![] };
    let mut rec = diagnostics::Recorder::new(0.2 * t_end, sim.model.params.pr);
    rec.push(diagnostics::sample(&sim.model, &sim.state, &opts)?);
    let mut next = interval;
    while sim.state.time < t_end - 1e-12 {
        let dt = sim.auto_dt(0.4, 1e-3).min(next - sim.state.time);
        sim.step(dt)?;
        if (sim.state.time - next).abs() < 1e-12 {
            sim.state.time = next;
            rec.push(diagnostics::sample(&sim.model, &sim.state, &opts)?);
            next += interval;
        }
    }
    Ok(rec.averages())
}
