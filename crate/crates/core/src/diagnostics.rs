//! Instantaneous functionals, balance residuals and long-time averages.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::grid::TraceKind;
use crate::solver::{FlowState, Model};

/// Levels of the strip Nusselt numbers written to the CSV.
pub const STRIP_LEVELS: [f64; 3] = [0.25, 0.5, 0.75];

/// Fixed CSV columns of the time series. Background-field columns
/// `grad_t_dot_grad_eta@<delta>` and `theta_u_grad_eta@<delta>` follow, one
/// pair per sampled strip width. Missing enstrophy terms are written as NaN.
pub const CSV_HEADER: [&str; 27] = [
    "time",
    "nu_flux",
    "nu_gradsq",
    "nu_strip_25",
    "nu_strip_50",
    "nu_strip_75",
    "nu_volume",
    "energy",
    "enstrophy",
    "grad_u_sq",
    "boundary_friction",
    "kappa_friction",
    "wall_enstrophy",
    "buoyancy_flux",
    "energy_residual",
    "enstrophy_residual",
    "ens_grad_omega_sq",
    "ens_pressure_wall",
    "ens_buoyancy",
    "ens_cubic_wall",
    "ens_bottom_n1",
    "temp_min",
    "temp_max",
    "omega_l2",
    "omega_l4",
    "omega_l8",
    "max_u_tau",
];

const BG_GRAD: &str = "grad_t_dot_grad_eta@";
const BG_ADV: &str = "theta_u_grad_eta@";

impl DiagnosticsRecord {
    fn csv_values(&self) -> Vec<f64> {
        let e = self.enstrophy_terms.map(|t| t.as_array()).unwrap_or([f64::NAN; 5]);
        let mut v = vec![
            self.time,
            self.nu_flux,
            self.nu_gradsq,
            self.nu_strip[0],
            self.nu_strip[1],
            self.nu_strip[2],
            self.nu_volume,
            self.energy,
            self.enstrophy,
            self.grad_u_sq,
            self.boundary_friction,
            self.kappa_friction,
            self.wall_enstrophy,
            self.buoyancy_flux,
            self.energy_residual,
            self.enstrophy_residual,
        ];
        v.extend(e);
        v.extend([self.temp_min, self.temp_max, self.omega_lp[0], self.omega_lp[1], self.omega_lp[2], self.max_u_tau]);
        for b in &self.background {
            v.push(b.grad_t_dot_grad_eta);
            v.push(b.theta_u_grad_eta);
        }
        v
    }

    fn from_csv_values(v: &[f64], deltas: &[f64]) -> Self {
        let e = [v[16], v[17], v[18], v[19], v[20]];
        let enstrophy_terms = (!e.iter().any(|x| x.is_nan())).then_some(EnstrophyTerms {
            grad_omega_sq: e[0],
            pressure_wall: e[1],
            buoyancy: e[2],
            cubic_wall: e[3],
            bottom_n1: e[4],
        });
        let background = deltas
            .iter()
            .enumerate()
            .map(|(k, &delta)| BackgroundSample { delta, grad_t_dot_grad_eta: v[27 + 2 * k], theta_u_grad_eta: v[28 + 2 * k] })
            .collect();
        Self {
            time: v[0],
            nu_flux: v[1],
            nu_gradsq: v[2],
            nu_strip: [v[3], v[4], v[5]],
            nu_volume: v[6],
            energy: v[7],
            enstrophy: v[8],
            grad_u_sq: v[9],
            boundary_friction: v[10],
            kappa_friction: v[11],
            wall_enstrophy: v[12],
            buoyancy_flux: v[13],
            energy_residual: v[14],
            enstrophy_residual: v[15],
            enstrophy_terms,
            temp_min: v[21],
            temp_max: v[22],
            omega_lp: [v[23], v[24], v[25]],
            max_u_tau: v[26],
            background,
            ..Default::default()
        }
    }
}

/// The five ingredients of the enstrophy balance (integrals, not averages):
/// `0 = d/dt(...) + grad_omega_sq + pressure_wall + buoyancy + cubic_wall + bottom_n1`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnstrophyTerms {
    /// `int |grad omega|^2`.
    pub grad_omega_sq: f64,
    /// `2 int_walls (alpha + kappa) u . grad p dS`.
    pub pressure_wall: f64,
    /// `-Ra int omega d1 T`.
    pub buoyancy: f64,
    /// `(2/Pr) int_walls (alpha + kappa) u . (u . grad) u dS`.
    pub cubic_wall: f64,
    /// `-2 Ra int_bottom (alpha + kappa) u_tau n1 dS`.
    pub bottom_n1: f64,
}

impl EnstrophyTerms {
    pub fn as_array(&self) -> [f64; 5] {
        [self.grad_omega_sq, self.pressure_wall, self.buoyancy, self.cubic_wall, self.bottom_n1]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Background-field integrals for one strip width.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BackgroundSample {
    pub delta: f64,
    /// `<grad T . grad eta>`.
    pub grad_t_dot_grad_eta: f64,
    /// `<theta u . grad eta>`.
    pub theta_u_grad_eta: f64,
}

/// One diagnostic sample.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub nu_flux: f64,
    pub nu_gradsq: f64,
    pub nu_strip: [f64; 3],
    /// `<(u2 - d2) T>`.
    pub nu_volume: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub grad_u_sq: f64,
    /// `int_walls (2 alpha + kappa) u_tau^2 dS`.
    pub boundary_friction: f64,
    /// `int_walls kappa u_tau^2 dS`.
    pub kappa_friction: f64,
    /// `int_walls (alpha + kappa) u_tau^2 dS`.
    pub wall_enstrophy: f64,
    pub buoyancy_flux: f64,
    pub energy_residual: f64,
    pub enstrophy_terms: Option<EnstrophyTerms>,
    pub enstrophy_residual: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    /// `||omega||_p` for p = 2, 4, 8.
    pub omega_lp: [f64; 3],
    /// `psi_+ + (1/|Omega|) int u1`.
    pub psi_top_defect: f64,
    pub max_u_tau: f64,
    pub pressure_compat_defect: f64,
    pub background: Vec<BackgroundSample>,
}

/// `(1/|Omega|) int_bottom n . grad T dS`.
pub fn nusselt_flux(model: &Model, state: &FlowState) -> f64 {
    let g = &model.grid;
    let nd = g.boundary_trace(&state.temp.values, Side::Bottom, TraceKind::NormalDerivative);
    g.line_integral(&nd) / g.area()
}

/// `(1/|Omega|) int |grad T|^2`.
pub fn nusselt_gradsq(model: &Model, state: &FlowState) -> f64 {
    let g = &model.grid;
    let (a, b) = g.grad_physical(&state.temp.values);
    (g.integrate_product(&a, &a) + g.integrate_product(&b, &b)) / g.area()
}

/// Per-node integrand of `(u T - grad T) . n_+ dS` per unit `dx1`.
fn strip_integrand(model: &Model, state: &FlowState) -> Vec<f64> {
    let g = &model.grid;
    let t = &state.temp.values;
    let d1psi = g.d1(&state.psi.values);
    let d1t = g.d1(t);
    let d2t = g.d2(t);
    (0..g.len())
        .map(|k| {
            let i = k % g.n1;
            d1psi[k] * t[k] + g.hp[i] * d1t[k] - g.a22[i] * d2t[k]
        })
        .collect()
}

/// `(1/|Omega|) int_{gamma(x2)} (u T - grad T) . n_+ dS`.
pub fn nusselt_strip(model: &Model, state: &FlowState, x2: f64) -> Result<f64> {
    let g = &model.grid;
    let f = strip_integrand(model, state);
    let v = g.level_values(&f, x2)?;
    Ok(v.iter().sum::<f64>() * g.dx1 / g.area())
}

/// `(1/|Omega|) int (u2 - d/dy2) T dy`.
pub fn nusselt_volume(model: &Model, state: &FlowState) -> f64 {
    let g = &model.grid;
    let t = &state.temp.values;
    let d2t = g.d2(t);
    let f: Vec<f64> = (0..g.len()).map(|k| state.u2[k] * t[k] - d2t[k]).collect();
    g.integrate(&f) / g.area()
}

/// `||u||^2`.
pub fn energy(model: &Model, state: &FlowState) -> f64 {
    let g = &model.grid;
    g.integrate_product(&state.u1, &state.u1) + g.integrate_product(&state.u2, &state.u2)
}

/// `||grad u||^2`.
pub fn grad_u_sq(model: &Model, state: &FlowState) -> f64 {
    let g = &model.grid;
    let (a, b) = g.grad_physical(&state.u1);
    let (c, d) = g.grad_physical(&state.u2);
    g.integrate_product(&a, &a) + g.integrate_product(&b, &b) + g.integrate_product(&c, &c) + g.integrate_product(&d, &d)
}

/// `int_walls w(side, i) u_tau^2 dS`.
fn wall_quadratic(model: &Model, state: &FlowState, w: impl Fn(Side, usize) -> f64) -> f64 {
    let g = &model.grid;
    [Side::Bottom, Side::Top]
        .iter()
        .map(|&side| {
            let ut = model.u_tau(&state.psi.values, side);
            let f: Vec<f64> = (0..g.n1).map(|i| w(side, i) * ut[i] * ut[i]).collect();
            g.line_integral(&f)
        })
        .sum()
}

/// `int_walls (2 alpha + kappa) u_tau^2 dS`.
pub fn boundary_friction(model: &Model, state: &FlowState) -> f64 {
    wall_quadratic(model, state, |s, i| 2.0 * model.wall(s).alpha[i] + model.wall(s).kappa[i])
}

/// `Ra int T u2`.
pub fn buoyancy_flux(model: &Model, state: &FlowState) -> f64 {
    model.params.ra * model.grid.integrate_product(&state.temp.values, &state.u2)
}

/// Enstrophy-balance terms for a recovered pressure `p`.
pub fn enstrophy_balance_terms(model: &Model, state: &FlowState, p: &[f64]) -> EnstrophyTerms {
    let g = &model.grid;
    let (ra, pr) = (model.params.ra, model.params.pr);
    let w = &state.omega.values;
    let (w1, w2) = g.grad_physical(w);
    let (t1, _) = g.grad_physical(&state.temp.values);
    let mut terms = EnstrophyTerms {
        grad_omega_sq: g.integrate_product(&w1, &w1) + g.integrate_product(&w2, &w2),
        buoyancy: -ra * g.integrate_product(w, &t1),
        ..Default::default()
    };
    for side in [Side::Bottom, Side::Top] {
        let ut = model.u_tau(&state.psi.values, side);
        let apk = model.apk(side);
        let j = if side == Side::Bottom { 0 } else { g.top() };
        let dp = g.spectral.d1(g.row(p, j));
        let dut = g.spectral.d1(&ut);
        // tau . grad = o (1/s) d/dx1 and dS = s dx1
        let o = -side.sign();
        let sum = |f: &dyn Fn(usize) -> f64| (0..g.n1).map(f).sum::<f64>() * g.dx1;
        terms.pressure_wall += 2.0 * o * sum(&|i| apk[i] * ut[i] * dp[i]);
        terms.cubic_wall += 2.0 / pr * o * sum(&|i| apk[i] * ut[i] * ut[i] * dut[i]);
        if side == Side::Bottom {
            // n1 dS = h' dx1 on the bottom wall
            terms.bottom_n1 = -2.0 * ra * sum(&|i| apk[i] * ut[i] * g.hp[i]);
        }
    }
    terms
}

/// `-2 int_walls p tau . grad((alpha + kappa) u_tau) dS`, the integrated-by-parts
/// form of [`EnstrophyTerms::pressure_wall`].
pub fn pressure_wall_by_parts(model: &Model, state: &FlowState, p: &[f64]) -> f64 {
    let g = &model.grid;
    let mut total = 0.0;
    for side in [Side::Bottom, Side::Top] {
        let ut = model.u_tau(&state.psi.values, side);
        let q: Vec<f64> = ut.iter().zip(model.apk(side)).map(|(u, a)| u * a).collect();
        let dq = g.spectral.d1(&q);
        let j = if side == Side::Bottom { 0 } else { g.top() };
        let pw = g.row(p, j);
        let o = -side.sign();
        total += -2.0 * o * (0..g.n1).map(|i| pw[i] * dq[i]).sum::<f64>() * g.dx1;
    }
    total
}

/// Per-column `int_a^b f dx2` of the piecewise-linear interpolant.
fn column_integral(model: &Model, f: &[f64], a: f64, b: f64) -> Vec<f64> {
    let g = &model.grid;
    let n1 = g.n1;
    let val = |x: f64| g.level_values(f, x).expect("level inside [0,1]");
    let (ja, _) = g.locate(a);
    let (jb, _) = g.locate(b);
    let mut acc = vec![0.0; n1];
    let add = |acc: &mut Vec<f64>, lo: f64, flo: &[f64], hi: f64, fhi: &[f64]| {
        for i in 0..n1 {
            acc[i] += 0.5 * (hi - lo) * (flo[i] + fhi[i]);
        }
    };
    // nodes strictly inside (a, b)
    let mut knots: Vec<f64> = ((ja + 1)..=jb).map(|j| g.x2[j]).filter(|&x| x > a && x < b).collect();
    knots.insert(0, a);
    knots.push(b);
    let mut prev = val(knots[0]);
    for w in knots.windows(2) {
        let next = val(w[1]);
        add(&mut acc, w[0], &prev, w[1], &next);
        prev = next;
    }
    acc
}

/// Background-field integrals for strip width `delta`.
pub fn background_sample(model: &Model, state: &FlowState, delta: f64) -> BackgroundSample {
    let g = &model.grid;
    let t = &state.temp.values;
    let c = 1.0 / (2.0 * delta);
    // <grad T . grad eta> = c/|Omega| int_strips (h' d1 T - a22 d2 T)
    let cb = column_integral(model, t, 0.0, delta);
    let ct = column_integral(model, t, 1.0 - delta, 1.0);
    let d1cb = g.spectral.d1(&cb);
    let d1ct = g.spectral.d1(&ct);
    let tb = g.level_values(t, delta).unwrap();
    let tt = g.level_values(t, 1.0 - delta).unwrap();
    let top = g.top() * g.n1;
    let mut s = 0.0;
    for i in 0..g.n1 {
        s += g.hp[i] * (d1cb[i] + d1ct[i]) - g.a22[i] * ((tb[i] - t[i]) + (t[top + i] - tt[i]));
    }
    let grad_t_dot_grad_eta = c * s * g.dx1 / g.area();
    // <theta u . grad eta> with u . grad eta = -c d1 psi in the strips
    let d1psi = g.d1(&state.psi.values);
    let qb: Vec<f64> = (0..g.len()).map(|k| (t[k] - (1.0 - g.x2[k / g.n1] * c)) * d1psi[k]).collect();
    let qt: Vec<f64> = (0..g.len()).map(|k| (t[k] - (1.0 - g.x2[k / g.n1]) * c) * d1psi[k]).collect();
    let ib: f64 = column_integral(model, &qb, 0.0, delta).iter().sum();
    let it: f64 = column_integral(model, &qt, 1.0 - delta, 1.0).iter().sum();
    let theta_u_grad_eta = -c * (ib + it) * g.dx1 / g.area();
    BackgroundSample { delta, grad_t_dot_grad_eta, theta_u_grad_eta }
}

fn lp_norm(model: &Model, f: &[f64], p: i32) -> f64 {
    let a: Vec<f64> = f.iter().map(|v| v.abs().powi(p)).collect();
    model.grid.integrate(&a).powf(1.0 / p as f64)
}

/// Options controlling what a sample computes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleOptions {
    pub with_pressure: bool,
    pub deltas: Vec<f64>,
}

/// Computes one diagnostic record (residuals are filled by the recorder).
pub fn sample(model: &Model, state: &FlowState, opts: &SampleOptions) -> Result<DiagnosticsRecord> {
    let g = &model.grid;
    let t = &state.temp.values;
    let mut strips = [0.0; 3];
    let f = strip_integrand(model, state);
    for (k, &lvl) in STRIP_LEVELS.iter().enumerate() {
        strips[k] = g.level_values(&f, lvl)?.iter().sum::<f64>() * g.dx1 / g.area();
    }
    let w = &state.omega.values;
    let max_u_tau = [Side::Bottom, Side::Top].iter().flat_map(|&s| model.u_tau(&state.psi.values, s)).fold(0.0f64, |a, v| a.max(v.abs()));
    let mut rec = DiagnosticsRecord {
        time: state.time,
        nu_flux: nusselt_flux(model, state),
        nu_gradsq: nusselt_gradsq(model, state),
        nu_strip: strips,
        nu_volume: nusselt_volume(model, state),
        energy: energy(model, state),
        enstrophy: g.integrate_product(w, w),
        grad_u_sq: grad_u_sq(model, state),
        boundary_friction: boundary_friction(model, state),
        kappa_friction: wall_quadratic(model, state, |s, i| model.wall(s).kappa[i]),
        wall_enstrophy: wall_quadratic(model, state, |s, i| model.apk(s)[i]),
        buoyancy_flux: buoyancy_flux(model, state),
        temp_min: t.iter().cloned().fold(f64::INFINITY, f64::min),
        temp_max: t.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        omega_lp: [lp_norm(model, w, 2), lp_norm(model, w, 4), lp_norm(model, w, 8)],
        psi_top_defect: state.psi_top + g.integrate(&state.u1) / g.area(),
        max_u_tau,
        background: opts.deltas.iter().map(|&d| background_sample(model, state, d)).collect(),
        ..Default::default()
    };
    if opts.with_pressure {
        let (p, info) = model.recover_pressure(state)?;
        rec.pressure_compat_defect = info.compat_defect;
        rec.enstrophy_terms = Some(enstrophy_balance_terms(model, state, &p));
    }
    Ok(rec)
}

/// Normalized energy-balance residual from a time derivative of `||u||^2`.
pub fn energy_balance_residual(rec: &DiagnosticsRecord, denergy_dt: f64, pr: f64) -> f64 {
    let lhs = denergy_dt / (2.0 * pr) + rec.grad_u_sq + rec.boundary_friction;
    let scale = rec.buoyancy_flux.abs().max(rec.grad_u_sq).max(1.0);
    (lhs - rec.buoyancy_flux) / scale
}

/// Normalized enstrophy-balance residual given the time derivatives of
/// `||omega||^2` and `int (alpha + kappa) u_tau^2 dS`.
pub fn enstrophy_balance_residual(terms: &EnstrophyTerms, denstrophy_dt: f64, dwall_dt: f64, pr: f64) -> f64 {
    let d = denstrophy_dt / (2.0 * pr) + dwall_dt / pr;
    let scale = terms.max_abs().max(d.abs());
    if scale == 0.0 {
        0.0
    } else {
        (d + terms.sum()) / scale
    }
}

/// Time derivative at sample `k` by centered differences (one-sided at the ends).
fn derivative(times: &[f64], vals: &[f64], k: usize) -> f64 {
    let n = times.len();
    if n < 2 {
        return 0.0;
    }
    let (a, b) = if k == 0 {
        (0, 1)
    } else if k == n - 1 {
        (n - 2, n - 1)
    } else {
        (k - 1, k + 1)
    };
    let dt = times[b] - times[a];
    if dt == 0.0 {
        0.0
    } else {
        (vals[b] - vals[a]) / dt
    }
}

/// Long-time averages over the post-burn-in window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Averages {
    pub t_start: f64,
    pub t_end: f64,
    pub n_samples: usize,
    pub nu_flux: f64,
    pub nu_gradsq: f64,
    pub nu_strip: [f64; 3],
    pub nu_volume: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub grad_u_sq: f64,
    pub boundary_friction: f64,
    pub kappa_friction: f64,
    pub buoyancy_flux: f64,
    pub enstrophy_terms: Option<EnstrophyTerms>,
    /// Residual of the averaged energy balance.
    pub energy_residual: f64,
    /// Residual of the averaged enstrophy balance relative to its largest term.
    pub enstrophy_residual: f64,
    pub nu_flux_tail_max: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    pub omega_lp_max: [f64; 3],
    pub background: Vec<BackgroundSample>,
}

/// Running collection of samples.
#[derive(Clone, Debug, Default)]
pub struct Recorder {
    pub burn_in: f64,
    pub pr: f64,
    pub records: Vec<DiagnosticsRecord>,
}

impl Recorder {
    pub fn new(burn_in: f64, pr: f64) -> Self {
        Self { burn_in, pr, records: Vec::new() }
    }

    /// Adds a sample and refreshes the residuals of the affected neighbours.
    pub fn push(&mut self, rec: DiagnosticsRecord) {
        self.records.push(rec);
        let n = self.records.len();
        for k in n.saturating_sub(2)..n {
            self.update_residual(k);
        }
    }

    fn update_residual(&mut self, k: usize) {
        let times: Vec<f64> = self.records.iter().map(|r| r.time).collect();
        let e: Vec<f64> = self.records.iter().map(|r| r.energy).collect();
        let z: Vec<f64> = self.records.iter().map(|r| r.enstrophy).collect();
        let b: Vec<f64> = self.records.iter().map(|r| r.wall_enstrophy).collect();
        let de = derivative(&times, &e, k);
        let dz = derivative(&times, &z, k);
        let db = derivative(&times, &b, k);
        let pr = self.pr;
        let r = &mut self.records[k];
        r.energy_residual = energy_balance_residual(r, de, pr);
        if let Some(t) = &r.enstrophy_terms {
            r.enstrophy_residual = enstrophy_balance_residual(t, dz, db, pr);
        }
    }

    fn window(&self) -> Vec<&DiagnosticsRecord> {
        let w: Vec<&DiagnosticsRecord> = self.records.iter().filter(|r| r.time >= self.burn_in).collect();
        if w.is_empty() {
            self.records.iter().rev().take(1).collect()
        } else {
            w
        }
    }

    /// Averages over samples with `t >= burn_in` (the last sample if none).
    pub fn averages(&self) -> Averages {
        let w = self.window();
        let n = w.len();
        if n == 0 {
            return Averages::default();
        }
        let mean = |f: &dyn Fn(&DiagnosticsRecord) -> f64| w.iter().map(|r| f(r)).sum::<f64>() / n as f64;
        let (first, last) = (w[0], w[n - 1]);
        let span = last.time - first.time;
        let rate = |f: &dyn Fn(&DiagnosticsRecord) -> f64| if span > 0.0 { (f(last) - f(first)) / span } else { 0.0 };
        let pr = self.pr;
        let mut a = Averages {
            t_start: first.time,
            t_end: last.time,
            n_samples: n,
            nu_flux: mean(&|r| r.nu_flux),
            nu_gradsq: mean(&|r| r.nu_gradsq),
            nu_strip: [mean(&|r| r.nu_strip[0]), mean(&|r| r.nu_strip[1]), mean(&|r| r.nu_strip[2])],
            nu_volume: mean(&|r| r.nu_volume),
            energy: mean(&|r| r.energy),
            enstrophy: mean(&|r| r.enstrophy),
            grad_u_sq: mean(&|r| r.grad_u_sq),
            boundary_friction: mean(&|r| r.boundary_friction),
            kappa_friction: mean(&|r| r.kappa_friction),
            buoyancy_flux: mean(&|r| r.buoyancy_flux),
            nu_flux_tail_max: w.iter().map(|r| r.nu_flux).fold(f64::NEG_INFINITY, f64::max),
            temp_min: w.iter().map(|r| r.temp_min).fold(f64::INFINITY, f64::min),
            temp_max: w.iter().map(|r| r.temp_max).fold(f64::NEG_INFINITY, f64::max),
            ..Default::default()
        };
        for p in 0..3 {
            a.omega_lp_max[p] = w.iter().map(|r| r.omega_lp[p]).fold(0.0, f64::max);
        }
        let avg_rec = DiagnosticsRecord {
            grad_u_sq: a.grad_u_sq,
            boundary_friction: a.boundary_friction,
            buoyancy_flux: a.buoyancy_flux,
            ..Default::default()
        };
        a.energy_residual = energy_balance_residual(&avg_rec, rate(&|r| r.energy), pr);
        if w.iter().all(|r| r.enstrophy_terms.is_some()) {
            let m = |k: usize| mean(&|r| r.enstrophy_terms.unwrap().as_array()[k]);
            let t = EnstrophyTerms { grad_omega_sq: m(0), pressure_wall: m(1), buoyancy: m(2), cubic_wall: m(3), bottom_n1: m(4) };
            a.enstrophy_residual = enstrophy_balance_residual(&t, rate(&|r| r.enstrophy), rate(&|r| r.wall_enstrophy), pr);
            a.enstrophy_terms = Some(t);
        }
        if let Some(first_bg) = w.first().map(|r| r.background.len()) {
            a.background = (0..first_bg)
                .map(|k| BackgroundSample {
                    delta: w[0].background[k].delta,
                    grad_t_dot_grad_eta: mean(&|r| r.background[k].grad_t_dot_grad_eta),
                    theta_u_grad_eta: mean(&|r| r.background[k].theta_u_grad_eta),
                })
                .collect();
        }
        a
    }

    /// Writes the time series with 17 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut header: Vec<String> = CSV_HEADER.iter().map(|s| s.to_string()).collect();
        if let Some(r) = self.records.first() {
            for b in &r.background {
                header.push(format!("{BG_GRAD}{:?}", b.delta));
                header.push(format!("{BG_ADV}{:?}", b.delta));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let s: Vec<String> = r.csv_values().iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", s.join(","))?;
        }
        Ok(())
    }

    /// Parses a time series written by [`Recorder::write_csv`]. Fields not
    /// stored in the CSV are left at their defaults.
    pub fn read_csv(text: &str, burn_in: f64, pr: f64) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Invalid(format!("diagnostics CSV line {line}: {msg}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "missing header".into()))?.split(',').collect();
        if header.len() < CSV_HEADER.len() || header[..CSV_HEADER.len()] != CSV_HEADER {
            return Err(bad(1, "unexpected header".into()));
        }
        let extra = &header[CSV_HEADER.len()..];
        if !extra.len().is_multiple_of(2) {
            return Err(bad(1, "unpaired background columns".into()));
        }
        let mut deltas = Vec::new();
        for pair in extra.chunks(2) {
            let d = pair[0].strip_prefix(BG_GRAD).ok_or_else(|| bad(1, format!("unexpected column {}", pair[0])))?;
            if pair[1] != format!("{BG_ADV}{d}") {
                return Err(bad(1, format!("unexpected column {}", pair[1])));
            }
            deltas.push(d.parse::<f64>().map_err(|e| bad(1, format!("bad delta {d}: {e}")))?);
        }
        let mut rec = Recorder::new(burn_in, pr);
        for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(k + 2, e.to_string()))?;
            if v.len() != header.len() {
                return Err(bad(k + 2, format!("expected {} columns, found {}", header.len(), v.len())));
            }
            rec.records.push(DiagnosticsRecord::from_csv_values(&v, &deltas));
        }
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FourierSeries, HeightProfile};
    use crate::solver::{InitialCondition, PhysicalParams, SolverOptions};

    fn model(p: HeightProfile) -> Model {
        let a = FourierSeries::constant(1.0);
        Model::new(&p, 16, 33, &a, &a, PhysicalParams::new(100.0, 1.0).unwrap(), SolverOptions::default()).unwrap()
    }

    fn conduction(m: &Model) -> FlowState {
        m.initial_state(&InitialCondition { temp_amplitude: 0.0, ..Default::default() }).unwrap().0
    }

    #[test]
    fn conduction_nusselt_is_one() {
        let m = model(HeightProfile::flat(1.0));
        let s = conduction(&m);
        assert!((nusselt_flux(&m, &s) - 1.0).abs() < 1e-12);
        assert!((nusselt_gradsq(&m, &s) - 1.0).abs() < 1e-12);
        for x in [0.0, 0.25, 0.3, 1.0] {
            assert!((nusselt_strip(&m, &s, x).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(nusselt_strip(&m, &s, 1.5).is_err());
    }

    #[test]
    fn constant_temperature_zero_nusselt() {
        let m = model(HeightProfile::flat(1.0));
        let mut s = conduction(&m);
        s.temp.values.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(nusselt_flux(&m, &s), 0.0);
        assert_eq!(nusselt_gradsq(&m, &s), 0.0);
    }

    #[test]
    fn rough_conduction_flux() {
        // T = 1 - x2: n.grad T on the bottom is (1 + h'^2)/s, Nu = (1/G) int (1 + h'^2) dy1
        let m = model(HeightProfile::sine(1.0, 1, 0.1));
        let s = conduction(&m);
        let exact = 1.0 + 0.5 * (0.2 * std::f64::consts::PI).powi(2);
        assert!((nusselt_flux(&m, &s) - exact).abs() < 1e-12);
        assert!((nusselt_strip(&m, &s, 0.0).unwrap() - nusselt_flux(&m, &s)).abs() < 1e-12);
    }

    #[test]
    fn gradsq_manufactured() {
        // T = sin(2 pi y1) g(y2) on a flat grid with g = y^2: <|grad T|^2> = (2 pi)^2/2 * 1/5 + 1/2 * 4/3
        let m = model(HeightProfile::flat(1.0));
        let mut s = conduction(&m);
        s.temp.values = m.grid.sample(|x, y| (2.0 * std::f64::consts::PI * x).sin() * y * y);
        let exact = 2.0 * std::f64::consts::PI.powi(2) / 5.0 + 2.0 / 3.0;
        let e = (nusselt_gradsq(&m, &s) - exact).abs();
        assert!(e < 1e-2, "{e}");
    }

    #[test]
    fn recorder_constant_and_sine() {
        let mut r = Recorder::new(0.0, 1.0);
        for k in 0..2001 {
            let t = k as f64 * 0.01;
            r.push(DiagnosticsRecord { time: t, nu_flux: t.sin(), nu_gradsq: 3.0, ..Default::default() });
        }
        let a = r.averages();
        assert!((a.nu_gradsq - 3.0).abs() < 1e-14);
        assert!((a.nu_flux - (1.0 - 20f64.cos()) / 20.0).abs() < 1e-3);
        assert!((a.nu_flux_tail_max - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_flow_residuals_vanish() {
        let m = model(HeightProfile::sine(1.0, 1, 0.1));
        let s = conduction(&m);
        let opts = SampleOptions { with_pressure: true, deltas: vec![0.1] };
        let mut r = Recorder::new(0.0, 1.0);
        r.push(sample(&m, &s, &opts).unwrap());
        r.push(sample(&m, &s, &opts).unwrap());
        let rec = &r.records[0];
        assert_eq!(rec.energy_residual, 0.0);
        assert_eq!(rec.enstrophy_terms.unwrap().max_abs(), 0.0);
        assert_eq!(rec.enstrophy_residual, 0.0);
    }

    #[test]
    fn csv_header_and_precision() {
        let mut r = Recorder::new(0.0, 1.0);
        r.push(DiagnosticsRecord { time: 0.1, nu_flux: 1.0 / 3.0, ..Default::default() });
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        let v: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }

    #[test]
    fn csv_round_trip() {
        let m = model(HeightProfile::sine(1.0, 1, 0.1));
        let ic = InitialCondition { temp_amplitude: 0.2, ..Default::default() };
        let s = m.initial_state(&ic).unwrap().0;
        let opts = SampleOptions { with_pressure: true, deltas: vec![0.1, 0.25] };
        let mut r = Recorder::new(0.0, 1.0);
        let mut a = sample(&m, &s, &opts).unwrap();
        r.push(a.clone());
        a.time = 0.5;
        a.enstrophy_terms = None;
        r.push(a);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().ends_with("theta_u_grad_eta@0.25"));
        let back = Recorder::read_csv(&text, 0.0, 1.0).unwrap();
        assert_eq!(back.records.len(), 2);
        assert_eq!(back.records[0].enstrophy_terms, r.records[0].enstrophy_terms);
        assert_eq!(back.records[0].background, r.records[0].background);
        assert_eq!(back.records[1].enstrophy_terms, None);
        assert_eq!(back.averages().nu_flux, r.averages().nu_flux);
        assert!(Recorder::read_csv("time,x\n", 0.0, 1.0).is_err());
    }
}
