//! Time integration of the Boussinesq system in vorticity/stream-function
//! form with Navier-slip walls (`omega = -2 (alpha + kappa) u_tau`) and
//! fixed wall temperatures (1 at the bottom, 0 at the top).
//!
//! Diffusion is Crank-Nicolson, advection and buoyancy second-order
//! Adams-Bashforth (forward Euler on the first step). The wall vorticity is
//! lagged by one step, optionally refined by fixed-point sweeps. When `dt`
//! exceeds [`Model::coupling_limit`] the sweeps are preconditioned by the
//! exact per-mode wall coupling of the flat channel, which solves the flat
//! case in one correction. The top
//! stream-function trace follows from the wall circulations, which evolve
//! by `d/dt int u_tau dS = Pr int d_n omega dS` on each wall.

use serde::{Deserialize, Serialize};

use crate::elliptic::{solve_dirichlet, solve_neumann, Helmholtz, SolveInfo};
use crate::error::{Error, Result};
use crate::geometry::{boundary_frames_split, BoundaryData, FourierSeries, HeightProfile, Side};
use crate::grid::{BcKind, MappedGrid, ScalarField};
use crate::spectral::Spectral;
use rustfft::num_complex::Complex64;

/// Rayleigh and Prandtl numbers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub ra: f64,
    pub pr: f64,
}

impl PhysicalParams {
    /// `ra = 0` is accepted for decay studies.
    pub fn new(ra: f64, pr: f64) -> Result<Self> {
        if !(ra >= 0.0 && ra.is_finite()) {
            return Err(Error::Invalid(format!("ra must be >= 0, got {ra}")));
        }
        if !(pr > 0.0 && pr.is_finite()) {
            return Err(Error::Invalid(format!("pr must be > 0, got {pr}")));
        }
        Ok(Self { ra, pr })
    }
}

/// Sweep budget of the preconditioned coupling when `dt` exceeds the
/// coupling limit.
pub const STIFF_MIN_SWEEPS: usize = 50;

/// Integrator options.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Extra fixed-point sweeps on the wall vorticity per step (0 = lagged).
    pub fixed_point_sweeps: usize,
    pub fixed_point_tol: f64,
    /// Advective CFL limit enforced by [`Simulation::step`].
    pub cfl_max: f64,
    /// Two-thirds truncation of the explicit terms in x1.
    pub dealias: bool,
    /// Initial steps taken with backward-Euler diffusion to damp stiff
    /// transients that Crank-Nicolson would leave ringing.
    pub startup_implicit_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { fixed_point_sweeps: 0, fixed_point_tol: 1e-8, cfl_max: 0.4, dealias: true, startup_implicit_steps: 2 }
    }
}

/// Stream-function mode `amp_cos cos(2 pi k x1 / gamma) + amp_sin sin(..)`
/// times `sin(m pi x2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamMode {
    pub k: u32,
    pub m: u32,
    #[serde(default)]
    pub amp_cos: f64,
    #[serde(default)]
    pub amp_sin: f64,
}

/// Initial data.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialCondition {
    /// Amplitude of the seeded temperature perturbation.
    pub temp_amplitude: f64,
    pub seed: u64,
    /// Start from `T = 0` instead of the conduction profile.
    pub zero_temperature: bool,
    pub stream_modes: Vec<StreamMode>,
    /// Uniform horizontal velocity added to the initial flow.
    pub mean_flow: f64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self { temp_amplitude: 1e-2, seed: 0, zero_temperature: false, stream_modes: Vec::new(), mean_flow: 0.0 }
    }
}

/// Static data shared by every step: grid, wall data, and the harmonic
/// lift `G` (0 on the bottom, 1 on the top).
#[derive(Clone, Debug)]
pub struct Model {
    pub grid: MappedGrid,
    pub bottom: BoundaryData,
    pub top: BoundaryData,
    pub params: PhysicalParams,
    pub options: SolverOptions,
    pub alpha_bottom: FourierSeries,
    pub alpha_top: FourierSeries,
    apk_bottom: Vec<f64>,
    apk_top: Vec<f64>,
    lift: Vec<f64>,
    lift_circ: f64,
}

/// One time level.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub omega: ScalarField,
    pub psi: ScalarField,
    pub temp: ScalarField,
    pub time: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// Top trace `psi_+` (bottom trace is 0).
    pub psi_top: f64,
}

/// Multistep history needed to continue the integration bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub step: u64,
    pub dt_prev: f64,
    pub n_omega_prev: Option<Vec<f64>>,
    pub n_temp_prev: Option<Vec<f64>>,
    /// Circulation difference `int_top u_tau dS - int_bottom u_tau dS`.
    pub circulation: f64,
    /// Wall flux difference of `d_n omega` at the current level.
    pub flux_prev: f64,
}

/// Integrator owning the state.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub model: Model,
    pub state: FlowState,
    pub history: History,
    kernel: Option<WallKernel>,
}

/// Inverse of `I - M_k` per x1 mode, where `M_k` maps the wall vorticity
/// `(bottom, top)` to the updated wall vorticity in the homogeneous flat
/// problem at step size `dt`.
#[derive(Clone, Debug)]
struct WallKernel {
    /// `(dt, theta)` bit patterns the kernel was built for.
    key: (u64, u64),
    inv: Vec<[[Complex64; 2]; 2]>,
}

impl WallKernel {
    /// Applies `(I - M)^{-1}` to a wall residual.
    fn apply(&self, sp: &Spectral, rb: &[f64], rt: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (fb, ft) = (sp.forward_rows(rb), sp.forward_rows(rt));
        let mut ob = Vec::with_capacity(fb.len());
        let mut ot = Vec::with_capacity(ft.len());
        for (m, p) in self.inv.iter().enumerate() {
            ob.push(p[0][0] * fb[m] + p[0][1] * ft[m]);
            ot.push(p[1][0] * fb[m] + p[1][1] * ft[m]);
        }
        (sp.inverse_rows(ob), sp.inverse_rows(ot))
    }
}

/// Result of one evaluation of the wall coupling map.
struct Coupled {
    omega: Vec<f64>,
    psi: Vec<f64>,
    psi_top: f64,
    circ: f64,
    flux: f64,
    wall_b: Vec<f64>,
    wall_t: Vec<f64>,
    iterations: usize,
}

/// Per-step report.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub sweeps: usize,
    pub wall_change: f64,
    pub max_pcg_iterations: usize,
}

/// `-2 (alpha + kappa) u_tau` pointwise.
pub fn boundary_vorticity(u_tau: &[f64], boundary: &BoundaryData) -> Vec<f64> {
    u_tau.iter().zip(boundary.alpha.iter().zip(&boundary.kappa)).map(|(u, (a, k))| -2.0 * (a + k) * u).collect()
}

impl Model {
    pub fn new(
        profile: &HeightProfile,
        n1: usize,
        n2: usize,
        alpha_bottom: &FourierSeries,
        alpha_top: &FourierSeries,
        params: PhysicalParams,
        options: SolverOptions,
    ) -> Result<Self> {
        let grid = MappedGrid::new(profile, n1, n2)?;
        let (bottom, top) = boundary_frames_split(profile, n1, alpha_bottom, alpha_top)?;
        let apk_bottom = bottom.alpha_plus_kappa();
        let apk_top = top.alpha_plus_kappa();
        let op = Helmholtz::new(&grid, 0.0, 1.0);
        let (lift, _) = solve_dirichlet(&op, &vec![0.0; grid.len()], &vec![0.0; n1], &vec![1.0; n1], None)?;
        let mut m = Self {
            grid,
            bottom,
            top,
            params,
            options,
            alpha_bottom: alpha_bottom.clone(),
            alpha_top: alpha_top.clone(),
            apk_bottom,
            apk_top,
            lift,
            lift_circ: 0.0,
        };
        m.lift_circ = m.circulation_of(&m.lift);
        Ok(m)
    }

    pub fn wall(&self, side: Side) -> &BoundaryData {
        match side {
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
        }
    }

    /// `alpha + kappa` on a wall.
    pub fn apk(&self, side: Side) -> &[f64] {
        match side {
            Side::Bottom => &self.apk_bottom,
            Side::Top => &self.apk_top,
        }
    }

    /// Tangential velocity `u . tau = grad psi . n` on a wall.
    pub fn u_tau(&self, psi: &[f64], side: Side) -> Vec<f64> {
        let g = &self.grid;
        let d2 = g.d2_wall(psi, side);
        // psi is constant along walls, so only the d2 part survives
        (0..g.n1).map(|i| side.sign() * g.ds[i] * d2[i]).collect()
    }

    /// `int_top u_tau dS - int_bottom u_tau dS`.
    pub fn circulation_of(&self, psi: &[f64]) -> f64 {
        let g = &self.grid;
        let t = g.line_integral(&self.u_tau(psi, Side::Top));
        let b = g.line_integral(&self.u_tau(psi, Side::Bottom));
        t - b
    }

    /// `int_top d_n omega dS - int_bottom d_n omega dS`.
    pub fn wall_flux_difference(&self, omega: &[f64]) -> f64 {
        let g = &self.grid;
        let mut total = 0.0;
        for side in [Side::Bottom, Side::Top] {
            let j = if side == Side::Bottom { 0 } else { g.top() };
            let d1 = g.spectral.d1(g.row(omega, j));
            let d2 = g.d2_wall(omega, side);
            // s n.grad w = sign (-h' d1 w + a22 d2 w)
            let s: f64 = (0..g.n1).map(|i| -g.hp[i] * d1[i] + g.a22[i] * d2[i]).sum::<f64>() * g.dx1;
            total += s; // sign(top) = +1, and the bottom enters with a minus twice
        }
        total
    }

    /// Velocity `u = (-d psi/dy2, d psi/dy1)` at every node.
    pub fn velocity(&self, psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (g1, g2) = self.grid.grad_physical(psi);
        (g2.iter().map(|v| -v).collect(), g1)
    }

    /// Arakawa-averaged Jacobian `d1 psi d2 f - d2 psi d1 f` on interior rows.
    fn jacobian(&self, psi: &[f64], d1psi: &[f64], d2psi: &[f64], f: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let n1 = g.n1;
        let m = g.top();
        let d1f = g.d1(f);
        let d2f = g.d2(f);
        let a: Vec<f64> = (0..f.len()).map(|k| psi[k] * d2f[k] - f[k] * d2psi[k]).collect();
        let d1a = g.d1(&a);
        let b: Vec<f64> = (0..f.len()).map(|k| f[k] * d1psi[k] - psi[k] * d1f[k]).collect();
        let mut out = vec![0.0; f.len()];
        let inv = 1.0 / (2.0 * g.dx2);
        for j in 1..m {
            for i in 0..n1 {
                let k = j * n1 + i;
                let j1 = d1psi[k] * d2f[k] - d2psi[k] * d1f[k];
                let d2b = (b[k + n1] - b[k - n1]) * inv;
                out[k] = (j1 + d1a[k] + d2b) / 3.0;
            }
        }
        out
    }

    /// Explicit terms `(N_omega, N_T)` on interior rows.
    fn explicit_terms(&self, omega: &[f64], psi: &[f64], temp: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let d1psi = g.d1(psi);
        let d2psi = g.d2(psi);
        let jw = self.jacobian(psi, &d1psi, &d2psi, omega);
        let jt = self.jacobian(psi, &d1psi, &d2psi, temp);
        let (dt1, _) = g.grad_physical(temp);
        let c = self.params.pr * self.params.ra;
        let n1 = g.n1;
        let mut nw = vec![0.0; omega.len()];
        let mut nt = vec![0.0; omega.len()];
        for k in n1..g.top() * n1 {
            nw[k] = -jw[k] + c * dt1[k];
            nt[k] = -jt[k];
        }
        if self.options.dealias {
            nw = g.spectral.truncate_two_thirds(&nw);
            nt = g.spectral.truncate_two_thirds(&nt);
        }
        (nw, nt)
    }

    /// Largest stable advective step `cfl * min(dx1/(pi |xdot1|), dx2/|xdot2|)`
    /// in the contravariant velocities of the flattened grid. The spectral
    /// direction resolves wavenumbers up to `pi/dx1`.
    pub fn advective_limit(&self, psi: &[f64], cfl: f64) -> f64 {
        let g = &self.grid;
        let v1 = g.d2(psi).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let v2 = g.d1(psi).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let l1 = if v1 > 0.0 { g.dx1 / (std::f64::consts::PI * v1) } else { f64::INFINITY };
        let l2 = if v2 > 0.0 { g.dx2 / v2 } else { f64::INFINITY };
        cfl * l1.min(l2)
    }

    /// Interior vorticity for the given wall values, then stream function,
    /// then the wall vorticity implied by its slip velocity.
    #[allow(clippy::too_many_arguments)]
    fn couple(
        &self,
        op_w: &Helmholtz,
        rhs_w: &[f64],
        circ0: f64,
        flux_prev: f64,
        dt: f64,
        theta: f64,
        wall: (&[f64], &[f64]),
        x0: Option<(&[f64], &[f64])>,
    ) -> Result<Coupled> {
        let (om, info) = solve_dirichlet(op_w, rhs_w, wall.0, wall.1, x0.map(|x| x.0))?;
        let flux = self.wall_flux_difference(&om);
        let circ = circ0 + dt * self.params.pr * ((1.0 - theta) * flux_prev + theta * flux);
        let (ps, top, info2) = self.stream_function(&om, circ, x0.map(|x| x.1))?;
        let (wall_b, wall_t) = self.wall_vorticity(&ps);
        Ok(Coupled { omega: om, psi: ps, psi_top: top, circ, flux, wall_b, wall_t, iterations: info.iterations.max(info2.iterations) })
    }

    /// Flat channel with the wall-averaged `alpha + kappa` of this model.
    fn flat_proxy(&self) -> Result<Model> {
        let mean = |v: &[f64]| (v.iter().sum::<f64>() / v.len() as f64).max(0.0);
        let g = &self.grid;
        Model::new(
            &HeightProfile::flat(g.gamma),
            g.n1,
            g.n2,
            &FourierSeries::constant(mean(&self.apk_bottom)),
            &FourierSeries::constant(mean(&self.apk_top)),
            self.params,
            self.options,
        )
    }

    /// Builds the flat-channel coupling kernel from the responses to a unit
    /// spike on each wall. Requires a flat model.
    fn wall_kernel(&self, dt: f64, theta: f64) -> Result<WallKernel> {
        let g = &self.grid;
        let n1 = g.n1;
        let op_w = Helmholtz::new(g, 1.0, theta * self.params.pr * dt);
        let zero_rhs = vec![0.0; g.len()];
        let zero = vec![0.0; n1];
        let mut spike = vec![0.0; n1];
        spike[0] = 1.0;
        let rb = self.couple(&op_w, &zero_rhs, 0.0, 0.0, dt, theta, (&spike, &zero), None)?;
        let rt = self.couple(&op_w, &zero_rhs, 0.0, 0.0, dt, theta, (&zero, &spike), None)?;
        let sp = &g.spectral;
        let (bb, tb) = (sp.forward_rows(&rb.wall_b), sp.forward_rows(&rb.wall_t));
        let (bt, tt) = (sp.forward_rows(&rt.wall_b), sp.forward_rows(&rt.wall_t));
        let one = Complex64::new(1.0, 0.0);
        let inv = (0..n1)
            .map(|m| {
                // I - M with M = [[bb, bt], [tb, tt]]
                let (a, b, c, d) = (one - bb[m], -bt[m], -tb[m], one - tt[m]);
                let det = a * d - b * c;
                [[d / det, -b / det], [-c / det, a / det]]
            })
            .collect();
        Ok(WallKernel { key: (dt.to_bits(), theta.to_bits()), inv })
    }

    /// Heuristic stability bound of the lagged wall coupling.
    pub fn coupling_limit(&self) -> f64 {
        let amax = self.apk_bottom.iter().chain(&self.apk_top).fold(0.0f64, |a, v| a.max(v.abs()));
        if amax == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (16.0 * amax * amax * self.params.pr)
        }
    }

    /// Solves `L psi = omega` (interior) with `psi = 0` at the bottom and the
    /// top trace chosen so that the circulation difference equals `circ`.
    fn stream_function(&self, omega: &[f64], circ: f64, x0: Option<&[f64]>) -> Result<(Vec<f64>, f64, SolveInfo)> {
        let g = &self.grid;
        let op = Helmholtz::new(g, 0.0, 1.0);
        let f: Vec<f64> = omega.iter().map(|v| -v).collect();
        let zero = vec![0.0; g.n1];
        let (mut psi, info) = solve_dirichlet(&op, &f, &zero, &zero, x0)?;
        let top = (circ - self.circulation_of(&psi)) / self.lift_circ;
        for (p, l) in psi.iter_mut().zip(&self.lift) {
            *p += top * l;
        }
        Ok((psi, top, info))
    }

    /// Builds the initial state.
    pub fn initial_state(&self, ic: &InitialCondition) -> Result<(FlowState, History)> {
        use rand::{Rng, SeedableRng};
        let g = &self.grid;
        let gamma = g.gamma;
        let tw = std::f64::consts::TAU / gamma;
        let pi = std::f64::consts::PI;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ic.seed);
        let coeffs: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let temp = g.sample(|x1, x2| {
            if ic.zero_temperature {
                return 0.0;
            }
            let mut p = 0.0;
            for (m, (a, b)) in coeffs.iter().enumerate() {
                let w = tw * (m + 1) as f64;
                p += a * (w * x1).cos() + b * (w * x1).sin();
            }
            1.0 - x2 + ic.temp_amplitude * (pi * x2).sin() * p
        });
        let mut psi = g.sample(|x1, x2| {
            let mut v = -ic.mean_flow * x2;
            for sm in &ic.stream_modes {
                let w = tw * sm.k as f64;
                v += (sm.m as f64 * pi * x2).sin() * (sm.amp_cos * (w * x1).cos() + sm.amp_sin * (w * x1).sin());
            }
            v
        });
        let mut omega = g.apply_l_natural(&psi);
        let circulation = self.circulation_of(&psi);
        // re-solve so that psi is the discrete stream function of omega
        let (p2, psi_top, _) = self.stream_function(&omega, circulation, Some(&psi))?;
        psi = p2;
        self.set_wall_vorticity(&mut omega, &psi);
        let (u1, u2) = self.velocity(&psi);
        let n = (g.n1, g.n2);
        let state = FlowState {
            omega: ScalarField::from_values(n.0, n.1, omega, BcKind::DirichletGiven),
            psi: ScalarField::from_values(n.0, n.1, psi, BcKind::DirichletGiven),
            temp: ScalarField::from_values(n.0, n.1, temp, BcKind::DirichletGiven),
            time: 0.0,
            u1,
            u2,
            psi_top,
        };
        let flux_prev = self.wall_flux_difference(&state.omega.values);
        let history = History { step: 0, dt_prev: 0.0, n_omega_prev: None, n_temp_prev: None, circulation, flux_prev };
        Ok((state, history))
    }

    fn wall_vorticity(&self, psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (boundary_vorticity(&self.u_tau(psi, Side::Bottom), &self.bottom), boundary_vorticity(&self.u_tau(psi, Side::Top), &self.top))
    }

    fn set_wall_vorticity(&self, omega: &mut [f64], psi: &[f64]) {
        let n1 = self.grid.n1;
        let t = self.grid.top() * n1;
        let (b, tp) = self.wall_vorticity(psi);
        omega[..n1].copy_from_slice(&b);
        omega[t..t + n1].copy_from_slice(&tp);
    }

    /// Pressure from the Neumann problem
    /// `Lap p = -(1/Pr) (grad u)^T : grad u + Ra d2 T`,
    /// `n . grad p = -(1/Pr) kappa u_tau^2 + 2 tau . grad((alpha + kappa) u_tau) + Ra T n2`.
    pub fn recover_pressure(&self, state: &FlowState) -> Result<(Vec<f64>, SolveInfo)> {
        let g = &self.grid;
        let pr = self.params.pr;
        let ra = self.params.ra;
        let (u11, u12) = g.grad_physical(&state.u1);
        let (u21, u22) = g.grad_physical(&state.u2);
        let (_, t2) = g.grad_physical(&state.temp.values);
        let rhs: Vec<f64> = (0..g.len()).map(|k| -(u11[k] * u11[k] + 2.0 * u21[k] * u12[k] + u22[k] * u22[k]) / pr + ra * t2[k]).collect();
        let psi = &state.psi.values;
        let mut flux = Vec::new();
        for side in [Side::Bottom, Side::Top] {
            let ut = self.u_tau(psi, side);
            let w = self.wall(side);
            let apk_ut: Vec<f64> = ut.iter().zip(self.apk(side)).map(|(u, a)| u * a).collect();
            let d = g.spectral.d1(&apk_ut);
            let o = -side.sign();
            let j = if side == Side::Bottom { 0 } else { g.top() };
            let tw = g.row(&state.temp.values, j);
            // conormal flux = s * (n . grad p); s n2 = sign
            flux.push(
                (0..g.n1)
                    .map(|i| -g.ds[i] * w.kappa[i] * ut[i] * ut[i] / pr + 2.0 * o * d[i] + side.sign() * ra * tw[i])
                    .collect::<Vec<f64>>(),
            );
        }
        let op = Helmholtz::new(g, 0.0, 1.0);
        let f: Vec<f64> = rhs.iter().map(|v| -v).collect();
        solve_neumann(&op, &f, &flux[0], &flux[1], None)
    }
}

impl Simulation {
    pub fn new(model: Model, ic: &InitialCondition) -> Result<Self> {
        let (state, history) = model.initial_state(ic)?;
        Ok(Self { model, state, history, kernel: None })
    }

    pub fn from_parts(model: Model, state: FlowState, history: History) -> Self {
        Self { model, state, history, kernel: None }
    }

    fn ensure_kernel(&mut self, dt: f64, theta: f64) -> Result<()> {
        if self.kernel.as_ref().map(|k| k.key) != Some((dt.to_bits(), theta.to_bits())) {
            let k =
                if self.model.grid.flat { self.model.wall_kernel(dt, theta)? } else { self.model.flat_proxy()?.wall_kernel(dt, theta)? };
            self.kernel = Some(k);
        }
        Ok(())
    }

    /// Step size from the advective limit, capped by `dt_max`.
    pub fn auto_dt(&self, cfl: f64, dt_max: f64) -> f64 {
        self.model.advective_limit(&self.state.psi.values, cfl).min(dt_max)
    }

    /// Advances one step of size `dt`.
    pub fn step(&mut self, dt: f64) -> Result<StepInfo> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Invalid(format!("dt must be positive, got {dt}")));
        }
        let stiff = dt > self.model.coupling_limit();
        // diffusion weight: 1 = backward Euler, 1/2 = Crank-Nicolson
        let theta = if (self.history.step as usize) < self.model.options.startup_implicit_steps { 1.0 } else { 0.5 };
        if stiff {
            self.ensure_kernel(dt, theta)?;
        }
        let m = &self.model;
        let g = &m.grid;
        let (pr, n1) = (m.params.pr, g.n1);
        let s = &self.state;
        let limit = m.advective_limit(&s.psi.values, m.options.cfl_max);
        if dt > limit {
            return Err(Error::Cfl { dt, limit, suggested: 0.9 * limit });
        }
        let (omega, psi, temp) = (&s.omega.values, &s.psi.values, &s.temp.values);
        let (nw, nt) = m.explicit_terms(omega, psi, temp);
        let (nw_star, nt_star) = match (&self.history.n_omega_prev, &self.history.n_temp_prev) {
            (Some(pw), Some(pt)) => {
                let r = dt / self.history.dt_prev;
                let (c0, c1) = (1.0 + 0.5 * r, -0.5 * r);
                (
                    nw.iter().zip(pw).map(|(a, b)| c0 * a + c1 * b).collect::<Vec<f64>>(),
                    nt.iter().zip(pt).map(|(a, b)| c0 * a + c1 * b).collect::<Vec<f64>>(),
                )
            }
            _ => (nw.clone(), nt.clone()),
        };
        let mut max_it = 0;

        // temperature
        let lt = g.apply_l_natural(temp);
        let rhs_t: Vec<f64> = (0..temp.len()).map(|k| temp[k] + (1.0 - theta) * dt * lt[k] + dt * nt_star[k]).collect();
        let op_t = Helmholtz::new(g, 1.0, theta * dt);
        let (temp_new, info) = solve_dirichlet(&op_t, &rhs_t, &vec![1.0; n1], &vec![0.0; n1], Some(temp))?;
        max_it = max_it.max(info.iterations);

        // vorticity, stream function, wall coupling
        let lw = g.apply_l_natural(omega);
        let rhs_w: Vec<f64> = (0..omega.len()).map(|k| omega[k] + (1.0 - theta) * pr * dt * lw[k] + dt * nw_star[k]).collect();
        let op_w = Helmholtz::new(g, 1.0, theta * pr * dt);
        let t = g.top() * n1;
        let (circ0, flux_prev) = (self.history.circulation, self.history.flux_prev);
        let mut wall_b = omega[..n1].to_vec();
        let mut wall_t = omega[t..t + n1].to_vec();
        let max_sweeps = if stiff { m.options.fixed_point_sweeps.max(STIFF_MIN_SWEEPS) } else { m.options.fixed_point_sweeps };
        let mut sweeps = 0;
        let (c, change) = loop {
            let c = m.couple(&op_w, &rhs_w, circ0, flux_prev, dt, theta, (&wall_b, &wall_t), Some((omega, psi)))?;
            max_it = max_it.max(c.iterations);
            let scale = c.wall_b.iter().chain(&c.wall_t).fold(1.0f64, |a, v| a.max(v.abs()));
            let change =
                c.wall_b.iter().zip(&wall_b).chain(c.wall_t.iter().zip(&wall_t)).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / scale;
            let done = sweeps >= max_sweeps || change <= m.options.fixed_point_tol;
            if done {
                wall_b = c.wall_b.clone();
                wall_t = c.wall_t.clone();
                break (c, change);
            }
            if stiff {
                let rb: Vec<f64> = c.wall_b.iter().zip(&wall_b).map(|(a, b)| a - b).collect();
                let rt: Vec<f64> = c.wall_t.iter().zip(&wall_t).map(|(a, b)| a - b).collect();
                let kernel = self.kernel.as_ref().expect("kernel built for stiff steps");
                let (db, dtp) = kernel.apply(&g.spectral, &rb, &rt);
                wall_b.iter_mut().zip(&db).for_each(|(w, d)| *w += d);
                wall_t.iter_mut().zip(&dtp).for_each(|(w, d)| *w += d);
            } else {
                wall_b = c.wall_b;
                wall_t = c.wall_t;
            }
            sweeps += 1;
        };
        let Coupled { omega: mut omega_new, psi: psi_new, psi_top, circ, flux, .. } = c;
        omega_new[..n1].copy_from_slice(&wall_b);
        omega_new[t..t + n1].copy_from_slice(&wall_t);

        let time = s.time + dt;
        for (name, f) in [("vorticity", &omega_new), ("stream function", &psi_new), ("temperature", &temp_new)] {
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { stage: name.into(), time });
            }
        }
        let (u1, u2) = m.velocity(&psi_new);
        let (a, b) = (g.n1, g.n2);
        self.state = FlowState {
            omega: ScalarField::from_values(a, b, omega_new, BcKind::DirichletGiven),
            psi: ScalarField::from_values(a, b, psi_new, BcKind::DirichletGiven),
            temp: ScalarField::from_values(a, b, temp_new, BcKind::DirichletGiven),
            time,
            u1,
            u2,
            psi_top,
        };
        self.history = History {
            step: self.history.step + 1,
            dt_prev: dt,
            n_omega_prev: Some(nw),
            n_temp_prev: Some(nt),
            circulation: circ,
            flux_prev: flux,
        };
        Ok(StepInfo { sweeps, wall_change: change, max_pcg_iterations: max_it })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(profile: HeightProfile, alpha: f64, ra: f64, pr: f64, n1: usize, n2: usize) -> Model {
        let a = FourierSeries::constant(alpha);
        Model::new(&profile, n1, n2, &a, &a, PhysicalParams::new(ra, pr).unwrap(), SolverOptions::default()).unwrap()
    }

    #[test]
    fn boundary_vorticity_examples() {
        let m = model(HeightProfile::flat(1.0), 1.0, 0.0, 1.0, 8, 9);
        assert!(boundary_vorticity(&[0.0; 8], &m.bottom).iter().all(|v| *v == 0.0));
        assert!(boundary_vorticity(&[0.5; 8], &m.bottom).iter().all(|v| *v == -1.0));
        let free = model(HeightProfile::flat(1.0), 0.0, 0.0, 1.0, 8, 9);
        assert!(boundary_vorticity(&[0.7; 8], &free.top).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn params_validation() {
        assert!(PhysicalParams::new(-1.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn uniform_flow_circulation_and_trace() {
        let m = model(HeightProfile::flat(2.0), 1.0, 0.0, 1.0, 16, 17);
        let ic = InitialCondition { mean_flow: 0.5, zero_temperature: true, ..Default::default() };
        let (s, h) = m.initial_state(&ic).unwrap();
        // psi_+ = -(1/|Omega|) int u1
        let int_u1 = m.grid.integrate(&s.u1);
        assert!((s.psi_top + int_u1 / 2.0).abs() < 1e-10);
        assert!((h.circulation + 2.0 * 0.5 * 2.0).abs() < 1e-10);
    }

    #[test]
    fn conduction_pressure_is_hydrostatic() {
        let m = model(HeightProfile::flat(1.0), 1.0, 50.0, 1.0, 8, 17);
        let ic = InitialCondition { temp_amplitude: 0.0, ..Default::default() };
        let (s, _) = m.initial_state(&ic).unwrap();
        let (p, info) = m.recover_pressure(&s).unwrap();
        let mut exact = m.grid.sample(|_, y| 50.0 * (y - 0.5 * y * y));
        crate::elliptic::remove_weighted_mean(&m.grid, &mut exact);
        for (a, b) in p.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
        assert!(info.compat_defect.abs() < 1e-9);
    }

    #[test]
    fn zero_state_zero_pressure() {
        let m = model(HeightProfile::sine(1.0, 1, 0.1), 1.0, 10.0, 1.0, 16, 17);
        let ic = InitialCondition { zero_temperature: true, ..Default::default() };
        let (s, _) = m.initial_state(&ic).unwrap();
        let (p, _) = m.recover_pressure(&s).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cfl_violation_rejected() {
        let m = model(HeightProfile::flat(1.0), 1.0, 0.0, 1.0, 16, 17);
        let ic = InitialCondition {
            zero_temperature: true,
            stream_modes: vec![StreamMode { k: 1, m: 1, amp_cos: 1.0, amp_sin: 0.0 }],
            ..Default::default()
        };
        let mut sim = Simulation::new(m, &ic).unwrap();
        match sim.step(1.0) {
            Err(Error::Cfl { suggested, .. }) => assert!(sim.step(suggested).is_ok()),
            other => panic!("expected CFL rejection, got {other:?}"),
        }
    }
}
