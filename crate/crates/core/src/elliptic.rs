//! Solvers for `(sigma - c L) phi = f` with Dirichlet or conormal (Neumann)
//! wall data. Flat grids are solved directly per Fourier mode; rough grids
//! use preconditioned conjugate gradients on the symmetric form, with the
//! flat per-mode solve (mean `a22`) as preconditioner.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::MappedGrid;

/// Wall condition of an elliptic problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bc {
    Dirichlet,
    Neumann,
}

/// Convergence information of one solve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveInfo {
    pub iterations: usize,
    pub rel_residual: f64,
    /// `int f dy - sum of wall fluxes` before the compatibility correction
    /// (Neumann Poisson problems only).
    pub compat_defect: f64,
    /// Same quantity after the correction.
    pub compat_defect_after: f64,
}

pub const DEFAULT_TOL: f64 = 1e-10;

/// Default PCG iteration cap `10 n2 sqrt(n1)`.
pub fn default_max_iter(grid: &MappedGrid) -> usize {
    (10.0 * grid.n2 as f64 * (grid.n1 as f64).sqrt()).ceil() as usize
}

/// Shifted operator `sigma - c L` on a grid.
#[derive(Clone, Copy, Debug)]
pub struct Helmholtz<'a> {
    pub grid: &'a MappedGrid,
    pub sigma: f64,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'a> Helmholtz<'a> {
    pub fn new(grid: &'a MappedGrid, sigma: f64, c: f64) -> Self {
        Self { grid, sigma, c, tol: DEFAULT_TOL, max_iter: default_max_iter(grid) }
    }

    fn singular(&self, bc: Bc) -> bool {
        bc == Bc::Neumann && self.sigma == 0.0
    }

    /// Row weight of the symmetric form (units of `dx2`).
    fn weight(&self, bc: Bc, j: usize) -> f64 {
        match bc {
            Bc::Neumann if j == 0 || j == self.grid.top() => 0.5,
            _ => 1.0,
        }
    }

    /// `W (sigma - c L_nat) x` on active rows, zero elsewhere.
    fn apply_sym(&self, bc: Bc, x: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let l = g.apply_l_natural(x);
        let mut out = vec![0.0; x.len()];
        for j in 0..g.n2 {
            if bc == Bc::Dirichlet && (j == 0 || j == g.top()) {
                continue;
            }
            let w = self.weight(bc, j);
            for i in 0..g.n1 {
                let k = g.idx(i, j);
                out[k] = w * (self.sigma * x[k] - self.c * l[k]);
            }
        }
        out
    }

    /// Per-mode tridiagonal solve of `(sigma - c L_flat) x = f` with metric
    /// `a22 = abar`, no mixed term. For Dirichlet the wall rows of `f` are
    /// ignored and the wall rows of `x` are zero.
    pub fn flat_solve(&self, bc: Bc, f: &[f64], abar: f64) -> Vec<f64> {
        let g = self.grid;
        let (n1, n2) = (g.n1, g.n2);
        let m = n2 - 1;
        let sp = &g.spectral;
        let mut spec = sp.forward_rows(f);
        let q = self.c * abar / (g.dx2 * g.dx2);
        let (lo, hi) = match bc {
            Bc::Dirichlet => (1, m - 1),
            Bc::Neumann => (0, m),
        };
        let len = hi - lo + 1;
        let mut rhs = vec![Complex64::new(0.0, 0.0); len];
        let mut sub = vec![0.0; len];
        let mut diag = vec![0.0; len];
        let mut sup = vec![0.0; len];
        let mut cp = vec![0.0; len];
        let mut dp = vec![Complex64::new(0.0, 0.0); len];
        for mode in 0..n1 {
            let d = self.sigma + self.c * sp.k2(mode) + 2.0 * q;
            for r in 0..len {
                rhs[r] = spec[(lo + r) * n1 + mode];
                diag[r] = d;
                sub[r] = -q;
                sup[r] = -q;
            }
            if bc == Bc::Neumann {
                sup[0] = -2.0 * q;
                sub[len - 1] = -2.0 * q;
            }
            let pinned = mode == 0 && self.singular(bc);
            if pinned {
                // project onto the compatible range, then pin x_0 = 0
                let wsum: Complex64 = (0..len).map(|r| rhs[r] * self.weight(bc, lo + r)).sum();
                let wtot: f64 = (0..len).map(|r| self.weight(bc, lo + r)).sum();
                let mean = wsum / wtot;
                for v in rhs.iter_mut() {
                    *v -= mean;
                }
                diag[0] = 1.0;
                sup[0] = 0.0;
                rhs[0] = Complex64::new(0.0, 0.0);
            }
            // Thomas algorithm
            cp[0] = sup[0] / diag[0];
            dp[0] = rhs[0] / diag[0];
            for r in 1..len {
                let den = diag[r] - sub[r] * cp[r - 1];
                cp[r] = sup[r] / den;
                dp[r] = (rhs[r] - dp[r - 1] * sub[r]) / den;
            }
            for r in (0..len - 1).rev() {
                let next = dp[r + 1];
                dp[r] -= next * cp[r];
            }
            if pinned {
                let wsum: Complex64 = (0..len).map(|r| dp[r] * self.weight(bc, lo + r)).sum();
                let wtot: f64 = (0..len).map(|r| self.weight(bc, lo + r)).sum();
                let mean = wsum / wtot;
                for v in dp.iter_mut() {
                    *v -= mean;
                }
            }
            for j in 0..n2 {
                spec[j * n1 + mode] = if j >= lo && j <= hi { dp[j - lo] } else { Complex64::new(0.0, 0.0) };
            }
        }
        sp.inverse_rows(spec)
    }

    /// Solves `(sigma - c L_nat) x = f` on the active rows (homogeneous
    /// Dirichlet walls, or natural Neumann rows). `x0` warm-starts PCG.
    pub fn solve_homogeneous(&self, bc: Bc, f: &[f64], x0: Option<&[f64]>) -> Result<(Vec<f64>, SolveInfo)> {
        let g = self.grid;
        if g.flat {
            let x = self.flat_solve(bc, f, 1.0);
            return Ok((x, SolveInfo::default()));
        }
        let mut b = vec![0.0; f.len()];
        for j in 0..g.n2 {
            if bc == Bc::Dirichlet && (j == 0 || j == g.top()) {
                continue;
            }
            let w = self.weight(bc, j);
            for i in 0..g.n1 {
                b[g.idx(i, j)] = w * f[g.idx(i, j)];
            }
        }
        if self.singular(bc) {
            let tot: f64 = b.iter().sum();
            let wtot: f64 = (0..g.n2).map(|j| self.weight(bc, j)).sum::<f64>() * g.n1 as f64;
            let mean = tot / wtot;
            for j in 0..g.n2 {
                let w = self.weight(bc, j);
                for i in 0..g.n1 {
                    b[g.idx(i, j)] -= w * mean;
                }
            }
        }
        let precond = |r: &[f64]| -> Vec<f64> {
            let mut s = r.to_vec();
            for j in 0..g.n2 {
                let w = self.weight(bc, j);
                for i in 0..g.n1 {
                    s[g.idx(i, j)] /= w;
                }
            }
            self.flat_solve(bc, &s, g.a22_mean)
        };
        let mut x = match x0 {
            Some(x0) => {
                let mut x = x0.to_vec();
                if bc == Bc::Dirichlet {
                    zero_walls(g, &mut x);
                }
                x
            }
            None => vec![0.0; f.len()],
        };
        let info = pcg(|v| self.apply_sym(bc, v), precond, &b, &mut x, self.tol, self.max_iter)?;
        if self.singular(bc) {
            remove_weighted_mean(g, &mut x);
        }
        Ok((x, info))
    }
}

fn zero_walls(g: &MappedGrid, x: &mut [f64]) {
    let n1 = g.n1;
    let t = g.top() * n1;
    for i in 0..n1 {
        x[i] = 0.0;
        x[t + i] = 0.0;
    }
}

/// Subtracts the domain mean (trapezoid in `x2`).
pub fn remove_weighted_mean(g: &MappedGrid, x: &mut [f64]) {
    let mean = g.integrate(x) / g.area();
    for v in x.iter_mut() {
        *v -= mean;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients; stops at `||r|| <= tol ||b||`.
pub fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveInfo> {
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveInfo::default());
    }
    let ax = apply(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut rn = dot(&r, &r).sqrt();
    if rn <= tol * bnorm {
        return Ok(SolveInfo { rel_residual: rn / bnorm, ..Default::default() });
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        for k in 0..x.len() {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rn = dot(&r, &r).sqrt();
        if !rn.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: f64::NAN });
        }
        if rn <= tol * bnorm {
            return Ok(SolveInfo { iterations: it, rel_residual: rn / bnorm, ..Default::default() });
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..p.len() {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: rn / bnorm })
}

/// Solves `(sigma - c L) phi = f` at interior nodes with wall values
/// `bottom`, `top`.
pub fn solve_dirichlet(op: &Helmholtz, f: &[f64], bottom: &[f64], top: &[f64], x0: Option<&[f64]>) -> Result<(Vec<f64>, SolveInfo)> {
    let g = op.grid;
    let n1 = g.n1;
    let t = g.top() * n1;
    let mut lift = vec![0.0; g.len()];
    lift[..n1].copy_from_slice(bottom);
    lift[t..t + n1].copy_from_slice(top);
    let l = g.apply_l_natural(&lift);
    let mut r = f.to_vec();
    for k in n1..t {
        r[k] += op.c * l[k];
    }
    let x0h = x0.map(|x| x.to_vec());
    let (mut x, info) = op.solve_homogeneous(Bc::Dirichlet, &r, x0h.as_deref())?;
    x[..n1].copy_from_slice(bottom);
    x[t..t + n1].copy_from_slice(top);
    Ok((x, info))
}

/// Solves `(sigma - c L) phi = f` with outward conormal fluxes
/// `g = (A grad phi) . nu` per unit `dx1` on each wall. For `sigma = 0`
/// the compatibility defect is removed and the mean-zero solution returned.
pub fn solve_neumann(op: &Helmholtz, f: &[f64], g_bottom: &[f64], g_top: &[f64], x0: Option<&[f64]>) -> Result<(Vec<f64>, SolveInfo)> {
    let g = op.grid;
    let n1 = g.n1;
    let t = g.top() * n1;
    let mut r = f.to_vec();
    let s = 2.0 * op.c / g.dx2;
    for i in 0..n1 {
        r[i] += s * g_bottom[i];
        r[t + i] += s * g_top[i];
    }
    let mut defect = 0.0;
    if op.sigma == 0.0 {
        // int L phi = sum of fluxes; f = -c L phi
        let int_f = g.integrate(f);
        let flux: f64 = (g_bottom.iter().sum::<f64>() + g_top.iter().sum::<f64>()) * g.dx1;
        defect = int_f / op.c + flux;
    }
    let (x, mut info) = op.solve_homogeneous(Bc::Neumann, &r, x0)?;
    info.compat_defect = defect;
    if op.sigma == 0.0 {
        // residual of the corrected system is orthogonal to constants
        let mean = g.integrate(&r) / g.area();
        let corrected: Vec<f64> = r.iter().map(|v| v - mean).collect();
        info.compat_defect_after = g.integrate(&corrected);
    }
    Ok((x, info))
}

/// `L phi = rhs` at interior nodes with wall traces.
pub fn solve_poisson_dirichlet(grid: &MappedGrid, rhs: &[f64], bottom: &[f64], top: &[f64]) -> Result<(Vec<f64>, SolveInfo)> {
    let op = Helmholtz::new(grid, 0.0, 1.0);
    let f: Vec<f64> = rhs.iter().map(|v| -v).collect();
    solve_dirichlet(&op, &f, bottom, top, None)
}

/// `L p = rhs` with outward conormal fluxes; mean-zero solution.
pub fn solve_poisson_neumann(grid: &MappedGrid, rhs: &[f64], flux_bottom: &[f64], flux_top: &[f64]) -> Result<(Vec<f64>, SolveInfo)> {
    let op = Helmholtz::new(grid, 0.0, 1.0);
    let f: Vec<f64> = rhs.iter().map(|v| -v).collect();
    solve_neumann(&op, &f, flux_bottom, flux_top, None)
}

/// Outward conormal flux `(A grad phi) . nu` per unit `dx1` from the
/// physical normal derivative: `sqrt(1 + h'^2) n . grad p`.
pub fn conormal_from_normal(grid: &MappedGrid, normal_derivative: &[f64]) -> Vec<f64> {
    normal_derivative.iter().zip(&grid.ds).map(|(d, s)| d * s).collect()
}
