//! Flattened grid `x = (y1, y2 - h(y1))` on `[0, gamma) x [0, 1]` and the
//! discrete operators with the induced metric.
//!
//! Fields are stored row-major in `x2`: node `(i, j)` lives at `j * n1 + i`,
//! `i` periodic in `x1`, `j = 0` the bottom wall and `j = n2 - 1` the top.

use crate::error::{Error, Result};
use crate::geometry::{HeightProfile, Side};
use crate::spectral::Spectral;

/// Boundary-condition tag carried with a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcKind {
    DirichletGiven,
    NeumannGiven,
    PeriodicOnly,
}

/// Nodal values on a [`MappedGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub n1: usize,
    pub n2: usize,
    pub values: Vec<f64>,
    pub bc_kind: BcKind,
}

impl ScalarField {
    pub fn zeros(n1: usize, n2: usize, bc_kind: BcKind) -> Self {
        Self { n1, n2, values: vec![0.0; n1 * n2], bc_kind }
    }

    pub fn from_values(n1: usize, n2: usize, values: Vec<f64>, bc_kind: BcKind) -> Self {
        assert_eq!(values.len(), n1 * n2, "field length mismatch");
        Self { n1, n2, values, bc_kind }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n1 + i % self.n1]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n1..(j + 1) * self.n1]
    }
}

/// Which trace to take at a wall.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceKind {
    Value,
    NormalDerivative,
    TangentialDerivative,
}

/// Grid plus metric samples per `x1` column.
#[derive(Clone, Debug)]
pub struct MappedGrid {
    pub n1: usize,
    pub n2: usize,
    pub gamma: f64,
    pub dx1: f64,
    pub dx2: f64,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub h: Vec<f64>,
    pub hp: Vec<f64>,
    pub hpp: Vec<f64>,
    pub hppp: Vec<f64>,
    /// `a12 = a21 = -h'`.
    pub a12: Vec<f64>,
    /// `a22 = 1 + h'^2`.
    pub a22: Vec<f64>,
    /// Line-element factor `sqrt(1 + h'^2)`.
    pub ds: Vec<f64>,
    pub a22_mean: f64,
    pub flat: bool,
    pub spectral: Spectral,
    pub profile: HeightProfile,
}

/// True when `n` factors over {2, 3, 5, 7}.
pub fn is_fft_friendly(n: usize) -> bool {
    if n == 0 {
        return false;
    }
    let mut m = n;
    for p in [2, 3, 5, 7] {
        while m.is_multiple_of(p) {
            m /= p;
        }
    }
    m == 1
}

impl MappedGrid {
    pub fn new(profile: &HeightProfile, n1: usize, n2: usize) -> Result<Self> {
        if n1 < 4 || !is_fft_friendly(n1) {
            return Err(Error::Invalid(format!("n1 = {n1} must be >= 4 and a product of 2, 3, 5, 7")));
        }
        if n2 < 8 {
            return Err(Error::Invalid(format!("n2 = {n2} violates the rule n2 >= 8")));
        }
        let gamma = profile.gamma;
        let dx1 = gamma / n1 as f64;
        let dx2 = 1.0 / (n2 - 1) as f64;
        let x1: Vec<f64> = (0..n1).map(|i| i as f64 * dx1).collect();
        let x2 = (0..n2).map(|j| j as f64 * dx2).collect();
        let ev = |o| x1.iter().map(|&y| profile.eval(y, o)).collect::<Vec<f64>>();
        let (h, hp, hpp, hppp) = (ev(0), ev(1), ev(2), ev(3));
        let a12 = hp.iter().map(|v| -v).collect();
        let a22: Vec<f64> = hp.iter().map(|v| 1.0 + v * v).collect();
        let ds = a22.iter().map(|v| v.sqrt()).collect();
        let a22_mean = a22.iter().sum::<f64>() / n1 as f64;
        Ok(Self {
            n1,
            n2,
            gamma,
            dx1,
            dx2,
            x1,
            x2,
            h,
            hp,
            hpp,
            hppp,
            a12,
            a22,
            ds,
            a22_mean,
            flat: profile.is_flat(),
            spectral: Spectral::new(n1, gamma),
            profile: profile.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n1 + i
    }

    /// Index of the top row.
    pub fn top(&self) -> usize {
        self.n2 - 1
    }

    /// Samples `f(x1, x2)` at the nodes.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                v.push(f(self.x1[i], self.x2[j]));
            }
        }
        v
    }

    /// Samples `f(y1, y2)` given in physical coordinates.
    pub fn sample_physical(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                v.push(f(self.x1[i], self.x2[j] + self.h[i]));
            }
        }
        v
    }

    pub fn d1(&self, f: &[f64]) -> Vec<f64> {
        self.spectral.d1(f)
    }

    /// `d/dx2`: centered inside, one-sided second order at the walls.
    pub fn d2(&self, f: &[f64]) -> Vec<f64> {
        let (n1, m) = (self.n1, self.top());
        let inv = 1.0 / (2.0 * self.dx2);
        let mut out = vec![0.0; f.len()];
        for i in 0..n1 {
            out[i] = (-3.0 * f[i] + 4.0 * f[n1 + i] - f[2 * n1 + i]) * inv;
            let t = m * n1 + i;
            out[t] = (3.0 * f[t] - 4.0 * f[t - n1] + f[t - 2 * n1]) * inv;
        }
        for j in 1..m {
            for i in 0..n1 {
                let k = j * n1 + i;
                out[k] = (f[k + n1] - f[k - n1]) * inv;
            }
        }
        out
    }

    /// One-sided second-order `d/dx2` on a wall row.
    pub fn d2_wall(&self, f: &[f64], side: Side) -> Vec<f64> {
        let n1 = self.n1;
        let inv = 1.0 / (2.0 * self.dx2);
        match side {
            Side::Bottom => (0..n1).map(|i| (-3.0 * f[i] + 4.0 * f[n1 + i] - f[2 * n1 + i]) * inv).collect(),
            Side::Top => {
                let b = self.top() * n1;
                (0..n1).map(|i| (3.0 * f[b + i] - 4.0 * f[b + i - n1] + f[b + i - 2 * n1]) * inv).collect()
            }
        }
    }

    /// Physical gradient `(d/dy1, d/dy2) = (d1 - h' d2, d2)`.
    pub fn grad_physical(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g1 = self.d1(f);
        let g2 = self.d2(f);
        if !self.flat {
            for (k, v) in g1.iter_mut().enumerate() {
                *v -= self.hp[k % self.n1] * g2[k];
            }
        }
        (g1, g2)
    }

    /// Divergence-form operator on all rows, with the natural (zero-flux)
    /// closure on the wall rows. Wall rows of the returned vector equal
    /// `L phi - (2/dx2) g` where `g` is the outward conormal flux of `phi`,
    /// up to `O(dx2)`.
    pub fn apply_l_natural(&self, phi: &[f64]) -> Vec<f64> {
        let (n1, n2, dx) = (self.n1, self.n2, self.dx2);
        let m = n2 - 1;
        let spec = self.spectral.forward_rows(phi);
        let mut out = self.spectral.d11_from(&spec);
        // gradient of the discrete energy, accumulated per node
        let mut grad = vec![0.0; phi.len()];
        for j in 0..m {
            for i in 0..n1 {
                let (a, b) = (j * n1 + i, (j + 1) * n1 + i);
                let flux = self.a22[i] * (phi[b] - phi[a]) / dx;
                grad[a] -= flux;
                grad[b] += flux;
            }
        }
        if !self.flat {
            let d1 = self.spectral.d1_from(&spec);
            let mut a_half = vec![0.0; m * n1];
            for j in 0..m {
                for i in 0..n1 {
                    a_half[j * n1 + i] = self.a12[i] * (phi[(j + 1) * n1 + i] - phi[j * n1 + i]);
                }
            }
            let d1a = self.spectral.d1(&a_half);
            for j in 0..m {
                for i in 0..n1 {
                    let (a, b) = (j * n1 + i, (j + 1) * n1 + i);
                    let bb = self.a12[i] * (d1[a] + d1[b]);
                    let da = d1a[j * n1 + i];
                    grad[a] += 0.5 * (-da - bb);
                    grad[b] += 0.5 * (-da + bb);
                }
            }
        }
        for j in 0..n2 {
            let w = if j == 0 || j == m { 0.5 * dx } else { dx };
            for i in 0..n1 {
                let k = j * n1 + i;
                out[k] -= grad[k] / w;
            }
        }
        out
    }

    /// Mapped Laplacian `L phi = phi_11 - 2 h' phi_12 - h'' phi_2 + (1 + h'^2) phi_22`.
    /// Interior rows use the conservative (symmetric) form; wall rows use
    /// one-sided second-order stencils of the expanded form.
    pub fn apply_l_tilde(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = self.apply_l_natural(phi);
        let (n1, dx) = (self.n1, self.dx2);
        let d11 = self.spectral.d11(phi);
        for side in [Side::Bottom, Side::Top] {
            let d2w = self.d2_wall(phi, side);
            let d12 = self.spectral.d1(&d2w);
            let (j0, s) = match side {
                Side::Bottom => (0isize, 1isize),
                Side::Top => (self.top() as isize, -1isize),
            };
            for i in 0..n1 {
                let at = |o: isize| phi[((j0 + s * o) as usize) * n1 + i];
                let d22 = (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / (dx * dx);
                let k = j0 as usize * n1 + i;
                out[k] = d11[k] - 2.0 * self.hp[i] * d12[i] - self.hpp[i] * d2w[i] + self.a22[i] * d22;
            }
        }
        out
    }

    /// Trapezoid weight in `x2` for row `j`.
    pub fn w2(&self, j: usize) -> f64 {
        if j == 0 || j == self.top() {
            0.5 * self.dx2
        } else {
            self.dx2
        }
    }

    /// `int f dy` over the domain (unit Jacobian of the flattening).
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.n2 {
            let r: f64 = f[j * self.n1..(j + 1) * self.n1].iter().sum();
            s += self.w2(j) * r;
        }
        s * self.dx1
    }

    /// `int f g dy`.
    pub fn integrate_product(&self, f: &[f64], g: &[f64]) -> f64 {
        let p: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
        self.integrate(&p)
    }

    /// Domain area `|Omega| = gamma`.
    pub fn area(&self) -> f64 {
        self.gamma
    }

    pub fn row<'a>(&self, f: &'a [f64], j: usize) -> &'a [f64] {
        &f[j * self.n1..(j + 1) * self.n1]
    }

    /// Wall trace of `f`.
    pub fn boundary_trace(&self, f: &[f64], side: Side, kind: TraceKind) -> Vec<f64> {
        let n1 = self.n1;
        let j = match side {
            Side::Bottom => 0,
            Side::Top => self.top(),
        };
        let val = self.row(f, j).to_vec();
        match kind {
            TraceKind::Value => val,
            TraceKind::TangentialDerivative => {
                // along tau = -+ (1, h')/s: (1/s) d/dy1 of the trace, sign by side
                let d = self.spectral.d1(&val);
                let o = -side.sign();
                (0..n1).map(|i| o * d[i] / self.ds[i]).collect()
            }
            TraceKind::NormalDerivative => {
                let d1 = self.spectral.d1(&val);
                let d2 = self.d2_wall(f, side);
                let sg = side.sign();
                (0..n1).map(|i| sg * (-self.hp[i] * d1[i] + self.a22[i] * d2[i]) / self.ds[i]).collect()
            }
        }
    }

    /// `sum integrand * sqrt(1 + h'^2) * dx1`: the line integral over a wall
    /// or over any shifted level curve `x2 = const`.
    pub fn line_integral(&self, integrand: &[f64]) -> f64 {
        integrand.iter().zip(&self.ds).map(|(f, s)| f * s).sum::<f64>() * self.dx1
    }

    /// Values of `f` on the level `x2` by linear interpolation between rows.
    pub fn level_values(&self, f: &[f64], x2: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&x2) {
            return Err(Error::Invalid(format!("level x2 = {x2} outside [0, 1]")));
        }
        let (j, t) = self.locate(x2);
        let n1 = self.n1;
        Ok((0..n1)
            .map(|i| {
                let a = f[j * n1 + i];
                if t == 0.0 {
                    a
                } else {
                    a + t * (f[(j + 1) * n1 + i] - a)
                }
            })
            .collect())
    }

    /// Row index `j` and fraction `t` with `x2 = (j + t) dx2`, `0 <= t < 1`.
    pub fn locate(&self, x2: f64) -> (usize, f64) {
        let r = x2 / self.dx2;
        let mut j = r.floor() as usize;
        if j >= self.top() {
            j = self.top();
            return (j, 0.0);
        }
        let mut t = r - j as f64;
        if (1.0 - t) < 1e-12 {
            j += 1;
            t = 0.0;
        } else if t < 1e-12 {
            t = 0.0;
        }
        (j, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rough() -> HeightProfile {
        HeightProfile::sine(1.0, 1, 0.1)
    }

    #[test]
    fn fft_friendly() {
        assert!(is_fft_friendly(128));
        assert!(is_fft_friendly(96));
        assert!(!is_fft_friendly(22));
        assert!(MappedGrid::new(&rough(), 22, 16).is_err());
        let e = MappedGrid::new(&rough(), 16, 4).unwrap_err().to_string();
        assert!(e.contains("n2 >= 8"), "{e}");
    }

    #[test]
    fn flat_gradient_identity() {
        let g = MappedGrid::new(&HeightProfile::flat(1.0), 16, 9).unwrap();
        let f = g.sample(|x, _| (2.0 * PI * x).sin());
        let (g1, g2) = g.grad_physical(&f);
        for (k, (&a, &b)) in g1.iter().zip(&g2).enumerate() {
            assert!((a - 2.0 * PI * (2.0 * PI * g.x1[k % 16]).cos()).abs() < 1e-12);
            assert!(b.abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_x2() {
        let g = MappedGrid::new(&rough(), 16, 9).unwrap();
        let f = g.sample(|_, x2| x2);
        let (g1, g2) = g.grad_physical(&f);
        for k in 0..g.len() {
            assert!((g1[k] + g.hp[k % 16]).abs() < 1e-12);
            assert!((g2[k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_annihilated() {
        let g = MappedGrid::new(&rough(), 16, 12).unwrap();
        let f = vec![3.5; g.len()];
        assert!(g.apply_l_tilde(&f).iter().all(|v| v.abs() < 1e-10));
        assert!(g.apply_l_natural(&f).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn flat_reduces_to_five_point_plus_spectral() {
        let g = MappedGrid::new(&HeightProfile::flat(1.0), 16, 17).unwrap();
        let f = g.sample(|x, y| (2.0 * PI * x).sin() * (PI * y).sin() + 0.3 * (4.0 * PI * x).cos() * y * y);
        let l = g.apply_l_tilde(&f);
        let d11 = g.spectral.d11(&f);
        for j in 1..16 {
            for i in 0..16 {
                let k = g.idx(i, j);
                let r = d11[k] + (f[k + 16] - 2.0 * f[k] + f[k - 16]) / (g.dx2 * g.dx2);
                assert!((l[k] - r).abs() < 1e-13 * r.abs().max(1.0), "{} vs {}", l[k], r);
            }
        }
    }

    #[test]
    fn normal_derivative_traces() {
        let fl = MappedGrid::new(&HeightProfile::flat(1.0), 8, 9).unwrap();
        let f = fl.sample(|_, x2| x2);
        assert!(fl.boundary_trace(&f, Side::Bottom, TraceKind::NormalDerivative).iter().all(|v| (v + 1.0).abs() < 1e-13));
        let g = MappedGrid::new(&rough(), 16, 9).unwrap();
        let f = g.sample_physical(|_, y2| y2);
        let nd = g.boundary_trace(&f, Side::Bottom, TraceKind::NormalDerivative);
        for (v, ds) in nd.iter().zip(&g.ds) {
            assert!((v + 1.0 / ds).abs() < 1e-12);
        }
        let c = vec![5.0; g.len()];
        assert!(g.boundary_trace(&c, Side::Top, TraceKind::TangentialDerivative).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn line_integrals() {
        let fl = MappedGrid::new(&HeightProfile::flat(1.0), 8, 9).unwrap();
        assert!((fl.line_integral(&[1.0; 8]) - 1.0).abs() < 1e-15);
        let g = MappedGrid::new(&rough(), 64, 9).unwrap();
        // high-resolution midpoint oracle
        let n = 200_000;
        let oracle: f64 = (0..n)
            .map(|i| {
                let y = (i as f64 + 0.5) / n as f64;
                (1.0 + 0.394_784_176_043_574_3 * (2.0 * PI * y).cos().powi(2)).sqrt()
            })
            .sum::<f64>()
            / n as f64;
        assert!((g.line_integral(&[1.0; 64]) - oracle).abs() < 1e-10);
        assert!((oracle - 1.092_383_5).abs() < 1e-6);
        let kappa: Vec<f64> = g.x1.iter().map(|&y| crate::geometry::curvature(&g.profile, y, Side::Bottom)).collect();
        assert!(g.line_integral(&kappa).abs() < 1e-12);
    }

    #[test]
    fn level_interpolation() {
        let g = MappedGrid::new(&HeightProfile::flat(1.0), 8, 9).unwrap();
        let f = g.sample(|_, x2| 2.0 * x2);
        let v = g.level_values(&f, 0.3).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-14);
        assert!(g.level_values(&f, 1.2).is_err());
        assert_eq!(g.locate(0.5), (4, 0.0));
        assert_eq!(g.locate(1.0), (8, 0.0));
    }
}
