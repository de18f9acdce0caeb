//! Height profile, boundary frames, curvature and the smallness conditions
//! on friction and curvature.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// One term `cos * cos(2 pi k y / gamma) + sin * sin(2 pi k y / gamma)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub k: u32,
    pub cos: f64,
    pub sin: f64,
}

/// Finite real Fourier series on a period `gamma`, evaluated analytically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    pub mean: f64,
    #[serde(default)]
    pub modes: Vec<FourierMode>,
}

impl FourierSeries {
    pub fn constant(mean: f64) -> Self {
        Self { mean, modes: Vec::new() }
    }

    /// `d^order/dy^order` of the series at `y`.
    pub fn eval(&self, gamma: f64, y: f64, order: u32) -> f64 {
        let mut v = if order == 0 { self.mean } else { 0.0 };
        for m in &self.modes {
            let w = 2.0 * PI * m.k as f64 / gamma;
            let (s, c) = (w * y).sin_cos();
            // derivatives cycle through (c, s) -> (-s, c) -> (-c, -s) -> (s, -c)
            let (dc, ds) = match order % 4 {
                0 => (c, s),
                1 => (-s, c),
                2 => (-c, -s),
                _ => (s, -c),
            };
            v += w.powi(order as i32) * (m.cos * dc + m.sin * ds);
        }
        v
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !self.mean.is_finite() {
            return Err(Error::Invalid(format!("{what}: mean must be finite")));
        }
        for m in &self.modes {
            if m.k == 0 {
                return Err(Error::Invalid(format!("{what}: wavenumber k must be >= 1")));
            }
            if !m.cos.is_finite() || !m.sin.is_finite() {
                return Err(Error::Invalid(format!("{what}: coefficients must be finite")));
            }
        }
        Ok(())
    }
}

/// Periodic bottom-boundary height `h(y1)`; the top boundary is `1 + h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightProfile {
    pub gamma: f64,
    pub modes: Vec<FourierMode>,
    pub mean_offset: f64,
}

impl HeightProfile {
    pub fn new(gamma: f64, modes: Vec<FourierMode>, mean_offset: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Invalid("gamma must be positive".into()));
        }
        let p = Self { gamma, modes, mean_offset };
        p.series().validate("height profile")?;
        Ok(p)
    }

    pub fn flat(gamma: f64) -> Self {
        Self { gamma, modes: Vec::new(), mean_offset: 0.0 }
    }

    /// `h = amp * sin(2 pi k y / gamma)`.
    pub fn sine(gamma: f64, k: u32, amp: f64) -> Self {
        Self { gamma, modes: vec![FourierMode { k, cos: 0.0, sin: amp }], mean_offset: 0.0 }
    }

    pub fn is_flat(&self) -> bool {
        self.modes.iter().all(|m| m.cos == 0.0 && m.sin == 0.0)
    }

    fn series(&self) -> FourierSeries {
        FourierSeries { mean: self.mean_offset, modes: self.modes.clone() }
    }

    /// Unchecked evaluation; `order` above 3 is allowed internally.
    pub fn eval(&self, y1: f64, order: u32) -> f64 {
        self.series().eval(self.gamma, y1, order)
    }

    /// `max h - min h` over a fine sampling (series are band-limited).
    pub fn amplitude_range(&self) -> f64 {
        if self.is_flat() {
            return 0.0;
        }
        let kmax = self.modes.iter().map(|m| m.k).max().unwrap_or(1) as usize;
        let n = 256 * kmax.max(1);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let v = self.eval(self.gamma * i as f64 / n as f64, 0);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }
}

/// Exact `d^k h / dy1^k` for `k` in `0..=3`.
pub fn evaluate_height(profile: &HeightProfile, y1: f64, derivative_order: u32) -> Result<f64> {
    if derivative_order > 3 {
        return Err(Error::Invalid(format!("derivative_order must be in 0..=3, got {derivative_order}")));
    }
    Ok(profile.eval(y1, derivative_order))
}

/// Which wall.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Bottom,
    Top,
}

impl Side {
    /// `-1` on the bottom wall, `+1` on the top wall.
    pub fn sign(self) -> f64 {
        match self {
            Side::Bottom => -1.0,
            Side::Top => 1.0,
        }
    }
}

/// Signed curvature `kappa = +- h'' / (1 + h'^2)^{3/2}` (plus on top).
pub fn curvature(profile: &HeightProfile, y1: f64, side: Side) -> f64 {
    let hp = profile.eval(y1, 1);
    let hpp = profile.eval(y1, 2);
    side.sign() * hpp / (1.0 + hp * hp).powf(1.5)
}

/// `d kappa / d lambda` along the wall orientation `tau`.
fn curvature_arc_derivative(profile: &HeightProfile, y1: f64) -> f64 {
    // Same on both walls: kappa flips sign and so does d/dlambda.
    let hp = profile.eval(y1, 1);
    let hpp = profile.eval(y1, 2);
    let hppp = profile.eval(y1, 3);
    let s2 = 1.0 + hp * hp;
    let s = s2.sqrt();
    let dk_dy = -(hppp / (s2 * s) - 3.0 * hp * hpp * hpp / (s2 * s2 * s));
    dk_dy / s
}

/// Sampled boundary quantities on one wall.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    pub side: Side,
    pub gamma: f64,
    pub y1: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_dot: Vec<f64>,
    pub kappa: Vec<f64>,
    pub kappa_dot: Vec<f64>,
    pub normal: Vec<[f64; 2]>,
    pub tangent: Vec<[f64; 2]>,
    pub ds_weight: Vec<f64>,
    /// Minimum of `alpha` over both walls when built by [`boundary_frames`].
    pub alpha_min: f64,
}

impl BoundaryData {
    pub fn n1(&self) -> usize {
        self.y1.len()
    }

    /// Builds data from explicit samples with a given slope `h'` per sample.
    /// Derivatives are taken as given; used for condition checks on
    /// synthetic data.
    pub fn from_samples(
        side: Side,
        gamma: f64,
        alpha: Vec<f64>,
        alpha_dot: Vec<f64>,
        kappa: Vec<f64>,
        kappa_dot: Vec<f64>,
        h_prime: &[f64],
    ) -> Result<Self> {
        let n = alpha.len();
        if [alpha_dot.len(), kappa.len(), kappa_dot.len(), h_prime.len()].iter().any(|&l| l != n) {
            return Err(Error::Invalid("inconsistent sample counts".into()));
        }
        if alpha.iter().any(|&a| a < 0.0) {
            return Err(Error::Invalid("friction coefficient alpha must be nonnegative".into()));
        }
        let y1 = (0..n).map(|i| gamma * i as f64 / n as f64).collect();
        let (normal, tangent, ds_weight) = frames(side, h_prime);
        let alpha_min = alpha.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self { side, gamma, y1, alpha, alpha_dot, kappa, kappa_dot, normal, tangent, ds_weight, alpha_min })
    }

    /// `alpha + kappa` per sample.
    pub fn alpha_plus_kappa(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.kappa).map(|(a, k)| a + k).collect()
    }
}

fn frames(side: Side, h_prime: &[f64]) -> (Vec<[f64; 2]>, Vec<[f64; 2]>, Vec<f64>) {
    let sg = side.sign();
    let mut normal = Vec::with_capacity(h_prime.len());
    let mut tangent = Vec::with_capacity(h_prime.len());
    let mut ds = Vec::with_capacity(h_prime.len());
    for &hp in h_prime {
        let s = (1.0 + hp * hp).sqrt();
        let n = [-sg * hp / s, sg / s];
        normal.push(n);
        tangent.push([-n[1], n[0]]);
        ds.push(s);
    }
    (normal, tangent, ds)
}

/// Samples both walls at `n1` equispaced points with friction `alpha_spec`
/// on both walls.
pub fn boundary_frames(profile: &HeightProfile, n1: usize, alpha_spec: &FourierSeries) -> Result<(BoundaryData, BoundaryData)> {
    boundary_frames_split(profile, n1, alpha_spec, alpha_spec)
}

/// As [`boundary_frames`] with independent friction series per wall.
pub fn boundary_frames_split(
    profile: &HeightProfile,
    n1: usize,
    alpha_bottom: &FourierSeries,
    alpha_top: &FourierSeries,
) -> Result<(BoundaryData, BoundaryData)> {
    if n1 < 4 {
        return Err(Error::Invalid(format!("n1 must be >= 4, got {n1}")));
    }
    alpha_bottom.validate("alpha (bottom)")?;
    alpha_top.validate("alpha (top)")?;
    let g = profile.gamma;
    let y1: Vec<f64> = (0..n1).map(|i| g * i as f64 / n1 as f64).collect();
    let hp: Vec<f64> = y1.iter().map(|&y| profile.eval(y, 1)).collect();
    let build = |side: Side, spec: &FourierSeries| -> Result<BoundaryData> {
        let alpha: Vec<f64> = y1.iter().map(|&y| spec.eval(g, y, 0)).collect();
        if let Some(i) = alpha.iter().position(|&a| a < 0.0) {
            return Err(Error::Invalid(format!("sampled alpha < 0 on {side:?} wall at y1 = {} (alpha = {})", y1[i], alpha[i])));
        }
        let orient = -side.sign(); // d/dlambda = orient * (1/s) d/dy1
        let alpha_dot = y1.iter().zip(&hp).map(|(&y, &p)| orient * spec.eval(g, y, 1) / (1.0 + p * p).sqrt()).collect();
        let kappa = y1.iter().map(|&y| curvature(profile, y, side)).collect();
        let kappa_dot = y1.iter().map(|&y| curvature_arc_derivative(profile, y)).collect();
        let (normal, tangent, ds_weight) = frames(side, &hp);
        let alpha_min = alpha.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(BoundaryData { side, gamma: g, y1: y1.clone(), alpha, alpha_dot, kappa, kappa_dot, normal, tangent, ds_weight, alpha_min })
    };
    let mut bottom = build(Side::Bottom, alpha_bottom)?;
    let mut top = build(Side::Top, alpha_top)?;
    let amin = bottom.alpha_min.min(top.alpha_min);
    bottom.alpha_min = amin;
    top.alpha_min = amin;
    Ok((bottom, top))
}

/// Pointwise condition check result.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub name: String,
    pub pass: bool,
    /// `min (rhs - |kappa|)` over all samples of both walls.
    pub margin: f64,
    pub worst_side: Side,
    pub worst_y1: f64,
    pub n_samples: usize,
    pub n_failed: usize,
}

impl ConditionReport {
    pub fn to_kv(&self) -> String {
        format!(
            "condition = {}\npass = {}\nmargin = {:e}\nworst_side = {:?}\nworst_y1 = {}\nn_samples = {}\nn_failed = {}\n",
            self.name, self.pass, self.margin, self.worst_side, self.worst_y1, self.n_samples, self.n_failed
        )
    }
}

fn check_pointwise(name: &str, walls: [&BoundaryData; 2], rhs: impl Fn(f64, f64) -> f64) -> Result<ConditionReport> {
    if walls[0].n1() != walls[1].n1() {
        return Err(Error::Invalid("inconsistent sample counts".into()));
    }
    let mut margin = f64::INFINITY;
    let mut worst = (Side::Bottom, 0.0);
    let mut failed = 0;
    for w in walls {
        for i in 0..w.n1() {
            let m = rhs(w.alpha[i], w.ds_weight[i]) - w.kappa[i].abs();
            if m < 0.0 {
                failed += 1;
            }
            if m < margin {
                margin = m;
                worst = (w.side, w.y1[i]);
            }
        }
    }
    Ok(ConditionReport {
        name: name.to_string(),
        pass: failed == 0,
        margin,
        worst_side: worst.0,
        worst_y1: worst.1,
        n_samples: 2 * walls[0].n1(),
        n_failed: failed,
    })
}

/// Theorem 1 condition `|kappa| <= 2 alpha + min(1, sqrt(alpha)) / (4 s)`.
pub fn check_condition_ec(bottom: &BoundaryData, top: &BoundaryData) -> Result<ConditionReport> {
    check_pointwise("ec", [bottom, top], |a, s| 2.0 * a + a.sqrt().min(1.0) / (4.0 * s))
}

/// Curvature condition variants of Theorem 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem2Variant {
    /// `|kappa| <= alpha`.
    KappaLeqAlpha,
    /// `|kappa| <= 2 alpha + sqrt(alpha) / (4 s)`.
    General,
}

/// Sup-norms of boundary data entering the bound formulas.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct BoundaryNorms {
    pub alpha_min: f64,
    pub kappa_inf: f64,
    pub alpha_plus_kappa_inf: f64,
    /// `max(sup |alpha + kappa|, sup |alpha_dot + kappa_dot|)`.
    pub alpha_plus_kappa_w1inf: f64,
    pub alpha_dot_inf: f64,
    pub kappa_dot_inf: f64,
    pub n_samples: usize,
}

pub fn boundary_norms(bottom: &BoundaryData, top: &BoundaryData) -> BoundaryNorms {
    let sup = |f: &dyn Fn(&BoundaryData, usize) -> f64| {
        [bottom, top].iter().flat_map(|w| (0..w.n1()).map(move |i| (w, i))).map(|(w, i)| f(w, i).abs()).fold(0.0, f64::max)
    };
    let apk = sup(&|w, i| w.alpha[i] + w.kappa[i]);
    let apk_dot = sup(&|w, i| w.alpha_dot[i] + w.kappa_dot[i]);
    BoundaryNorms {
        alpha_min: bottom.alpha.iter().chain(&top.alpha).cloned().fold(f64::INFINITY, f64::min),
        kappa_inf: sup(&|w, i| w.kappa[i]),
        alpha_plus_kappa_inf: apk,
        alpha_plus_kappa_w1inf: apk.max(apk_dot),
        alpha_dot_inf: sup(&|w, i| w.alpha_dot[i]),
        kappa_dot_inf: sup(&|w, i| w.kappa_dot[i]),
        n_samples: bottom.n1(),
    }
}

/// Theorem 2 condition report together with the boundary norms.
#[derive(Clone, Debug, PartialEq)]
pub struct Theorem2ConditionReport {
    pub variant: Theorem2Variant,
    pub condition: ConditionReport,
    pub norms: BoundaryNorms,
}

pub fn check_condition_theorem2(bottom: &BoundaryData, top: &BoundaryData, variant: Theorem2Variant) -> Result<Theorem2ConditionReport> {
    let condition = match variant {
        Theorem2Variant::KappaLeqAlpha => check_pointwise("kappa_leq_alpha", [bottom, top], |a, _| a)?,
        Theorem2Variant::General => check_pointwise("kappa_general", [bottom, top], |a, s| 2.0 * a + a.sqrt() / (4.0 * s))?,
    };
    Ok(Theorem2ConditionReport { variant, condition, norms: boundary_norms(bottom, top) })
}
