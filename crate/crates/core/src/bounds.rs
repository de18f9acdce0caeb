//! Background-field construction, the quadratic form Q, and the explicit
//! Nusselt bounds with their hypothesis flags.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{Averages, EnstrophyTerms};
use crate::error::{Error, Result};
use crate::geometry::{
    boundary_frames_split, boundary_norms, check_condition_ec, check_condition_theorem2, BoundaryNorms, FourierSeries, HeightProfile,
    Theorem2Variant,
};
use crate::grid::{BcKind, MappedGrid, ScalarField};

/// Parameter choice of the bound proof.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofCase {
    InterpKappaLeqAlpha,
    InterpGeneral,
    ThreeSevenths,
}

impl ProofCase {
    pub const ALL: [ProofCase; 3] = [ProofCase::InterpKappaLeqAlpha, ProofCase::InterpGeneral, ProofCase::ThreeSevenths];

    pub fn name(self) -> &'static str {
        match self {
            ProofCase::InterpKappaLeqAlpha => "interp_kappa_leq_alpha",
            ProofCase::InterpGeneral => "interp_general",
            ProofCase::ThreeSevenths => "three_sevenths",
        }
    }

    /// Exponent `e` in `a = a0 Ra^{-e}`.
    pub fn a_exponent(self) -> f64 {
        match self {
            ProofCase::ThreeSevenths => 11.0 / 7.0,
            _ => 1.5,
        }
    }

    /// Exponent `e` in `delta ~ Ra^{-e}`.
    pub fn delta_exponent(self) -> f64 {
        match self {
            ProofCase::ThreeSevenths => 3.0 / 7.0,
            _ => 5.0 / 12.0,
        }
    }

    /// Denominator factor `d` in `delta = (a0 b / (d C))^{1/6} Ra^{-e}`.
    fn delta_divisor(self) -> f64 {
        match self {
            ProofCase::InterpKappaLeqAlpha => 8.0,
            _ => 4.0,
        }
    }
}

impl std::str::FromStr for ProofCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProofCase::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::Invalid(format!("unknown bound case '{s}'")))
    }
}

/// Piecewise-linear background profile in wall distance `x2`.
pub fn eta_profile(x2: f64, delta: f64) -> f64 {
    if x2 < delta {
        1.0 - x2 / (2.0 * delta)
    } else if x2 > 1.0 - delta {
        (1.0 - x2) / (2.0 * delta)
    } else {
        0.5
    }
}

#[derive(Clone, Debug)]
pub struct BackgroundField {
    pub delta: f64,
    pub eta: ScalarField,
    /// `<|grad eta|^2>` by exact strip integration.
    pub grad_eta_sq_avg: f64,
    /// Same quantity by cellwise quadrature of the sampled profile.
    pub grad_eta_sq_quadrature: f64,
    pub cells_per_strip: f64,
    /// Fewer than four cells per strip.
    pub under_resolved: bool,
}

/// Samples the background profile and integrates `|grad eta|^2`.
pub fn build_background(delta: f64, grid: &MappedGrid) -> Result<BackgroundField> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::Invalid(format!("delta = {delta} must lie in (0, 1/2]")));
    }
    let eta = grid.sample(|_, x2| eta_profile(x2, delta));
    let a22_sum: f64 = grid.a22.iter().sum::<f64>() * grid.dx1;
    let exact = a22_sum / (2.0 * delta * grid.area());
    // eta depends on x2 only, so |grad eta|^2 = a22 (d2 eta)^2
    let mut quad = 0.0;
    for j in 0..grid.top() {
        let s = (eta_profile(grid.x2[j + 1], delta) - eta_profile(grid.x2[j], delta)) / grid.dx2;
        quad += s * s * grid.dx2;
    }
    let quad = quad * a22_sum / grid.area();
    let cells = delta / grid.dx2;
    Ok(BackgroundField {
        delta,
        eta: ScalarField::from_values(grid.n1, grid.n2, eta, BcKind::DirichletGiven),
        grad_eta_sq_avg: exact,
        grad_eta_sq_quadrature: quad,
        cells_per_strip: cells,
        under_resolved: cells < 4.0,
    })
}

/// Parameters of the quadratic form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    pub case: ProofCase,
    pub a: f64,
    pub b: f64,
    pub big_m: f64,
    pub a0: f64,
    pub user_c: f64,
    pub delta: f64,
    /// `delta` comes from the proof formula rather than an override.
    pub delta_from_proof: bool,
}

/// `delta = (a0 b / (d C))^{1/6} Ra^{-e}` for the given case.
pub fn proof_delta(case: ProofCase, a0: f64, b: f64, user_c: f64, ra: f64) -> f64 {
    (a0 * b / (case.delta_divisor() * user_c)).powf(1.0 / 6.0) * ra.powf(-case.delta_exponent())
}

/// Applies the proof's choices of `b`, `a0`, `a`, `delta` and `M`.
pub fn choose_proof_parameters(
    case: ProofCase,
    ra: f64,
    norms: &BoundaryNorms,
    height_range: f64,
    user_c: f64,
    u0_norm: f64,
    delta_override: Option<f64>,
) -> Result<BoundParams> {
    if !(user_c > 0.0) {
        return Err(Error::Invalid(format!("user constant C must be positive, got {user_c}")));
    }
    if !(ra > 0.0) {
        return Err(Error::Invalid(format!("ra must be positive, got {ra}")));
    }
    let b = 1.0 / (2.0 * (1.0 + height_range));
    let base = u0_norm * u0_norm + norms.alpha_dot_inf.powi(2) + norms.kappa_dot_inf.powi(2) + 1.0;
    let am = norms.alpha_min;
    let a0 = match case {
        ProofCase::InterpKappaLeqAlpha => b / (8.0 * user_c * base),
        ProofCase::InterpGeneral => am.sqrt() * b / (8.0 * user_c * base),
        ProofCase::ThreeSevenths => am * b / (8.0 * user_c * (base + am.powi(-2))),
    };
    let a = a0 * ra.powf(-case.a_exponent());
    let delta = match delta_override {
        Some(d) => {
            if !(d > 0.0 && d <= 0.5) {
                return Err(Error::Invalid(format!("delta override {d} must lie in (0, 1/2]")));
            }
            d
        }
        None => proof_delta(case, a0, b, user_c, ra),
    };
    Ok(BoundParams {
        case,
        a,
        b,
        big_m: user_c * a * norms.alpha_plus_kappa_w1inf.powi(2),
        a0,
        user_c,
        delta,
        delta_from_proof: delta_override.is_none(),
    })
}

/// Long-time averages (per unit area) entering Q.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QInputs {
    pub ra: f64,
    pub nu: f64,
    pub grad_t_sq: f64,
    pub grad_t_dot_grad_eta: f64,
    pub theta_u_grad_eta: f64,
    pub grad_u_sq: f64,
    pub boundary_friction: f64,
    /// Sum of the enstrophy-balance terms.
    pub bold_a: f64,
    pub height_range: f64,
}

impl QInputs {
    /// Collects the averages for strip width `delta` from a run.
    pub fn from_averages(avg: &Averages, delta: f64, ra: f64, area: f64, height_range: f64) -> Result<Self> {
        let bg = avg
            .background
            .iter()
            .find(|s| (s.delta - delta).abs() <= 1e-12 * delta.max(1.0))
            .ok_or_else(|| Error::MissingData(format!("background averages for delta = {delta}")))?;
        let terms: EnstrophyTerms =
            avg.enstrophy_terms.ok_or_else(|| Error::MissingData("enstrophy balance terms (pressure samples)".into()))?;
        Ok(Self {
            ra,
            nu: avg.nu_gradsq,
            grad_t_sq: avg.nu_gradsq,
            grad_t_dot_grad_eta: bg.grad_t_dot_grad_eta,
            theta_u_grad_eta: bg.theta_u_grad_eta,
            grad_u_sq: avg.grad_u_sq / area,
            boundary_friction: avg.boundary_friction / area,
            bold_a: terms.sum() / area,
            height_range,
        })
    }
}

/// Signed terms of Q and the reconstructed Nusselt number.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QBreakdown {
    pub m_ra_sq: f64,
    pub grad_eta_sq: f64,
    pub grad_theta_sq: f64,
    pub cross: f64,
    pub b_grad_u: f64,
    pub b_friction: f64,
    pub minus_b_bold_b: f64,
    pub a_bold_a: f64,
    pub q: f64,
    pub bold_b: f64,
    /// `Nu` from `(1 - b(1+dh)) Nu + b = M Ra^2 + 2<|grad eta|^2> - Q`.
    pub nu_reconstructed: f64,
    /// `<|grad eta|^2> - <|grad theta|^2> - 2 <theta u . grad eta>`.
    pub nu_eta_theta: f64,
}

pub fn q_form(inputs: &QInputs, grad_eta_sq: f64, params: &BoundParams) -> Result<QBreakdown> {
    if inputs.ra <= 0.0 {
        return Err(Error::Invalid("q_form needs ra > 0".into()));
    }
    let ra = inputs.ra;
    let dh1 = 1.0 + inputs.height_range;
    let grad_theta_sq = inputs.grad_t_sq - 2.0 * inputs.grad_t_dot_grad_eta + grad_eta_sq;
    let bold_b = inputs.grad_u_sq + inputs.boundary_friction - ra * (dh1 * inputs.nu - 1.0);
    let mut r = QBreakdown {
        m_ra_sq: params.big_m * ra * ra,
        grad_eta_sq,
        grad_theta_sq,
        cross: 2.0 * inputs.theta_u_grad_eta,
        b_grad_u: params.b / ra * inputs.grad_u_sq,
        b_friction: params.b / ra * inputs.boundary_friction,
        minus_b_bold_b: -params.b / ra * bold_b,
        a_bold_a: params.a * inputs.bold_a,
        bold_b,
        nu_eta_theta: grad_eta_sq - grad_theta_sq - 2.0 * inputs.theta_u_grad_eta,
        ..Default::default()
    };
    r.q = r.m_ra_sq + r.grad_eta_sq + r.grad_theta_sq + r.cross + r.b_grad_u + r.b_friction + r.minus_b_bold_b + r.a_bold_a;
    r.nu_reconstructed = (r.m_ra_sq + 2.0 * grad_eta_sq - r.q - params.b) / (1.0 - params.b * dh1);
    Ok(r)
}

/// Geometry-derived inputs of the bound formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryInputs {
    pub norms: BoundaryNorms,
    pub height_range: f64,
    pub ec: bool,
    pub kappa_leq_alpha: bool,
    pub general_kappa: bool,
}

impl BoundaryInputs {
    pub fn from_geometry(profile: &HeightProfile, n1: usize, bottom: &FourierSeries, top: &FourierSeries) -> Result<Self> {
        let (b, t) = boundary_frames_split(profile, n1, bottom, top)?;
        Ok(Self {
            norms: boundary_norms(&b, &t),
            height_range: profile.amplitude_range(),
            ec: check_condition_ec(&b, &t)?.pass,
            kappa_leq_alpha: check_condition_theorem2(&b, &t, Theorem2Variant::KappaLeqAlpha)?.condition.pass,
            general_kappa: check_condition_theorem2(&b, &t, Theorem2Variant::General)?.condition.pass,
        })
    }

    /// Inputs from explicit norms with constant friction `alpha`. The
    /// pointwise conditions are evaluated at the worst case `|kappa| =
    /// kappa_inf`, `s = s_max >= 1`.
    pub fn from_norms(alpha: f64, kappa_inf: f64, alpha_dot_inf: f64, kappa_dot_inf: f64, height_range: f64, s_max: f64) -> Result<Self> {
        for (name, v) in [
            ("alpha", alpha),
            ("kappa_inf", kappa_inf),
            ("alpha_dot_inf", alpha_dot_inf),
            ("kappa_dot_inf", kappa_dot_inf),
            ("height_range", height_range),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(s_max >= 1.0 && s_max.is_finite()) {
            return Err(Error::Invalid(format!("s_max must be >= 1, got {s_max}")));
        }
        let apk = alpha + kappa_inf;
        Ok(Self {
            norms: BoundaryNorms {
                alpha_min: alpha,
                kappa_inf,
                alpha_plus_kappa_inf: apk,
                alpha_plus_kappa_w1inf: apk.max(alpha_dot_inf + kappa_dot_inf),
                alpha_dot_inf,
                kappa_dot_inf,
                n_samples: 0,
            },
            height_range,
            ec: kappa_inf <= 2.0 * alpha + alpha.sqrt().min(1.0) / (4.0 * s_max),
            kappa_leq_alpha: kappa_inf <= alpha,
            general_kappa: kappa_inf <= 2.0 * alpha + alpha.sqrt() / (4.0 * s_max),
        })
    }

    /// Flat walls with constant friction `alpha`.
    pub fn flat(alpha: f64) -> Self {
        Self {
            norms: BoundaryNorms {
                alpha_min: alpha,
                kappa_inf: 0.0,
                alpha_plus_kappa_inf: alpha.abs(),
                alpha_plus_kappa_w1inf: alpha.abs(),
                alpha_dot_inf: 0.0,
                kappa_dot_inf: 0.0,
                n_samples: 0,
            },
            height_range: 0.0,
            ec: alpha > 0.0,
            kappa_leq_alpha: alpha >= 0.0,
            general_kappa: alpha >= 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem1Eval {
    pub bound: f64,
    pub ra_ge_one: bool,
    pub ec: bool,
    pub applicable: bool,
}

/// `C (Ra^{1/2} + ||kappa||_inf)`.
pub fn evaluate_theorem1(ra: f64, kappa_inf: f64, user_c: f64, ec: bool) -> Theorem1Eval {
    let ra_ge_one = ra >= 1.0;
    Theorem1Eval { bound: user_c * (ra.sqrt() + kappa_inf), ra_ge_one, ec, applicable: ra_ge_one && ec }
}

/// Regime and hypothesis flags of the second theorem.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Theorem2Flags {
    /// `||alpha + kappa||_inf <= C_bar`.
    pub small_apk: bool,
    pub kappa_leq_alpha: bool,
    pub general_kappa: bool,
    /// `Pr >= alpha_min^{-3/2} Ra^{3/4}`.
    pub pr_ge_alpha_ra34: bool,
    /// `Ra^{-1/2} <= alpha_min`.
    pub ra_half_le_alpha: bool,
    /// `Ra^{-1} <= alpha_min`.
    pub ra_inv_le_alpha: bool,
    /// `Pr >= Ra^{5/7}`.
    pub pr_ge_ra57: bool,
}

impl Theorem2Flags {
    pub fn new(ra: f64, pr: f64, bi: &BoundaryInputs, c_bar: f64) -> Self {
        let am = bi.norms.alpha_min;
        Self {
            small_apk: bi.norms.alpha_plus_kappa_inf <= c_bar,
            kappa_leq_alpha: bi.kappa_leq_alpha,
            general_kappa: bi.general_kappa,
            pr_ge_alpha_ra34: am > 0.0 && pr >= am.powf(-1.5) * ra.powf(0.75),
            ra_half_le_alpha: ra.powf(-0.5) <= am,
            ra_inv_le_alpha: 1.0 / ra <= am,
            pr_ge_ra57: pr >= ra.powf(5.0 / 7.0),
        }
    }

    pub fn applicable(&self, case: ProofCase) -> bool {
        self.small_apk
            && match case {
                ProofCase::InterpKappaLeqAlpha => self.kappa_leq_alpha && self.pr_ge_alpha_ra34 && self.ra_half_le_alpha,
                ProofCase::InterpGeneral => self.general_kappa && self.pr_ge_alpha_ra34 && self.ra_inv_le_alpha,
                ProofCase::ThreeSevenths => self.general_kappa && self.pr_ge_ra57,
            }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem2Eval {
    pub case: ProofCase,
    pub bound: f64,
    pub c_half: f64,
    pub c_five_twelfths: f64,
    pub c_three_sevenths: f64,
    pub flags: Theorem2Flags,
    pub applicable: bool,
}

/// Evaluates one case of the second theorem with user constants `C`, `C_bar`
/// and the initial-data norm placeholder.
pub fn evaluate_theorem2(case: ProofCase, ra: f64, pr: f64, bi: &BoundaryInputs, user_c: f64, c_bar: f64, u0_norm: f64) -> Theorem2Eval {
    let n = &bi.norms;
    let am = n.alpha_min;
    let w2 = n.alpha_plus_kappa_w1inf.powi(2);
    let tail = u0_norm + n.alpha_dot_inf + n.kappa_dot_inf + 1.0;
    let c_half = user_c / (1.0 + u0_norm * u0_norm);
    let c_five_twelfths = user_c * tail.cbrt();
    let c_three_sevenths = user_c * (w2 + am.powf(-0.5) + am.powf(-1.0 / 6.0) * tail.cbrt());
    let bound = match case {
        ProofCase::InterpKappaLeqAlpha => c_half * w2 * ra.sqrt() + c_five_twelfths * ra.powf(5.0 / 12.0),
        ProofCase::InterpGeneral => c_half * am.sqrt() * w2 * ra.sqrt() + c_five_twelfths * am.powf(-1.0 / 12.0) * ra.powf(5.0 / 12.0),
        ProofCase::ThreeSevenths => c_three_sevenths * ra.powf(3.0 / 7.0),
    };
    let flags = Theorem2Flags::new(ra, pr, bi, c_bar);
    Theorem2Eval { case, bound, c_half, c_five_twelfths, c_three_sevenths, flags, applicable: flags.applicable(case) }
}

/// One evaluated case with its parameters and optional Q evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub eval: Theorem2Eval,
    pub params: BoundParams,
    pub q: Option<QBreakdown>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub ra: f64,
    pub pr: f64,
    pub measured_nu: Option<f64>,
    pub user_c: f64,
    pub c_bar: f64,
    pub u0_norm: f64,
    pub theorem1: Theorem1Eval,
    pub cases: Vec<CaseReport>,
}

pub const BOUNDS_CSV_HEADER: [&str; 22] = [
    "ra",
    "pr",
    "case",
    "applicable",
    "bound_value",
    "measured_nu",
    "margin",
    "delta",
    "a",
    "b",
    "big_m",
    "user_c",
    "ec",
    "ra_ge_one",
    "small_apk",
    "kappa_leq_alpha",
    "general_kappa",
    "pr_ge_alpha_ra34",
    "ra_half_le_alpha",
    "ra_inv_le_alpha",
    "pr_ge_ra57",
    "delta_from_proof",
];

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

impl BoundReport {
    /// Margin `bound - Nu` (positive when the measurement respects the bound).
    pub fn margin(&self, bound: f64) -> Option<f64> {
        self.measured_nu.map(|nu| bound - nu)
    }

    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows = Vec::new();
        let t1 = &self.theorem1;
        let mut r1 = vec![
            num(Some(self.ra)),
            num(Some(self.pr)),
            "theorem1".to_string(),
            flag(t1.applicable).to_string(),
            num(Some(t1.bound)),
            num(self.measured_nu),
            num(self.margin(t1.bound)),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            num(Some(self.user_c)),
            flag(t1.ec).to_string(),
            flag(t1.ra_ge_one).to_string(),
        ];
        r1.extend(std::iter::repeat_n(String::new(), BOUNDS_CSV_HEADER.len() - r1.len()));
        rows.push(r1.join(","));
        for c in &self.cases {
            let f = &c.eval.flags;
            let p = &c.params;
            let r = [
                num(Some(self.ra)),
                num(Some(self.pr)),
                c.eval.case.name().to_string(),
                flag(c.eval.applicable).to_string(),
                num(Some(c.eval.bound)),
                num(self.measured_nu),
                num(self.margin(c.eval.bound)),
                num(Some(p.delta)),
                num(Some(p.a)),
                num(Some(p.b)),
                num(Some(p.big_m)),
                num(Some(self.user_c)),
                flag(t1.ec).to_string(),
                flag(t1.ra_ge_one).to_string(),
                flag(f.small_apk).to_string(),
                flag(f.kappa_leq_alpha).to_string(),
                flag(f.general_kappa).to_string(),
                flag(f.pr_ge_alpha_ra34).to_string(),
                flag(f.ra_half_le_alpha).to_string(),
                flag(f.ra_inv_le_alpha).to_string(),
                flag(f.pr_ge_ra57).to_string(),
                flag(p.delta_from_proof).to_string(),
            ];
            rows.push(r.join(","));
        }
        rows
    }

    pub fn write_csv(&self, mut out: impl std::io::Write, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "{}", BOUNDS_CSV_HEADER.join(","))?;
        }
        for r in self.csv_rows() {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }

    /// Human-readable summary; inapplicable bounds appear in parentheses.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let show = |v: f64, ok: bool| if ok { format!("{v:.6}") } else { format!("({v:.6})") };
        let _ = writeln!(s, "ra = {}  pr = {}  C = {}  C_bar = {}  u0_norm = {}", self.ra, self.pr, self.user_c, self.c_bar, self.u0_norm);
        match self.measured_nu {
            Some(nu) => {
                let _ = writeln!(s, "measured Nu = {nu:.6}");
            }
            None => {
                let _ = writeln!(s, "measured Nu = n/a");
            }
        }
        let t1 = &self.theorem1;
        let _ = writeln!(s, "theorem1: {}  [ec={} ra>=1={}]", show(t1.bound, t1.applicable), t1.ec, t1.ra_ge_one);
        for c in &self.cases {
            let e = &c.eval;
            let _ = write!(
                s,
                "{}: {}  delta={:.4e} a={:.4e} b={:.4} M={:.4e}{}",
                e.case.name(),
                show(e.bound, e.applicable),
                c.params.delta,
                c.params.a,
                c.params.b,
                c.params.big_m,
                if c.params.delta_from_proof { "" } else { " (delta override)" }
            );
            if let Some(q) = &c.q {
                let _ = write!(s, "  Q={:.6e} Nu_rec={:.6}", q.q, q.nu_reconstructed);
            }
            let _ = writeln!(s, "  flags {:?}", e.flags);
        }
        s
    }
}

/// Evaluates Q for one set of proof parameters.
pub type QEval<'a> = &'a dyn Fn(&BoundParams) -> Result<QBreakdown>;

/// Builds the full report; `q_eval` enables the Q evaluation per case.
#[allow(clippy::too_many_arguments)]
pub fn bound_report(
    ra: f64,
    pr: f64,
    bi: &BoundaryInputs,
    user_c: f64,
    c_bar: f64,
    u0_norm: f64,
    cases: &[ProofCase],
    delta_override: Option<f64>,
    measured_nu: Option<f64>,
    q_eval: Option<QEval>,
) -> Result<BoundReport> {
    let theorem1 = evaluate_theorem1(ra, bi.norms.kappa_inf, user_c, bi.ec);
    let mut out = Vec::new();
    for &case in cases {
        let params = choose_proof_parameters(case, ra, &bi.norms, bi.height_range, user_c, u0_norm, delta_override)?;
        let q = match q_eval {
            Some(f) => Some(f(&params)?),
            None => None,
        };
        out.push(CaseReport { eval: evaluate_theorem2(case, ra, pr, bi, user_c, c_bar, u0_norm), params, q });
    }
    Ok(BoundReport { ra, pr, measured_nu, user_c, c_bar, u0_norm, theorem1, cases: out })
}

/// Least-squares slope of `log nu` against `log ra`.
pub fn log_log_slope(ra: &[f64], nu: &[f64]) -> Result<f64> {
    if ra.len() != nu.len() || ra.len() < 2 {
        return Err(Error::Invalid("slope needs at least two (ra, nu) pairs".into()));
    }
    if ra.iter().chain(nu).any(|v| !(*v > 0.0)) {
        return Err(Error::Invalid("slope needs positive ra and nu".into()));
    }
    let x: Vec<f64> = ra.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = nu.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("slope needs distinct ra values".into()));
    }
    Ok(sxy / sxx)
}
