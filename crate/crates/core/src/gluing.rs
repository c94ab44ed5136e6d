//! Cauchy-data matching across seam circles.
//!
//! Every seam joins an inner graph over r_ε/2 ≤ r ≤ r_ε and an outer graph
//! over r_ε ≤ r ≤ 2r_ε. Matching values and r∂_r on r = r_ε splits mode-wise:
//! the constant and first modes feed a small parameter system (solved by damped
//! Gauss-Newton), the higher modes fix the boundary data in closed form through
//! the inverse of ∂_θ. The two steps alternate until the iterates settle.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harmonic::{FourierBoundary, Orthogonality, Parity};
use crate::jacobi::{row_modes, row_synthesis};
use crate::kmr::SurfaceParams;
use crate::model_graphs::{
    chm_end_model, kmr_end_model, scherk_end, seam_radius, ChmEnd, ChmShape, EndModel, KmrFamily,
    KmrPlacement, Orientation, Remainder, ScherkProblem, Side, TiltAxis, DressingRule, SEAM_SAMPLES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theorem {
    /// CHM piece with straight ends, two Scherk-type halves and a flat annulus.
    Th1,
    /// CHM piece with ends bent in sin θ, two halves of the α = 0 KMR example, flat annulus.
    Th2K1,
    /// CHM piece with ends bent in cos θ, two halves of the β = 0 KMR example, flat annulus.
    Th2K2,
    /// Half of the α = β = 0 KMR example inside, half a Scherk example outside.
    Th3K0,
    /// CHM piece with straight ends, KMR half on top, Scherk half below, flat annulus.
    Th3KPos,
}

impl Theorem {
    pub const ALL: [Theorem; 5] = [Theorem::Th1, Theorem::Th2K1, Theorem::Th2K2, Theorem::Th3K0, Theorem::Th3KPos];

    pub fn name(self) -> &'static str {
        match self {
            Theorem::Th1 => "th1",
            Theorem::Th2K1 => "th2_K1",
            Theorem::Th2K2 => "th2_K2",
            Theorem::Th3K0 => "th3_k0",
            Theorem::Th3KPos => "th3_kpos",
        }
    }

    pub fn parity(self) -> Parity {
        match self {
            Theorem::Th2K1 => Parity::Odd,
            _ => Parity::Even,
        }
    }

    /// Indices into [`MatchingParameters::to_array`] that are free.
    pub fn active_parameters(self) -> &'static [usize] {
        match self {
            Theorem::Th1 | Theorem::Th3KPos => &[2, 3],
            Theorem::Th2K1 | Theorem::Th2K2 => &[0, 1, 2, 3, 4, 5, 6, 7],
            Theorem::Th3K0 => &[2],
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown configuration '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GluingConfig {
    pub theorem: Theorem,
    pub genus: usize,
    pub eps: f64,
    /// Largest admissible ε.
    pub eps_max: f64,
    /// Highest matched Fourier mode N.
    pub truncation: usize,
    /// Stop once successive iterates differ by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// k in the trust region (parameter and data norms) ≤ kε.
    pub trust_radius: f64,
    /// Θ for th1; derived from the KMR period for th3.
    pub scherk_directions: Option<[f64; 2]>,
    /// σ of the KMR example; ε/2 by default.
    pub kmr_sigma: Option<f64>,
    /// α (th2_K2) or β (th2_K1); ε/4 by default.
    pub kmr_angle: Option<f64>,
    /// Radial grid size for Scherk-type solves.
    pub scherk_nt: usize,
}

impl GluingConfig {
    pub fn new(theorem: Theorem, eps: f64) -> Self {
        Self {
            theorem,
            genus: if theorem == Theorem::Th3K0 { 0 } else { 1 },
            eps,
            eps_max: 1e-2,
            truncation: 16,
            tolerance: 1e-9,
            max_iterations: 50,
            trust_radius: 10.0,
            scherk_directions: None,
            kmr_sigma: None,
            kmr_angle: None,
            scherk_nt: 401,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= self.eps_max) {
            return Err(Error::Scale(format!("eps = {} must lie in (0, {}]", self.eps, self.eps_max)));
        }
        if self.truncation < 2 {
            return Err(Error::Domain(format!("truncation must be at least 2, got {}", self.truncation)));
        }
        match (self.theorem, self.genus) {
            (Theorem::Th3K0, 0) => {}
            (Theorem::Th3K0, g) => return Err(Error::Domain(format!("th3_k0 is the genus 0 case, got genus {g}"))),
            (t, 0) => return Err(Error::Domain(format!("{t} needs genus at least 1"))),
            _ => {}
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 || !(self.trust_radius > 0.0) {
            return Err(Error::Domain("tolerance, iteration cap and trust radius must be positive".into()));
        }
        if self.scherk_nt < 16 {
            return Err(Error::Domain(format!("scherk_nt must be at least 16, got {}", self.scherk_nt)));
        }
        Ok(())
    }

    fn samples(&self) -> usize {
        SEAM_SAMPLES.max((4 * (self.truncation + 1)).next_power_of_two())
    }
}

/// (λ_t, λ_b, η_t, η_b, ξ̄_t, ξ̄_b, κ̄_t, κ̄_b) with η_t = d_t − σ_t, η_b = d_b + σ_b,
/// ξ̄ = (1+λ)ξ / r_ε and κ̄ = r_ε κ.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchingParameters {
    pub lambda_t: f64,
    pub lambda_b: f64,
    pub eta_t: f64,
    pub eta_b: f64,
    pub xi_bar_t: f64,
    pub xi_bar_b: f64,
    pub kappa_bar_t: f64,
    pub kappa_bar_b: f64,
}

pub const PARAMETER_NAMES: [&str; 8] =
    ["lambda_t", "lambda_b", "eta_t", "eta_b", "xi_bar_t", "xi_bar_b", "kappa_bar_t", "kappa_bar_b"];

impl MatchingParameters {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.lambda_t,
            self.lambda_b,
            self.eta_t,
            self.eta_b,
            self.xi_bar_t,
            self.xi_bar_b,
            self.kappa_bar_t,
            self.kappa_bar_b,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            lambda_t: a[0],
            lambda_b: a[1],
            eta_t: a[2],
            eta_b: a[3],
            xi_bar_t: a[4],
            xi_bar_b: a[5],
            kappa_bar_t: a[6],
            kappa_bar_b: a[7],
        }
    }

    /// |λ_t| + |λ_b| + |η̄_t| + |η̄_b| + |ξ̄_t| + |ξ̄_b| + |κ̄_t + r_ε b| + |κ̄_b + r_ε b| for bend b.
    pub fn trust_norm(&self, eps: f64, bend: f64) -> f64 {
        let r = seam_radius(eps);
        let l = (2.0 * r).ln();
        self.lambda_t.abs()
            + self.lambda_b.abs()
            + (-self.lambda_t * l + self.eta_t).abs()
            + (self.lambda_b * l + self.eta_b).abs()
            + self.xi_bar_t.abs()
            + self.xi_bar_b.abs()
            + (self.kappa_bar_t + r * bend).abs()
            + (self.kappa_bar_b + r * bend).abs()
    }
}

/// Mode-wise mismatch U_inner − U_outer on the seam circle.
#[derive(Debug, Clone, PartialEq)]
pub struct SeamGap {
    /// Modes 1..=N of the value gap in the configuration's family (coefficient 0 holds the mean for even data).
    pub value: FourierBoundary,
    /// Same for r∂_r.
    pub slope: FourierBoundary,
    pub value_mean: f64,
    pub slope_mean: f64,
    /// Energy Σ(c²/2) of the other trigonometric family, value and slope together.
    pub off_parity: f64,
    /// Energy of modes above N, value and slope together.
    pub above_truncation: f64,
    /// sup |U − Ū|.
    pub c0: f64,
    /// max(sup |U − Ū|, sup |r∂_r(U − Ū)|, sup |∂_θ(U − Ū)|).
    pub c1: f64,
}

impl SeamGap {
    fn from_samples(parity: Parity, dv: &[f64], ds: &[f64], truncation: usize) -> Result<Self> {
        let n = dv.len();
        let split = |row: &[f64]| -> (Vec<f64>, f64, f64) {
            let modes = row_modes(row);
            let mut own = vec![0.0; truncation + 1];
            let (mut off, mut high) = (0.0, 0.0);
            for (j, (a, b)) in modes.iter().enumerate() {
                let (mine, other) = match parity {
                    Parity::Even => (*a, *b),
                    Parity::Odd => (*b, *a),
                };
                if j == 0 {
                    own[0] = if parity == Parity::Even { *a } else { 0.0 };
                    continue;
                }
                if j <= truncation {
                    own[j] = mine;
                    off += 0.5 * other * other;
                } else {
                    high += 0.5 * (a * a + b * b);
                }
            }
            (own, off, high)
        };
        let (vc, voff, vhigh) = split(dv);
        let (sc, soff, shigh) = split(ds);
        let mean = |x: &[f64]| x.iter().sum::<f64>() / n as f64;
        // ∂_θ of the value gap, spectrally
        let modes = row_modes(dv);
        let dm: Vec<(f64, f64)> = modes
            .iter()
            .enumerate()
            .map(|(j, (a, b))| if 2 * j == n { (0.0, 0.0) } else { (j as f64 * b, -(j as f64) * a) })
            .collect();
        let mut dth = vec![0.0; n];
        row_synthesis(&dm, n, &mut dth);
        let sup = |x: &[f64]| x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let c0 = sup(dv);
        Ok(Self {
            value: FourierBoundary::new(parity, vc, Orthogonality::NONE)?,
            slope: FourierBoundary::new(parity, sc, Orthogonality::NONE)?,
            value_mean: mean(dv),
            slope_mean: mean(ds),
            off_parity: voff + soff,
            above_truncation: vhigh + shigh,
            c0,
            c1: c0.max(sup(ds)).max(sup(&dth)),
        })
    }

    /// Low-mode equations (value mean, slope mean, value first mode, slope first mode).
    pub fn low_modes(&self) -> [f64; 4] {
        [self.value_mean, self.slope_mean, self.value.coeff(1), self.slope.coeff(1)]
    }
}

/// Samples both graphs on r = r_ε and returns the Fourier content of the gaps up to mode N.
pub fn seam_mismatch(inner: &EndModel, outer: &EndModel, samples: usize, truncation: usize) -> Result<SeamGap> {
    if inner.parity() != outer.parity() {
        return Err(Error::Parity(format!(
            "{} carries {:?} data, {} carries {:?} data",
            inner.kind.name(),
            inner.parity(),
            outer.kind.name(),
            outer.parity()
        )));
    }
    if (inner.seam_radius - outer.seam_radius).abs() > 1e-12 * inner.seam_radius {
        return Err(Error::Domain("models live on different seam circles".into()));
    }
    if samples < 2 * truncation + 2 {
        return Err(Error::Domain(format!("{samples} samples cannot resolve {truncation} modes")));
    }
    let (vi, si) = inner.seam_trace(samples)?;
    let (vo, so) = outer.seam_trace(samples)?;
    let dv: Vec<f64> = vi.iter().zip(&vo).map(|(a, b)| a - b).collect();
    let ds: Vec<f64> = si.iter().zip(&so).map(|(a, b)| a - b).collect();
    SeamGap::from_samples(inner.parity(), &dv, &ds, truncation)
}

/// φ with ∂_θ φ = g for g ⊥ 1: c_j sin jθ ↦ −(c_j/j) cos jθ and c_j cos jθ ↦ (c_j/j) sin jθ.
pub fn invert_dtheta(g: &FourierBoundary) -> Result<FourierBoundary> {
    if g.parity() == Parity::Even && g.coeff(0) != 0.0 {
        return Err(Error::Orthogonality(format!("mean {} must vanish to invert the derivative", g.coeff(0))));
    }
    let (parity, sign) = match g.parity() {
        Parity::Odd => (Parity::Even, -1.0),
        Parity::Even => (Parity::Odd, 1.0),
    };
    let mut c = vec![0.0; g.truncation() + 1];
    for (j, cj) in c.iter_mut().enumerate().skip(1) {
        *cj = sign * g.coeff(j) / j as f64;
    }
    FourierBoundary::new(parity, c, Orthogonality::CONSTANT)
}

/// Harmonic conjugate on the circle: cos jθ ↦ sin jθ and sin jθ ↦ −cos jθ; constants dropped.
pub fn conjugate(g: &FourierBoundary) -> FourierBoundary {
    let (parity, sign) = match g.parity() {
        Parity::Even => (Parity::Odd, 1.0),
        Parity::Odd => (Parity::Even, -1.0),
    };
    let mut c = vec![0.0; g.truncation() + 1];
    for (j, cj) in c.iter_mut().enumerate().skip(1) {
        *cj = sign * g.coeff(j);
    }
    FourierBoundary::new(parity, c, Orthogonality::CONSTANT).expect("constant mode cleared")
}

/// Split of seam gaps into the span of {1, first mode} and its orthogonal complement.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingProjection {
    /// Per seam: (value mean, slope mean, value first mode, slope first mode).
    pub low: Vec<[f64; 4]>,
    /// Per seam: value and slope gaps with modes 0 and 1 removed.
    pub orthogonal: Vec<(FourierBoundary, FourierBoundary)>,
}

impl MatchingProjection {
    /// The equations of the first two seams, in the order of the parameter system.
    pub fn parameter_equations(&self) -> Vec<f64> {
        self.low.iter().take(2).flat_map(|l| l.iter().copied()).collect()
    }

    /// Value and slope gaps put back together (constant included in coefficient 0 for even data).
    pub fn recombine(&self) -> Vec<(FourierBoundary, FourierBoundary)> {
        self.low
            .iter()
            .zip(&self.orthogonal)
            .map(|(l, (v, s))| {
                let put = |b: &FourierBoundary, mean: f64, first: f64| {
                    let mut c = b.coeffs().to_vec();
                    if b.parity() == Parity::Even {
                        c[0] = mean;
                    }
                    c[1] = first;
                    FourierBoundary::new(b.parity(), c, Orthogonality::NONE).expect("parity respected")
                };
                (put(v, l[0], l[2]), put(s, l[1], l[3]))
            })
            .collect()
    }
}

pub fn project_matching(gaps: &[SeamGap]) -> MatchingProjection {
    let strip = |b: &FourierBoundary| {
        let mut c = b.coeffs().to_vec();
        c[0] = 0.0;
        c[1] = 0.0;
        FourierBoundary::new(b.parity(), c, Orthogonality::LOW_EIGEN).expect("low modes cleared")
    };
    MatchingProjection {
        low: gaps.iter().map(SeamGap::low_modes).collect(),
        orthogonal: gaps.iter().map(|g| (strip(&g.value), strip(&g.slope))).collect(),
    }
}

// ---------------------------------------------------------------------------
// Configurations

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeamName {
    Top,
    Bottom,
    Middle,
}

impl SeamName {
    pub fn name(self) -> &'static str {
        match self {
            SeamName::Top => "top",
            SeamName::Bottom => "bottom",
            SeamName::Middle => "middle",
        }
    }
}

/// How the matching parameters enter a model.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Fixed,
    /// Offset η of the given seam.
    Offset(SeamName),
    /// −(1+λ) ln 2r (top) or (1+λ) ln 2r (bottom), free tilt, translation, offset and dilation.
    KmrShape(SeamName, TiltAxis),
}

#[derive(Debug, Clone)]
struct SeamSetup {
    name: SeamName,
    inner: EndModel,
    outer: EndModel,
    inner_role: Role,
    outer_role: Role,
}

fn apply_role(model: &mut EndModel, role: Role, p: &MatchingParameters) {
    let r = model.seam_radius;
    match role {
        Role::Fixed => {}
        Role::Offset(SeamName::Top) => model.expansion.offset = p.eta_t,
        Role::Offset(_) => model.expansion.offset = p.eta_b,
        Role::KmrShape(seam, axis) => {
            let (lam, eta, xib, kb, sign) = match seam {
                SeamName::Top => (p.lambda_t, p.eta_t, p.xi_bar_t, p.kappa_bar_t, -1.0),
                _ => (p.lambda_b, p.eta_b, p.xi_bar_b, p.kappa_bar_b, 1.0),
            };
            let pair = |x: f64| match axis {
                TiltAxis::Cos => (x, 0.0),
                TiltAxis::Sin => (0.0, x),
            };
            model.expansion.log_coeff = sign * (1.0 + lam);
            model.expansion.tilt = pair(kb / r);
            model.expansion.translation = pair(-xib * r);
            model.expansion.offset = eta;
            if let Remainder::Kmr { dilation, .. } = &mut model.remainder {
                *dilation = 1.0 + lam;
            }
        }
    }
}

fn kmr_params(cfg: &GluingConfig) -> Result<SurfaceParams> {
    let sigma = cfg.kmr_sigma.unwrap_or(cfg.eps / 2.0);
    let angle = cfg.kmr_angle.unwrap_or(cfg.eps / 4.0);
    match cfg.theorem {
        Theorem::Th2K2 => SurfaceParams::new(sigma, angle, 0.0),
        Theorem::Th2K1 => SurfaceParams::new(sigma, 0.0, angle),
        _ => SurfaceParams::new(sigma, 0.0, 0.0),
    }
}

fn scherk_problem(cfg: &GluingConfig, theta: [f64; 2], period: Option<f64>) -> ScherkProblem {
    let zero = FourierBoundary::zero(Parity::Even, cfg.truncation, Orthogonality::CONSTANT);
    let mut p = ScherkProblem::new(theta, period, cfg.eps, &zero);
    p.nt = cfg.scherk_nt;
    p
}

/// Directions (θ, θ) whose flux normalization reproduces the period |T|.
fn directions_for_period(period: f64, eps: f64) -> Result<[f64; 2]> {
    let s = PI / period;
    if !(s < 1.0) {
        return Err(Error::Scale(format!("period {period} is too short for Scherk-type ends")));
    }
    let th = s.asin();
    if th >= eps {
        return Err(Error::Scale(format!("direction {th} derived from period {period} is not below eps = {eps}")));
    }
    Ok([th, th])
}

fn flat_model(cfg: &GluingConfig, period: f64, parity: Parity) -> Result<EndModel> {
    let zero = FourierBoundary::zero(parity, cfg.truncation, Orthogonality::CONSTANT);
    let mut p = ScherkProblem::new([0.0, 0.0], Some(period), cfg.eps, &zero);
    p.nt = cfg.scherk_nt;
    scherk_end(Orientation::Up, &p)
}

fn chm(cfg: &GluingConfig, end: ChmEnd, shape: ChmShape) -> Result<EndModel> {
    let rule = match end {
        ChmEnd::Middle => DressingRule::InverseRadius,
        _ => DressingRule::HalfCylinderInward,
    };
    let zero = FourierBoundary::zero(shape.axis.parity(), cfg.truncation, rule.flags());
    chm_end_model(end, cfg.eps, &zero, shape)
}

fn kmr(cfg: &GluingConfig, params: &SurfaceParams, family: KmrFamily, place: KmrPlacement) -> Result<EndModel> {
    let parity = match family {
        KmrFamily::Beta0 => Parity::Even,
        KmrFamily::Alpha0 => Parity::Odd,
    };
    let zero = FourierBoundary::zero(parity, cfg.truncation, place.rule.flags());
    kmr_end_model(family, params, 0.0, [0.0, 0.0], 0.0, &zero, cfg.eps, place)
}

fn build_layout(cfg: &GluingConfig) -> Result<(Vec<SeamSetup>, f64)> {
    let eps = cfg.eps;
    let straight = ChmShape::straight();
    let setup = |name, inner, outer, inner_role, outer_role| SeamSetup { name, inner, outer, inner_role, outer_role };
    Ok(match cfg.theorem {
        Theorem::Th1 => {
            let theta = cfg.scherk_directions.unwrap_or([eps / 4.0, eps / 4.0]);
            let ((up, down), flat) = rayon::join(
                || {
                    rayon::join(
                        || scherk_end(Orientation::Up, &scherk_problem(cfg, theta, None)),
                        || scherk_end(Orientation::Down, &scherk_problem(cfg, theta, None)),
                    )
                },
                || {
                    let period = scherk_problem(cfg, theta, None).resolved_period()?;
                    flat_model(cfg, period, Parity::Even)
                },
            );
            let seams = vec![
                setup(SeamName::Top, chm(cfg, ChmEnd::Top, straight)?, up?, Role::Fixed, Role::Offset(SeamName::Top)),
                setup(SeamName::Bottom, chm(cfg, ChmEnd::Bottom, straight)?, down?, Role::Fixed, Role::Offset(SeamName::Bottom)),
                setup(SeamName::Middle, chm(cfg, ChmEnd::Middle, straight)?, flat?, Role::Fixed, Role::Fixed),
            ];
            (seams, 0.0)
        }
        Theorem::Th2K1 | Theorem::Th2K2 => {
            let (axis, family) = if cfg.theorem == Theorem::Th2K1 {
                (TiltAxis::Sin, KmrFamily::Alpha0)
            } else {
                (TiltAxis::Cos, KmrFamily::Beta0)
            };
            let params = kmr_params(cfg)?;
            let period = params.end_period_norm()?;
            let bent = ChmShape { level: 0.0, bend: 0.5 * eps, axis };
            let top_place = KmrPlacement { side: Side::Outer, reflected: false, rule: DressingRule::ShiftedLog };
            let bottom_place = KmrPlacement { reflected: true, ..top_place };
            let middle_inner = {
                let zero = FourierBoundary::zero(axis.parity(), cfg.truncation, Orthogonality::CONSTANT);
                chm_end_model(ChmEnd::Middle, eps, &zero, bent)?
            };
            let flat = flat_model(cfg, period, axis.parity())?;
            let seams = vec![
                setup(
                    SeamName::Top,
                    chm(cfg, ChmEnd::Top, bent)?,
                    kmr(cfg, &params, family, top_place)?,
                    Role::Fixed,
                    Role::KmrShape(SeamName::Top, axis),
                ),
                setup(
                    SeamName::Bottom,
                    chm(cfg, ChmEnd::Bottom, bent)?,
                    kmr(cfg, &params, family, bottom_place)?,
                    Role::Fixed,
                    Role::KmrShape(SeamName::Bottom, axis),
                ),
                setup(SeamName::Middle, middle_inner, flat, Role::Fixed, Role::Fixed),
            ];
            (seams, 0.5 * eps)
        }
        Theorem::Th3K0 => {
            let params = kmr_params(cfg)?;
            let theta = match cfg.scherk_directions {
                Some(t) => t,
                None => directions_for_period(params.end_period_norm()?, eps)?,
            };
            let inner_place = KmrPlacement { side: Side::Inner, reflected: false, rule: DressingRule::HalfCylinderInward };
            let mut up = scherk_end(Orientation::Up, &scherk_problem(cfg, theta, None))?;
            up.expansion.offset = 0.0;
            let seams = vec![setup(
                SeamName::Top,
                kmr(cfg, &params, KmrFamily::Beta0, inner_place)?,
                up,
                Role::Offset(SeamName::Top),
                Role::Fixed,
            )];
            (seams, 0.0)
        }
        Theorem::Th3KPos => {
            let params = kmr_params(cfg)?;
            let period = params.end_period_norm()?;
            let theta = match cfg.scherk_directions {
                Some(t) => t,
                None => directions_for_period(period, eps)?,
            };
            let top_place = KmrPlacement { side: Side::Outer, reflected: false, rule: DressingRule::Exterior };
            let (down, flat) = rayon::join(
                || scherk_end(Orientation::Down, &scherk_problem(cfg, theta, None)),
                || flat_model(cfg, period, Parity::Even),
            );
            let seams = vec![
                setup(
                    SeamName::Top,
                    chm(cfg, ChmEnd::Top, straight)?,
                    kmr(cfg, &params, KmrFamily::Beta0, top_place)?,
                    Role::Fixed,
                    Role::Offset(SeamName::Top),
                ),
                setup(SeamName::Bottom, chm(cfg, ChmEnd::Bottom, straight)?, down?, Role::Fixed, Role::Offset(SeamName::Bottom)),
                setup(SeamName::Middle, chm(cfg, ChmEnd::Middle, straight)?, flat?, Role::Fixed, Role::Fixed),
            ];
            (seams, 0.0)
        }
    })
}

// ---------------------------------------------------------------------------
// Matching engine

/// Boundary data, final models and residuals of one seam.
#[derive(Debug, Clone)]
pub struct SeamState {
    pub name: SeamName,
    pub inner_kind: &'static str,
    pub outer_kind: &'static str,
    /// ψ: data of the inner graph.
    pub inner_data: FourierBoundary,
    /// φ: data of the outer graph.
    pub outer_data: FourierBoundary,
    /// Inner graph realized with the final parameters and data.
    pub inner: EndModel,
    pub outer: EndModel,
    pub c0_residual: f64,
    pub c1_residual: f64,
    pub off_parity: f64,
    pub above_truncation: f64,
}

/// One row of the matching trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingIterate {
    pub iteration: usize,
    pub param_norm: f64,
    pub data_norm: f64,
    pub c0_residual: f64,
    pub c1_residual: f64,
    /// Largest change of any parameter or data coefficient in the step that followed.
    pub update_norm: f64,
    /// Largest change of a data coefficient in the step that followed.
    pub data_change: f64,
    /// Change of the data in this step over the change in the previous one.
    pub data_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct MatchingState {
    pub theorem: Option<Theorem>,
    pub eps: f64,
    pub seam_radius: f64,
    pub parameters: MatchingParameters,
    pub seams: Vec<SeamState>,
    pub trace: Vec<MatchingIterate>,
    pub converged: bool,
}

impl MatchingState {
    pub fn c0_residual(&self) -> f64 {
        self.seams.iter().map(|s| s.c0_residual).fold(0.0, f64::max)
    }

    pub fn c1_residual(&self) -> f64 {
        self.seams.iter().map(|s| s.c1_residual).fold(0.0, f64::max)
    }

    /// C with C¹ residual = C·ε.
    pub fn residual_constant(&self) -> f64 {
        self.c1_residual() / self.eps
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// Largest ratio of successive data changes, ignoring steps at round-off level.
    pub fn data_lipschitz(&self) -> f64 {
        self.trace
            .iter()
            .filter(|t| t.data_ratio.is_finite() && t.data_change > 1e-12)
            .map(|t| t.data_ratio)
            .fold(0.0, f64::max)
    }

    pub fn trace_csv(&self) -> String {
        matching_trace_csv(&self.trace)
    }

    /// Plain key = value report of the final state.
    pub fn report(&self) -> String {
        let mut out = String::new();
        if let Some(t) = self.theorem {
            out.push_str(&format!("configuration = {t}\n"));
        }
        out.push_str(&format!("eps = {:e}\nseam_radius = {:.12e}\n", self.eps, self.seam_radius));
        out.push_str(&format!("converged = {}\niterations = {}\n", self.converged, self.iterations()));
        for (n, v) in PARAMETER_NAMES.iter().zip(self.parameters.to_array()) {
            out.push_str(&format!("{n} = {v:.12e}\n"));
        }
        for s in &self.seams {
            let n = s.name.name();
            out.push_str(&format!("[{n}] inner = {}, outer = {}\n", s.inner_kind, s.outer_kind));
            out.push_str(&format!("[{n}] inner_data = {}\n", fmt_coeffs(&s.inner_data)));
            out.push_str(&format!("[{n}] outer_data = {}\n", fmt_coeffs(&s.outer_data)));
            out.push_str(&format!(
                "[{n}] c0_residual = {:.6e}, c1_residual = {:.6e}, off_parity = {:.6e}, above_truncation = {:.6e}\n",
                s.c0_residual, s.c1_residual, s.off_parity, s.above_truncation
            ));
        }
        out.push_str(&format!("c1_residual = {:.6e}\nresidual_constant = {:.6e}\n", self.c1_residual(), self.residual_constant()));
        out
    }
}

fn fmt_coeffs(b: &FourierBoundary) -> String {
    let family = match b.parity() {
        Parity::Even => "cos",
        Parity::Odd => "sin",
    };
    let body: Vec<String> = b.coeffs().iter().map(|c| format!("{c:.6e}")).collect();
    format!("{family}[{}]", body.join(", "))
}

pub fn matching_trace_csv(trace: &[MatchingIterate]) -> String {
    let mut out = String::from("iter,param_norm,data_norm,c0_residual,c1_residual\n");
    for t in trace {
        out.push_str(&format!(
            "{},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            t.iteration, t.param_norm, t.data_norm, t.c0_residual, t.c1_residual
        ));
    }
    out
}

/// A low-mode data coefficient solved together with the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LowData {
    seam: usize,
    side: Side,
}

struct Engine {
    theorem: Option<Theorem>,
    eps: f64,
    truncation: usize,
    samples: usize,
    parity: Parity,
    seams: Vec<SeamSetup>,
    active: Vec<usize>,
    low_data: Vec<LowData>,
    /// Seams whose first mode is free on both sides.
    first_in_data_step: Vec<bool>,
    bend: f64,
}

fn first_free(model: &EndModel) -> bool {
    model.rule.flags().first_free_mode() <= 1
}

/// Current data of both sides of every seam.
type Data = Vec<(FourierBoundary, FourierBoundary)>;

impl Engine {
    fn new(theorem: Option<Theorem>, eps: f64, truncation: usize, samples: usize, seams: Vec<SeamSetup>, active: Vec<usize>, bend: f64) -> Self {
        let parity = seams[0].inner.parity();
        let mut low_data = Vec::new();
        let mut both = Vec::new();
        for (k, s) in seams.iter().enumerate() {
            let (fi, fo) = (first_free(&s.inner), first_free(&s.outer));
            both.push(fi && fo);
            if fi != fo {
                low_data.push(LowData { seam: k, side: if fi { Side::Inner } else { Side::Outer } });
            }
        }
        Self { theorem, eps, truncation, samples, parity, seams, active, low_data, first_in_data_step: both, bend }
    }

    fn zero_data(&self) -> Data {
        self.seams
            .iter()
            .map(|s| {
                (
                    FourierBoundary::zero(self.parity, self.truncation, s.inner.rule.flags()),
                    FourierBoundary::zero(self.parity, self.truncation, s.outer.rule.flags()),
                )
            })
            .collect()
    }

    /// Models with the given parameters and data; remainders taken from `base`.
    fn realize(&self, base: &[(EndModel, EndModel)], p: &MatchingParameters, data: &Data) -> Result<Vec<(EndModel, EndModel)>> {
        base.iter()
            .zip(&self.seams)
            .zip(data)
            .map(|(((bi, bo), s), (di, dout))| {
                let mut i = if bi.data == *di { bi.clone() } else { bi.with_frozen_remainder(di)? };
                let mut o = if bo.data == *dout { bo.clone() } else { bo.with_frozen_remainder(dout)? };
                apply_role(&mut i, s.inner_role, p);
                apply_role(&mut o, s.outer_role, p);
                Ok((i, o))
            })
            .collect()
    }

    /// Re-solves data-dependent remainders (Scherk-type ends) for new data.
    fn refresh(&self, base: &[(EndModel, EndModel)], data: &Data) -> Result<Vec<(EndModel, EndModel)>> {
        base.par_iter()
            .zip(data.par_iter())
            .map(|((bi, bo), (di, dout))| {
                let i = if bi.data == *di { bi.clone() } else { bi.with_data(di)? };
                let o = if bo.data == *dout { bo.clone() } else { bo.with_data(dout)? };
                Ok((i, o))
            })
            .collect()
    }

    fn gaps(&self, models: &[(EndModel, EndModel)]) -> Result<Vec<SeamGap>> {
        models.par_iter().map(|(i, o)| seam_mismatch(i, o, self.samples, self.truncation)).collect()
    }

    /// Closed-form update of every mode matched by data on both sides.
    fn data_step(&self, gaps: &[SeamGap], data: &Data) -> Result<Data> {
        let mut out = Vec::with_capacity(data.len());
        for (k, (g, (psi, phi))) in gaps.iter().zip(data).enumerate() {
            let lo = if self.first_in_data_step[k] { 1 } else { 2 };
            // parts of the gaps not produced by the current data
            let mut rv = vec![0.0; self.truncation + 1];
            let mut rs = vec![0.0; self.truncation + 1];
            for j in lo..=self.truncation {
                let fj = j as f64;
                rv[j] = g.value.coeff(j) - (psi.coeff(j) - phi.coeff(j));
                rs[j] = g.slope.coeff(j) - fj * (psi.coeff(j) + phi.coeff(j));
            }
            // ψ + φ from the slope equations through the inverse of ∂_θ, ψ − φ from the values
            let sum = invert_dtheta(&conjugate(&FourierBoundary::new(self.parity, rs, Orthogonality::NONE)?))?;
            let mut new_psi = psi.clone();
            let mut new_phi = phi.clone();
            for j in lo..=self.truncation {
                let s = sum.coeff(j);
                let d = -rv[j];
                new_psi.set_coeff(j, 0.5 * (s + d))?;
                new_phi.set_coeff(j, 0.5 * (s - d))?;
            }
            out.push((new_psi, new_phi));
        }
        Ok(out)
    }

    fn unknowns(&self, p: &MatchingParameters, data: &Data) -> Vec<f64> {
        let a = p.to_array();
        let mut u: Vec<f64> = self.active.iter().map(|&i| a[i]).collect();
        for l in &self.low_data {
            let d = match l.side {
                Side::Inner => &data[l.seam].0,
                Side::Outer => &data[l.seam].1,
            };
            u.push(d.coeff(1));
        }
        u
    }

    fn assign(&self, u: &[f64], p: &MatchingParameters, data: &Data) -> Result<(MatchingParameters, Data)> {
        let mut a = p.to_array();
        for (k, &i) in self.active.iter().enumerate() {
            a[i] = u[k];
        }
        let mut d = data.clone();
        for (k, l) in self.low_data.iter().enumerate() {
            let target = match l.side {
                Side::Inner => &mut d[l.seam].0,
                Side::Outer => &mut d[l.seam].1,
            };
            target.set_coeff(1, u[self.active.len() + k])?;
        }
        Ok((MatchingParameters::from_array(a), d))
    }

    fn low_residual(&self, base: &[(EndModel, EndModel)], u: &[f64], p: &MatchingParameters, data: &Data) -> Result<Vec<f64>> {
        let (q, d) = self.assign(u, p, data)?;
        let models = self.realize(base, &q, &d)?;
        Ok(self.gaps(&models)?.iter().flat_map(|g| g.low_modes()).collect())
    }

    /// Damped Gauss-Newton on the low modes, remainders frozen.
    fn parameter_step(&self, base: &[(EndModel, EndModel)], p: &MatchingParameters, data: &Data) -> Result<(MatchingParameters, Data)> {
        let mut u = self.unknowns(p, data);
        if u.is_empty() {
            return Ok((*p, data.clone()));
        }
        let norm = |f: &[f64]| f.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut f = self.low_residual(base, &u, p, data)?;
        for _ in 0..5 {
            let m = f.len();
            let n = u.len();
            let mut jac = DMatrix::zeros(m, n);
            for c in 0..n {
                let h = 1e-7 * (1.0 + u[c].abs());
                let mut up = u.clone();
                up[c] += h;
                let fp = self.low_residual(base, &up, p, data)?;
                for r in 0..m {
                    jac[(r, c)] = (fp[r] - f[r]) / h;
                }
            }
            let rhs = DVector::from_iterator(m, f.iter().map(|x| -x));
            let step = jac
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::Domain(format!("least-squares solve failed: {e}")))?;
            let f0 = norm(&f);
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..=5 {
                let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + scale * b).collect();
                let ft = self.low_residual(base, &trial, p, data)?;
                if norm(&ft) < f0 {
                    accepted = Some((trial, ft));
                    break;
                }
                scale *= 0.5;
            }
            let Some((nu, nf)) = accepted else { break };
            let moved = nu.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            u = nu;
            f = nf;
            if moved < 1e-14 {
                break;
            }
        }
        self.assign(&u, p, data)
    }

    fn data_norm(data: &Data) -> f64 {
        data.iter().map(|(a, b)| a.sup_norm() + b.sup_norm()).sum()
    }

    fn change(a: &Data, b: &Data) -> f64 {
        a.iter()
            .zip(b)
            .flat_map(|((a1, a2), (b1, b2))| {
                let n = a1.truncation().max(b1.truncation()) + 1;
                (0..n).map(move |j| (a1.coeff(j) - b1.coeff(j)).abs().max((a2.coeff(j) - b2.coeff(j)).abs()))
            })
            .fold(0.0, f64::max)
    }

    fn run(&self, initial: MatchingParameters, tolerance: f64, max_iterations: usize, trust: f64) -> Result<MatchingState> {
        let mut params = initial;
        let mut data = self.zero_data();
        let mut base: Vec<(EndModel, EndModel)> = self.seams.iter().map(|s| (s.inner.clone(), s.outer.clone())).collect();
        let mut trace: Vec<MatchingIterate> = Vec::new();
        let mut prev_data_change = f64::NAN;
        let mut converged = false;
        let mut final_gaps = Vec::new();
        let mut final_models = Vec::new();
        for it in 1..=max_iterations {
            base = self.refresh(&base, &data)?;
            let models = self.realize(&base, &params, &data)?;
            let gaps = self.gaps(&models)?;
            let c0 = gaps.iter().map(|g| g.c0).fold(0.0, f64::max);
            let c1 = gaps.iter().map(|g| g.c1).fold(0.0, f64::max);
            let pnorm = params.trust_norm(self.eps, self.bend);
            let dnorm = Self::data_norm(&data);
            if !(c1.is_finite()) {
                return Err(Error::NoConvergence { iterations: it, detail: "non-finite seam residual".into() });
            }
            if pnorm + dnorm > trust * self.eps {
                return Err(Error::TrustRegion(format!(
                    "parameter norm {pnorm:.3e} plus data norm {dnorm:.3e} exceeds {trust} eps at iteration {it}"
                )));
            }
            final_gaps = gaps.clone();
            final_models = models;
            if let Some(last) = trace.last() {
                if last.update_norm < tolerance {
                    trace.push(MatchingIterate {
                        iteration: it,
                        param_norm: pnorm,
                        data_norm: dnorm,
                        c0_residual: c0,
                        c1_residual: c1,
                        update_norm: 0.0,
                        data_change: 0.0,
                        data_ratio: f64::NAN,
                    });
                    converged = true;
                    break;
                }
            }
            let new_data = self.data_step(&gaps, &data)?;
            let (new_params, new_data) = self.parameter_step(&base, &params, &new_data)?;
            let dchange = Self::change(&new_data, &data);
            let pchange = new_params
                .to_array()
                .iter()
                .zip(params.to_array())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            trace.push(MatchingIterate {
                iteration: it,
                param_norm: pnorm,
                data_norm: dnorm,
                c0_residual: c0,
                c1_residual: c1,
                update_norm: dchange.max(pchange),
                data_change: dchange,
                data_ratio: dchange / prev_data_change,
            });
            prev_data_change = dchange;
            params = new_params;
            data = new_data;
        }
        let state = MatchingState {
            theorem: self.theorem,
            eps: self.eps,
            seam_radius: seam_radius(self.eps),
            parameters: params,
            seams: self
                .seams
                .iter()
                .zip(&data)
                .zip(&final_gaps)
                .zip(final_models)
                .map(|(((s, (di, dout)), g), (inner, outer))| SeamState {
                    name: s.name,
                    inner_kind: s.inner.kind.name(),
                    outer_kind: s.outer.kind.name(),
                    inner_data: di.clone(),
                    outer_data: dout.clone(),
                    inner,
                    outer,
                    c0_residual: g.c0,
                    c1_residual: g.c1,
                    off_parity: g.off_parity,
                    above_truncation: g.above_truncation,
                })
                .collect(),
            trace,
            converged,
        };
        if !converged {
            return Err(Error::NoConvergence { iterations: max_iterations, detail: state.trace_csv() });
        }
        Ok(state)
    }
}

/// Alternates the closed-form data step and the damped Gauss-Newton parameter step.
pub fn solve_matching(config: &GluingConfig) -> Result<MatchingState> {
    config.validate()?;
    let (seams, bend) = build_layout(config)?;
    let engine = Engine::new(
        Some(config.theorem),
        config.eps,
        config.truncation,
        config.samples(),
        seams,
        config.theorem.active_parameters().to_vec(),
        bend,
    );
    let r = seam_radius(config.eps);
    // start from the unperturbed tilts: κ = −bend so that κ̄ + r_ε·bend = 0
    let initial = MatchingParameters { kappa_bar_t: -r * bend, kappa_bar_b: -r * bend, ..Default::default() };
    engine.run(initial, config.tolerance, config.max_iterations, config.trust_radius)
}

/// Matches every model of the th1 configuration against itself.
pub fn self_test(eps: f64, truncation: usize) -> Result<MatchingState> {
    let mut cfg = GluingConfig::new(Theorem::Th1, eps);
    cfg.truncation = truncation;
    cfg.validate()?;
    let (seams, _) = build_layout(&cfg)?;
    let paired: Vec<SeamSetup> = seams
        .into_iter()
        .flat_map(|s| {
            [
                SeamSetup { name: s.name, inner: s.inner.clone(), outer: s.inner, inner_role: Role::Fixed, outer_role: Role::Fixed },
                SeamSetup { name: s.name, inner: s.outer.clone(), outer: s.outer, inner_role: Role::Fixed, outer_role: Role::Fixed },
            ]
        })
        .collect();
    let engine = Engine::new(None, eps, truncation, cfg.samples(), paired, Vec::new(), 0.0);
    engine.run(MatchingParameters::default(), cfg.tolerance, cfg.max_iterations, cfg.trust_radius)
}
