//! Vertical-graph models of every end taken part in a gluing: the catenoidal and
//! planar ends of the Costa-Hoffman-Meeks type piece, Scherk-type ends, the flat
//! periodic annulus and KMR boundary graphs.
//!
//! Each model is an explicit expansion plus a harmonic dressing of its boundary
//! data plus a concrete remainder taken from an actual surface: the exact
//! rotated catenoid, the Weierstrass graph of the KMR example, or the solved
//! nonlinear correction of a Scherk-type end. Mean-curvature residuals and
//! flux integrals live here too.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harmonic::{extend_exterior, extend_halfcylinder, extend_shifted, FourierBoundary, Orthogonality, Parity, ShiftedBasis};
use crate::jacobi::{dirichlet_exterior_solve, row_modes, row_synthesis, ExteriorGrid};
use crate::kmr::{
    catenoidal_expansion, Dressing, GraphExpansion, GraphSampler, RadialCoordinate, SurfaceParams, EXPANSION_BUDGET_CONSTANT,
};

/// Seam circle samples used for traces and mismatches.
pub const SEAM_SAMPLES: usize = 128;
/// κ in the size condition ‖φ‖ ≤ κε on boundary data.
pub const DATA_BOUND: f64 = 10.0;
/// Stopping threshold on successive Scherk iterates.
pub const SCHERK_TOLERANCE: f64 = 1e-10;
pub const SCHERK_MAX_ITERATIONS: usize = 200;

/// r_ε = ½ε^{−1/2}.
pub fn seam_radius(eps: f64) -> f64 {
    0.5 / eps.sqrt()
}

/// s_ε = −½ ln ε.
pub fn log_scale(eps: f64) -> f64 {
    -0.5 * eps.ln()
}

/// ρ_ε = 2ε^{1/2} = 1/r_ε.
pub fn inverted_radius(eps: f64) -> f64 {
    2.0 * eps.sqrt()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("scale must lie in (0,1), got {eps}")));
    }
    Ok(())
}

fn check_size(data: &FourierBoundary, eps: f64) -> Result<()> {
    let n = data.sup_norm();
    if n > DATA_BOUND * eps {
        return Err(Error::Scale(format!("boundary data sup norm {n:.3e} exceeds {DATA_BOUND} eps = {:.3e}", DATA_BOUND * eps)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndKind {
    ChmTop,
    ChmBottom,
    ChmMiddle,
    ScherkUp,
    ScherkDown,
    FlatAnnulus,
    KmrTopBeta0,
    KmrTopAlpha0,
    /// Reflection of the β = 0 top graph through a horizontal plane.
    KmrBottomBeta0,
    KmrBottomAlpha0,
}

impl EndKind {
    /// Sign of the ln 2r coefficient before dilation.
    pub fn log_sign(self) -> f64 {
        match self {
            EndKind::ChmTop | EndKind::ScherkUp | EndKind::KmrTopBeta0 | EndKind::KmrTopAlpha0 => -1.0,
            EndKind::ChmBottom | EndKind::ScherkDown | EndKind::KmrBottomBeta0 | EndKind::KmrBottomAlpha0 => 1.0,
            EndKind::ChmMiddle | EndKind::FlatAnnulus => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EndKind::ChmTop => "chm_top",
            EndKind::ChmBottom => "chm_bottom",
            EndKind::ChmMiddle => "chm_middle",
            EndKind::ScherkUp => "scherk_up",
            EndKind::ScherkDown => "scherk_down",
            EndKind::FlatAnnulus => "flat_annulus",
            EndKind::KmrTopBeta0 => "kmr_top_beta0",
            EndKind::KmrTopAlpha0 => "kmr_top_alpha0",
            EndKind::KmrBottomBeta0 => "kmr_bottom_beta0",
            EndKind::KmrBottomAlpha0 => "kmr_bottom_alpha0",
        }
    }
}

/// Which side of the seam circle a model lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// r_ε/2 ≤ r ≤ r_ε.
    Inner,
    /// r_ε ≤ r ≤ 2r_ε.
    Outer,
}

impl Side {
    pub fn annulus(self, seam: f64) -> (f64, f64) {
        match self {
            Side::Inner => (0.5 * seam, seam),
            Side::Outer => (seam, 2.0 * seam),
        }
    }
}

/// Direction of the tilt term and, with it, the parity of the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TiltAxis {
    /// r cos θ, even data.
    Cos,
    /// r sin θ, odd data.
    Sin,
}

impl TiltAxis {
    pub fn parity(self) -> Parity {
        match self {
            TiltAxis::Cos => Parity::Even,
            TiltAxis::Sin => Parity::Odd,
        }
    }

    pub fn of_parity(p: Parity) -> Self {
        match p {
            Parity::Even => TiltAxis::Cos,
            Parity::Odd => TiltAxis::Sin,
        }
    }

    fn pair(self, amount: f64) -> (f64, f64) {
        match self {
            TiltAxis::Cos => (amount, 0.0),
            TiltAxis::Sin => (0.0, amount),
        }
    }
}

/// How boundary data is carried away from the seam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DressingRule {
    /// H_ψ(s_ε − ln 2r) = Σ ψ_i (r/r_ε)^i; data ⊥ {1, first mode}.
    HalfCylinderInward,
    /// H̃_{ρ_ε,ψ}(1/r) = Σ ψ_i (r/r_ε)^i; data ⊥ 1.
    InverseRadius,
    /// H̃_{r_ε,φ}(r) = Σ φ_i (r_ε/r)^i; data ⊥ 1.
    Exterior,
    /// ℋ̄_{v_ε,φ}(ln 2r − v_ε) with v_ε = ln 2r_ε in the flat basis; data ⊥ {e_0, e_1}.
    ShiftedLog,
}

impl DressingRule {
    pub fn flags(self) -> Orthogonality {
        match self {
            DressingRule::HalfCylinderInward | DressingRule::ShiftedLog => Orthogonality::CONSTANT_AND_FIRST,
            DressingRule::InverseRadius | DressingRule::Exterior => Orthogonality::CONSTANT,
        }
    }

    pub fn side(self) -> Side {
        match self {
            DressingRule::HalfCylinderInward | DressingRule::InverseRadius => Side::Inner,
            DressingRule::Exterior | DressingRule::ShiftedLog => Side::Outer,
        }
    }

    fn build(self, eps: f64, data: &FourierBoundary) -> Result<Dressing> {
        let seam = seam_radius(eps);
        Ok(match self {
            DressingRule::HalfCylinderInward => Dressing {
                extension: extend_halfcylinder(data)?,
                coordinate: RadialCoordinate::LogInward { s_eps: log_scale(eps) },
            },
            DressingRule::InverseRadius => Dressing {
                extension: extend_exterior(inverted_radius(eps), data)?,
                coordinate: RadialCoordinate::InverseRadius,
            },
            DressingRule::Exterior => {
                Dressing { extension: extend_exterior(seam, data)?, coordinate: RadialCoordinate::Radius }
            }
            DressingRule::ShiftedLog => Dressing {
                extension: extend_shifted((2.0 * seam).ln(), data, ShiftedBasis::Flat)?,
                coordinate: RadialCoordinate::LogRadius,
            },
        })
    }
}

/// Value, r∂_r and ∂_θ at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GraphJet {
    pub value: f64,
    pub r_dr: f64,
    pub d_theta: f64,
}

/// A vertical graph near one seam.
#[derive(Debug, Clone)]
pub struct EndModel {
    pub kind: EndKind,
    pub side: Side,
    pub eps: f64,
    pub seam_radius: f64,
    /// Closed-form part and dressing.
    pub expansion: GraphExpansion,
    pub data: FourierBoundary,
    pub rule: DressingRule,
    pub remainder: Remainder,
    /// Asymptotic directions (θ₁, θ₂) of Scherk-type ends.
    pub asymptotics: Option<[f64; 2]>,
    /// Length |T| of the period.
    pub period: Option<f64>,
}

impl EndModel {
    pub fn parity(&self) -> Parity {
        self.data.parity()
    }

    pub fn jet(&self, r: f64, theta: f64) -> Result<GraphJet> {
        let rem = self.remainder.jet(r, theta)?;
        Ok(GraphJet {
            value: self.expansion.eval(r, theta) + rem.value,
            r_dr: self.expansion.r_dr(r, theta) + rem.r_dr,
            d_theta: self.expansion.d_theta(r, theta) + rem.d_theta,
        })
    }

    pub fn eval(&self, r: f64, theta: f64) -> Result<f64> {
        Ok(self.jet(r, theta)?.value)
    }

    /// Values and r∂_r on the seam circle at θ_k = 2πk/n.
    pub fn seam_trace(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let r = self.seam_radius;
        let (rv, rs) = self.remainder.seam(r, n)?;
        let mut values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        for k in 0..n {
            let th = 2.0 * PI * k as f64 / n as f64;
            values.push(self.expansion.eval(r, th) + rv[k]);
            slopes.push(self.expansion.r_dr(r, th) + rs[k]);
        }
        Ok((values, slopes))
    }

    /// The same end with new boundary data; Scherk-type ends are solved again.
    pub fn with_data(&self, data: &FourierBoundary) -> Result<EndModel> {
        data.require_parity(self.parity())?;
        if let Remainder::Scherk(sol) = &self.remainder {
            let mut problem = sol.problem.clone();
            problem.phi = data.clone();
            let mut m = scherk_model(&problem, sol.sign, Some(&sol.correction))?;
            // keep any explicit parameters that were set from outside
            m.expansion.offset = self.expansion.offset;
            return Ok(m);
        }
        self.with_frozen_remainder(data)
    }

    /// New boundary data in the dressing only; the remainder is kept as it is.
    pub fn with_frozen_remainder(&self, data: &FourierBoundary) -> Result<EndModel> {
        data.require_parity(self.parity())?;
        check_size(data, self.eps)?;
        let dressing = self.rule.build(self.eps, data)?;
        let mut m = self.clone();
        m.expansion.dressing = Some(dressing);
        m.data = data.clone();
        Ok(m)
    }

    /// Largest remainder on the seam circle.
    pub fn seam_remainder_sup(&self, n: usize) -> Result<f64> {
        let (v, _) = self.remainder.seam(self.seam_radius, n)?;
        Ok(v.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
    }

    pub fn scherk_solution(&self) -> Option<&ScherkSolution> {
        match &self.remainder {
            Remainder::Scherk(s) => Some(s),
            _ => None,
        }
    }
}

/// The part of a model beyond its closed-form expansion and dressing.
#[derive(Debug, Clone)]
pub enum Remainder {
    Zero,
    Catenoid(CatenoidTail),
    /// KMR tail of the surface dilated by `dilation`: dilation·R(r/dilation, θ).
    Kmr { tail: Arc<KmrTail>, dilation: f64 },
    Scherk(Arc<ScherkSolution>),
}

impl Remainder {
    pub fn jet(&self, r: f64, theta: f64) -> Result<GraphJet> {
        match self {
            Remainder::Zero => Ok(GraphJet::default()),
            Remainder::Catenoid(c) => c.jet(r, theta),
            Remainder::Kmr { tail, dilation } => {
                if *dilation == 1.0 {
                    return tail.jet(r, theta);
                }
                let j = tail.jet(r / dilation, theta)?;
                Ok(GraphJet { value: dilation * j.value, r_dr: dilation * j.r_dr, d_theta: dilation * j.d_theta })
            }
            Remainder::Scherk(s) => Ok(s.remainder_jet(r, theta)),
        }
    }

    fn seam(&self, r: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if let Remainder::Kmr { tail, dilation } = self {
            if *dilation == 1.0 {
                if let Some(t) = tail.table(r, n) {
                    return Ok(t);
                }
            }
        }
        let mut v = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        for k in 0..n {
            let j = self.jet(r, 2.0 * PI * k as f64 / n as f64)?;
            v.push(j.value);
            s.push(j.r_dr);
        }
        Ok((v, s))
    }
}

/// Exact catenoid end rotated by `angle` about a horizontal axis, minus
/// its literal expansion sheet·ln 2r − tan(angle)·r·(cos θ or sin θ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatenoidTail {
    /// −1 for the sheet x₃ = −arccosh ρ, +1 for x₃ = arccosh ρ.
    pub sheet: f64,
    pub angle: f64,
    pub axis: TiltAxis,
}

impl CatenoidTail {
    /// Height of the rotated catenoid over (x₁, x₂) and its gradient.
    pub fn exact(&self, x1: f64, x2: f64) -> Result<(f64, [f64; 2])> {
        let (w, q) = match self.axis {
            TiltAxis::Cos => (x1, x2),
            TiltAxis::Sin => (x2, x1),
        };
        let (sx, cx) = self.angle.sin_cos();
        let r = x1.hypot(x2);
        let mut x3 = self.sheet * (2.0 * r).ln() - self.angle.tan() * w;
        for _ in 0..50 {
            let pw = w * cx - x3 * sx;
            let p3 = w * sx + x3 * cx;
            let rho = pw.hypot(q);
            if !(rho > 1.0) {
                return Err(Error::Domain(format!("point r = {r} is inside the catenoid neck")));
            }
            let root = (rho * rho - 1.0).sqrt();
            let f = p3 - self.sheet * rho.acosh();
            let df = cx + self.sheet * pw * sx / (rho * root);
            let step = f / df;
            x3 -= step;
            if step.abs() <= 1e-15 * (1.0 + x3.abs()) {
                break;
            }
        }
        let pw = w * cx - x3 * sx;
        let rho = pw.hypot(q);
        let root = (rho * rho - 1.0).sqrt();
        let f3 = cx + self.sheet * pw * sx / (rho * root);
        let fw = sx - self.sheet * pw * cx / (rho * root);
        let fq = -self.sheet * q / (rho * root);
        let (gw, gq) = (-fw / f3, -fq / f3);
        let grad = match self.axis {
            TiltAxis::Cos => [gw, gq],
            TiltAxis::Sin => [gq, gw],
        };
        Ok((x3, grad))
    }

    pub fn jet(&self, r: f64, theta: f64) -> Result<GraphJet> {
        let (s, c) = theta.sin_cos();
        let (x1, x2) = (r * c, r * s);
        let (h, g) = self.exact(x1, x2)?;
        let tan = self.angle.tan();
        let (a, da) = match self.axis {
            TiltAxis::Cos => (c, -s),
            TiltAxis::Sin => (s, c),
        };
        let literal = self.sheet * (2.0 * r).ln() - tan * r * a;
        Ok(GraphJet {
            value: h - literal,
            r_dr: x1 * g[0] + x2 * g[1] - (self.sheet - tan * r * a),
            d_theta: -x2 * g[0] + x1 * g[1] + tan * r * da,
        })
    }
}

/// Weierstrass graph of a KMR example minus its literal catenoidal expansion.
#[derive(Debug, Clone)]
pub struct KmrTail {
    pub sampler: GraphSampler,
    pub literal: GraphExpansion,
    /// −1 for the reflected copy.
    pub sign: f64,
    seam: Option<SeamTable>,
}

#[derive(Debug, Clone)]
struct SeamTable {
    radius: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl KmrTail {
    fn new(sampler: GraphSampler, literal: GraphExpansion, sign: f64, seam: f64) -> Result<Self> {
        let n = SEAM_SAMPLES;
        let rows: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                let (h, sl) = sampler.height_and_radial_slope(seam, th)?;
                Ok((sign * (h - literal.explicit(seam, th)), sign * (sl - literal.r_dr(seam, th))))
            })
            .collect::<Result<_>>()?;
        let (values, slopes) = rows.into_iter().unzip();
        Ok(Self { sampler, literal, sign, seam: Some(SeamTable { radius: seam, values, slopes }) })
    }

    fn table(&self, r: f64, n: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        let t = self.seam.as_ref()?;
        if r != t.radius || t.values.len() % n != 0 {
            return None;
        }
        let step = t.values.len() / n;
        Some(((0..n).map(|k| t.values[k * step]).collect(), (0..n).map(|k| t.slopes[k * step]).collect()))
    }

    pub fn jet(&self, r: f64, theta: f64) -> Result<GraphJet> {
        let (h, sl) = self.sampler.height_and_radial_slope(r, theta)?;
        let g = self.sampler.gradient(r, theta)?;
        let (s, c) = theta.sin_cos();
        let dth = r * (-s * g[0] + c * g[1]);
        Ok(GraphJet {
            value: self.sign * (h - self.literal.explicit(r, theta)),
            r_dr: self.sign * (sl - self.literal.r_dr(r, theta)),
            d_theta: self.sign * (dth - self.literal.d_theta(r, theta)),
        })
    }
}

// ---------------------------------------------------------------------------
// Costa-Hoffman-Meeks type ends

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChmEnd {
    Top,
    Bottom,
    Middle,
}

/// Shape parameters of the catenoidal ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChmShape {
    /// σ_t for the top end, σ_b for the bottom end.
    pub level: f64,
    /// Coefficient of the −r cos θ (or −r sin θ) tilt; ε/2 for bent ends, 0 otherwise.
    pub bend: f64,
    pub axis: TiltAxis,
}

impl ChmShape {
    pub fn bent(eps: f64) -> Self {
        Self { level: 0.0, bend: 0.5 * eps, axis: TiltAxis::Cos }
    }

    pub fn straight() -> Self {
        Self { level: 0.0, bend: 0.0, axis: TiltAxis::Cos }
    }
}

/// End graph with bent ends: U_t = σ_t − ln 2r − (ε/2) r cos θ + H_ψ(s_ε − ln 2r, θ) + remainder.
pub fn chm_end_graph(end: ChmEnd, eps: f64, psi: &FourierBoundary) -> Result<EndModel> {
    chm_end_model(end, eps, psi, ChmShape::bent(eps))
}

/// Top and bottom: σ_t − ln 2r and −σ_b + ln 2r, both with tilt −bend·r on the axis.
/// The remainder is the exact catenoid end rotated by arctan(bend).
/// Middle: the planar end H̃_{ρ_ε,ψ}(1/r) with no remainder.
pub fn chm_end_model(end: ChmEnd, eps: f64, psi: &FourierBoundary, shape: ChmShape) -> Result<EndModel> {
    check_eps(eps)?;
    psi.require_parity(shape.axis.parity())?;
    check_size(psi, eps)?;
    let seam = seam_radius(eps);
    let budget = EXPANSION_BUDGET_CONSTANT * eps;
    let (kind, rule, log_coeff, tilt, offset, remainder) = match end {
        ChmEnd::Top | ChmEnd::Bottom => {
            let sheet = if end == ChmEnd::Top { -1.0 } else { 1.0 };
            let kind = if end == ChmEnd::Top { EndKind::ChmTop } else { EndKind::ChmBottom };
            let tail = CatenoidTail { sheet, angle: shape.bend.atan(), axis: shape.axis };
            (kind, DressingRule::HalfCylinderInward, sheet, shape.axis.pair(-shape.bend), -sheet * shape.level, Remainder::Catenoid(tail))
        }
        ChmEnd::Middle => (EndKind::ChmMiddle, DressingRule::InverseRadius, 0.0, (0.0, 0.0), 0.0, Remainder::Zero),
    };
    let dressing = rule.build(eps, psi)?;
    let expansion = GraphExpansion::new(log_coeff, tilt, (0.0, 0.0), offset, seam, budget)?.with_dressing(dressing);
    Ok(EndModel {
        kind,
        side: Side::Inner,
        eps,
        seam_radius: seam,
        expansion,
        data: psi.clone(),
        rule,
        remainder,
        asymptotics: None,
        period: None,
    })
}

// ---------------------------------------------------------------------------
// KMR boundary graphs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KmrFamily {
    /// β = 0: symmetric in x₂, even data, tilt in cos θ.
    Beta0,
    /// α = 0: symmetric in x₁, odd data, tilt in sin θ.
    Alpha0,
}

/// Placement of a KMR graph next to a seam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmrPlacement {
    pub side: Side,
    pub reflected: bool,
    pub rule: DressingRule,
}

impl Default for KmrPlacement {
    fn default() -> Self {
        Self { side: Side::Outer, reflected: false, rule: DressingRule::ShiftedLog }
    }
}

/// Ū = −(1+γ) ln 2r + tilt − ((1+γ)/r)(ξ₁ cos θ + ξ₂ sin θ) + d + ℋ̄_{v_ε,φ}(ln 2r − v_ε, θ) + remainder,
/// placed outside the seam.
pub fn kmr_boundary_graph(
    family: KmrFamily,
    params: &SurfaceParams,
    gamma: f64,
    xi: [f64; 2],
    d: f64,
    phi: &FourierBoundary,
    eps: f64,
) -> Result<EndModel> {
    kmr_end_model(family, params, gamma, xi, d, phi, eps, KmrPlacement::default())
}

#[allow(clippy::too_many_arguments)]
pub fn kmr_end_model(
    family: KmrFamily,
    params: &SurfaceParams,
    gamma: f64,
    xi: [f64; 2],
    d: f64,
    phi: &FourierBoundary,
    eps: f64,
    place: KmrPlacement,
) -> Result<EndModel> {
    check_eps(eps)?;
    let parity = match family {
        KmrFamily::Beta0 => {
            if params.beta != 0.0 {
                return Err(Error::Domain(format!("beta = 0 family needs beta = 0, got {}", params.beta)));
            }
            Parity::Even
        }
        KmrFamily::Alpha0 => {
            if params.alpha != 0.0 {
                return Err(Error::Domain(format!("alpha = 0 family needs alpha = 0, got {}", params.alpha)));
            }
            Parity::Odd
        }
    };
    phi.require_parity(parity)?;
    check_size(phi, eps)?;
    if place.rule.side() != place.side {
        return Err(Error::Domain("dressing rule acts on the other side of the seam".into()));
    }
    let mut expansion = catenoidal_expansion(params, gamma, [xi[0], xi[1], 0.0], eps)?;
    let literal = catenoidal_expansion(params, 0.0, [0.0; 3], eps)?;
    expansion.offset = d;
    let sign = if place.reflected { -1.0 } else { 1.0 };
    expansion.log_coeff *= sign;
    let seam = seam_radius(eps);
    let tail = KmrTail::new(GraphSampler::new(params, eps)?, literal, sign, seam)?;
    let dressing = place.rule.build(eps, phi)?;
    let kind = match (family, place.reflected) {
        (KmrFamily::Beta0, false) => EndKind::KmrTopBeta0,
        (KmrFamily::Alpha0, false) => EndKind::KmrTopAlpha0,
        (KmrFamily::Beta0, true) => EndKind::KmrBottomBeta0,
        (KmrFamily::Alpha0, true) => EndKind::KmrBottomAlpha0,
    };
    let period = params.end_period_norm().ok();
    Ok(EndModel {
        kind,
        side: place.side,
        eps,
        seam_radius: seam,
        expansion: expansion.with_dressing(dressing),
        data: phi.clone(),
        rule: place.rule,
        remainder: Remainder::Kmr { tail: Arc::new(tail), dilation: 1.0 },
        asymptotics: None,
        period,
    })
}

// ---------------------------------------------------------------------------
// Scherk-type ends and the flat annulus

/// Input of one Scherk-type solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ScherkProblem {
    pub theta: [f64; 2],
    /// |T|; derived from Θ when omitted and Θ ≠ 0.
    pub period: Option<f64>,
    pub eps: f64,
    pub phi: FourierBoundary,
    pub nt: usize,
    pub n_theta: usize,
}

impl ScherkProblem {
    pub fn new(theta: [f64; 2], period: Option<f64>, eps: f64, phi: &FourierBoundary) -> Self {
        let need = 4 * (phi.truncation() + 1);
        let n_theta = need.next_power_of_two().max(64);
        Self { theta, period, eps, phi: phi.clone(), nt: 801, n_theta }
    }

    fn flat(&self) -> bool {
        self.theta == [0.0, 0.0]
    }

    /// |T| after the normalization |T|(sin θ₁ + sin θ₂)/(2π) = 1 when Θ ≠ 0.
    pub fn resolved_period(&self) -> Result<f64> {
        check_eps(self.eps)?;
        let [t1, t2] = self.theta;
        let period = if self.flat() {
            self.period.ok_or_else(|| Error::Domain("flat annulus needs an explicit period".into()))?
        } else {
            if !(t1 > 0.0 && t1 < self.eps && t2 > 0.0 && t2 < self.eps) {
                return Err(Error::Domain(format!("directions ({t1}, {t2}) must lie in (0, eps)^2 or be zero")));
            }
            let derived = 2.0 * PI / (t1.sin() + t2.sin());
            if let Some(p) = self.period {
                if (p - derived).abs() > 1e-9 * derived {
                    return Err(Error::Domain(format!("period {p} contradicts the flux normalization, which gives {derived}")));
                }
            }
            derived
        };
        let lower = 4.0 / self.eps.sqrt();
        if !(period >= lower) {
            return Err(Error::Scale(format!("period {period} is below 4/sqrt(eps) = {lower}")));
        }
        Ok(period)
    }
}

/// One row of the fixed-point trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScherkIterate {
    pub iteration: usize,
    pub update_norm: f64,
    /// update_norm divided by the previous one.
    pub ratio: f64,
}

/// Solved Scherk-type end: U = c₀ − c ln(r/s) + a(r − s²/r) cos θ + H̃_{s,φ} + V outside r = s = r_ε.
#[derive(Debug, Clone)]
pub struct ScherkSolution {
    pub problem: ScherkProblem,
    pub grid: ExteriorGrid,
    pub period: f64,
    /// c = |T|(sin θ₁ + sin θ₂)/(2π).
    pub log_coeff: f64,
    /// a = −½(sin θ₁ − sin θ₂).
    pub tilt: f64,
    pub c0: f64,
    /// V on the grid.
    pub correction: Vec<f64>,
    modes: Vec<Vec<(f64, f64)>>,
    pub trace: Vec<ScherkIterate>,
    /// Largest ratio of successive updates while they were above round-off.
    pub contraction: f64,
    /// ∮ (∂_r U / W) r dθ on the seam circle.
    pub flux: f64,
    /// ∮ ∂_r U r dθ on the seam circle.
    pub euclidean_flux: f64,
    /// +1 for an upward end; −1 when the model is the reflection of the solve with −φ.
    pub sign: f64,
}

fn fd_t(f: &[f64], nt: usize, stride: usize, j: usize, dt: f64, out: &mut [f64]) {
    let at = |k: usize| f[k * stride + j];
    for k in 0..nt {
        let d = if k >= 2 && k + 2 < nt {
            -at(k + 2) + 8.0 * at(k + 1) - 8.0 * at(k - 1) + at(k - 2)
        } else if k == 0 {
            -25.0 * at(0) + 48.0 * at(1) - 36.0 * at(2) + 16.0 * at(3) - 3.0 * at(4)
        } else if k == 1 {
            -3.0 * at(0) - 10.0 * at(1) + 18.0 * at(2) - 6.0 * at(3) + at(4)
        } else if k + 1 == nt {
            25.0 * at(k) - 48.0 * at(k - 1) + 36.0 * at(k - 2) - 16.0 * at(k - 3) + 3.0 * at(k - 4)
        } else {
            3.0 * at(k + 1) + 10.0 * at(k) - 18.0 * at(k - 1) + 6.0 * at(k - 2) - at(k - 3)
        };
        out[k * stride + j] = d / (12.0 * dt);
    }
}

/// t- and θ-derivatives of a grid function (fourth-order differences in t, spectral in θ).
fn grid_derivatives(grid: &ExteriorGrid, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nt, nth) = (grid.nt, grid.n_theta);
    let mut ft = vec![0.0; f.len()];
    for j in 0..nth {
        fd_t(f, nt, nth, j, grid.dt(), &mut ft);
    }
    let mut fth = vec![0.0; f.len()];
    for k in 0..nt {
        let modes = row_modes(&f[k * nth..(k + 1) * nth]);
        let dm: Vec<(f64, f64)> = modes
            .iter()
            .enumerate()
            .map(|(j, (a, b))| if 2 * j == nth { (0.0, 0.0) } else { (j as f64 * b, -(j as f64) * a) })
            .collect();
        row_synthesis(&dm, nth, &mut fth[k * nth..(k + 1) * nth]);
    }
    (ft, fth)
}

impl ScherkSolution {
    fn solve(problem: &ScherkProblem, sign: f64, initial: Option<&[f64]>) -> Result<Self> {
        let period = problem.resolved_period()?;
        problem.phi.require_from_mode(1)?;
        check_size(&problem.phi, problem.eps)?;
        let s = seam_radius(problem.eps);
        let grid = ExteriorGrid::new(s, problem.nt, problem.n_theta)?;
        let [t1, t2] = problem.theta;
        let c = if problem.flat() { 0.0 } else { period * (t1.sin() + t2.sin()) / (2.0 * PI) };
        let a = -0.5 * (t1.sin() - t2.sin());
        let data = problem.phi.scaled(sign);
        let (nt, nth) = (grid.nt, grid.n_theta);
        // derivatives of the explicit harmonic part in t = ln(ρ/s) and θ
        let mut et = vec![0.0; nt * nth];
        let mut eth = vec![0.0; nt * nth];
        for k in 0..nt {
            let rho = grid.rho(k);
            for j in 0..nth {
                let th = grid.theta(j);
                let (sn, cs) = th.sin_cos();
                let mut vt = -c + a * (rho + s * s / rho) * cs;
                let mut vth = -a * (rho - s * s / rho) * sn;
                for (i, coef) in data.coeffs().iter().enumerate() {
                    if *coef == 0.0 {
                        continue;
                    }
                    let p = (s / rho).powi(i as i32);
                    let fi = i as f64;
                    let (si, ci) = (fi * th).sin_cos();
                    match data.parity() {
                        Parity::Even => {
                            vt -= fi * coef * p * ci;
                            vth -= fi * coef * p * si;
                        }
                        Parity::Odd => {
                            vt -= fi * coef * p * si;
                            vth += fi * coef * p * ci;
                        }
                    }
                }
                et[grid.index(k, j)] = vt;
                eth[grid.index(k, j)] = vth;
            }
        }
        let rho2: Vec<f64> = (0..nt).map(|k| grid.rho(k).powi(2)).collect();
        let forcing = |v: &[f64]| -> Vec<f64> {
            let (vt, vth) = grid_derivatives(&grid, v);
            let ut: Vec<f64> = et.iter().zip(&vt).map(|(x, y)| x + y).collect();
            let uth: Vec<f64> = eth.iter().zip(&vth).map(|(x, y)| x + y).collect();
            let p: Vec<f64> =
                (0..nt * nth).map(|q| 1.0 + (ut[q] * ut[q] + uth[q] * uth[q]) / rho2[q / nth]).collect();
            let (pt, pth) = grid_derivatives(&grid, &p);
            (0..nt * nth).map(|q| (pt[q] * ut[q] + pth[q] * uth[q]) / (2.0 * p[q] * rho2[q / nth])).collect()
        };
        let mut v = match initial {
            Some(w) if w.len() == nt * nth => w.to_vec(),
            _ => vec![0.0; nt * nth],
        };
        let mut trace: Vec<ScherkIterate> = Vec::new();
        let mut converged = false;
        for it in 1..=SCHERK_MAX_ITERATIONS {
            let next = dirichlet_exterior_solve(&grid, &forcing(&v))?;
            let upd = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let ratio = trace.last().map_or(f64::NAN, |p| upd / p.update_norm);
            trace.push(ScherkIterate { iteration: it, update_norm: upd, ratio });
            v = next;
            if !upd.is_finite() || (it > 3 && upd > 1e3 * trace[0].update_norm.max(1e-300)) {
                return Err(Error::NoConvergence { iterations: it, detail: scherk_trace_csv(&trace) });
            }
            if upd < SCHERK_TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence { iterations: SCHERK_MAX_ITERATIONS, detail: scherk_trace_csv(&trace) });
        }
        let contraction = trace
            .windows(2)
            .filter(|w| w[0].update_norm > 1e-12)
            .map(|w| w[1].ratio)
            .fold(0.0, f64::max);
        // V is constant on the circle; c₀ makes U equal φ there
        let c0 = -v[grid.index(0, 0)];
        let modes = (0..nt).map(|k| row_modes(&v[k * nth..(k + 1) * nth])).collect();
        let (vt, vth) = grid_derivatives(&grid, &v);
        let (mut flux, mut eflux) = (0.0, 0.0);
        for j in 0..nth {
            let q = grid.index(0, j);
            let ut = et[q] + vt[q];
            let uth = eth[q] + vth[q];
            let w = (1.0 + (ut * ut + uth * uth) / rho2[0]).sqrt();
            flux += ut / w;
            eflux += ut;
        }
        let dth = 2.0 * PI / nth as f64;
        Ok(Self {
            problem: problem.clone(),
            grid,
            period,
            log_coeff: c,
            tilt: a,
            c0,
            correction: v,
            modes,
            trace,
            contraction,
            flux: sign * flux * dth,
            euclidean_flux: sign * eflux * dth,
            sign,
        })
    }

    /// V, ∂_t V and ∂_θ V by cubic interpolation in t and trigonometric interpolation in θ.
    pub fn correction_jet(&self, r: f64, theta: f64) -> GraphJet {
        let g = &self.grid;
        let x = (r / g.s).ln() / g.dt();
        let k0 = (x.floor() as isize - 1).clamp(0, g.nt as isize - 4) as usize;
        let u = x - k0 as f64;
        let mut acc = GraphJet::default();
        for m in 0..4 {
            let (mut w, mut dw) = (1.0, 0.0);
            for q in 0..4 {
                if q == m {
                    continue;
                }
                let den = m as f64 - q as f64;
                let mut prod = 1.0 / den;
                for p in 0..4 {
                    if p != m && p != q {
                        prod *= (u - p as f64) / (m as f64 - p as f64);
                    }
                }
                dw += prod;
                w *= (u - q as f64) / den;
            }
            let (mut val, mut dval) = (0.0, 0.0);
            for (j, (a, b)) in self.modes[k0 + m].iter().enumerate() {
                let fj = j as f64;
                let (sn, cs) = (fj * theta).sin_cos();
                let half = if 2 * j == g.n_theta { 0.0 } else { 1.0 };
                val += a * cs + half * b * sn;
                dval += half * fj * (b * cs - a * sn);
            }
            acc.value += w * val;
            acc.r_dr += dw * val / g.dt();
            acc.d_theta += w * dval;
        }
        acc
    }

    /// sign·(c₀ + V).
    pub fn remainder_jet(&self, r: f64, theta: f64) -> GraphJet {
        let j = self.correction_jet(r, theta);
        GraphJet { value: self.sign * (self.c0 + j.value), r_dr: self.sign * j.r_dr, d_theta: self.sign * j.d_theta }
    }

    /// sup |V| on the grid.
    pub fn correction_sup(&self) -> f64 {
        let v0 = -self.c0;
        self.correction.iter().map(|x| (x - v0).abs()).fold(0.0, f64::max)
    }
}

pub fn scherk_trace_csv(trace: &[ScherkIterate]) -> String {
    let mut out = String::from("iteration,update_norm,ratio\n");
    for t in trace {
        out.push_str(&format!("{},{:.6e},{:.6e}\n", t.iteration, t.update_norm, t.ratio));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Up,
    Down,
}

fn scherk_model(problem: &ScherkProblem, sign: f64, initial: Option<&[f64]>) -> Result<EndModel> {
    let sol = ScherkSolution::solve(problem, sign, initial)?;
    let eps = problem.eps;
    let s = seam_radius(eps);
    let c = sol.log_coeff;
    let a = sol.tilt;
    let flat = problem.flat();
    let kind = if flat {
        EndKind::FlatAnnulus
    } else if sign > 0.0 {
        EndKind::ScherkUp
    } else {
        EndKind::ScherkDown
    };
    let rule = DressingRule::Exterior;
    let expansion = GraphExpansion::new(
        -sign * c,
        (sign * a, 0.0),
        (-sign * a * s * s, 0.0),
        sign * c * (2.0 * s).ln(),
        s,
        EXPANSION_BUDGET_CONSTANT * eps,
    )?
    .with_dressing(rule.build(eps, &problem.phi)?);
    Ok(EndModel {
        kind,
        side: Side::Outer,
        eps,
        seam_radius: s,
        expansion,
        data: problem.phi.clone(),
        rule,
        period: Some(sol.period),
        remainder: Remainder::Scherk(Arc::new(sol)),
        asymptotics: if flat { None } else { Some(problem.theta) },
    })
}

/// Upward Scherk-type end (or the flat annulus when Θ = 0): −ln 2r + d + H̃_{r_ε,φ} + V.
pub fn scherk_solve(theta: [f64; 2], period: Option<f64>, eps: f64, phi: &FourierBoundary) -> Result<EndModel> {
    scherk_end(Orientation::Up, &ScherkProblem::new(theta, period, eps, phi))
}

/// Downward ends are reflections of the upward solve with data −φ.
pub fn scherk_end(orientation: Orientation, problem: &ScherkProblem) -> Result<EndModel> {
    let sign = match orientation {
        Orientation::Up => 1.0,
        Orientation::Down => -1.0,
    };
    scherk_model(problem, sign, None)
}

/// Flat periodic annulus H̃_{r_ε,φ} + V.
pub fn flat_annulus(period: f64, eps: f64, phi: &FourierBoundary) -> Result<EndModel> {
    scherk_end(Orientation::Up, &ScherkProblem::new([0.0, 0.0], Some(period), eps, phi))
}

/// Conormal and Euclidean flux ∮ (∂_r U / W) r dθ, ∮ ∂_r U r dθ through the circle of radius r.
pub fn conormal_flux(model: &EndModel, r: f64, n: usize) -> Result<(f64, f64)> {
    let (mut flux, mut eflux) = (0.0, 0.0);
    for k in 0..n {
        let j = model.jet(r, 2.0 * PI * k as f64 / n as f64)?;
        let w = (1.0 + (j.r_dr * j.r_dr + j.d_theta * j.d_theta) / (r * r)).sqrt();
        flux += j.r_dr / w;
        eflux += j.r_dr;
    }
    let d = 2.0 * PI / n as f64;
    Ok((flux * d, eflux * d))
}

// ---------------------------------------------------------------------------
// Mean-curvature residuals

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphEquation {
    /// |x|⁴ div(∇u / (1 + |x|⁴|∇u|²)^{1/2}) for u over the punctured disk in inverted coordinates.
    PlanarEnd,
    /// 2H cosh²s of X_c + w n_c over the catenoid, w given in (s, θ).
    CatenoidNormal,
    /// W div(∇U/W) = ΔU − ⟨∇P, ∇U⟩/(2P), P = W² = 1 + |∇U|², for U over the plane.
    ScherkGraph,
}

/// Divergence-form stencil p·div(∇u / (1 + p|∇u|²)^{1/2}) with face fluxes, p = weight(x).
fn divergence_residual<F, P>(u: &F, weight: &P, x: [f64; 2], h: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
    P: Fn(f64, f64) -> f64,
{
    let [x0, y0] = x;
    let at = |i: f64, j: f64| u(x0 + i * h, y0 + j * h);
    let face = |cx: f64, cy: f64, dir: usize| -> f64 {
        // flux of the normal component through the face centred at (cx, cy)·h
        let (gn, gt) = if dir == 0 {
            let gn = (at(cx + 0.5, cy) - at(cx - 0.5, cy)) / h;
            let gt = (at(cx + 0.5, cy + 1.0) + at(cx - 0.5, cy + 1.0) - at(cx + 0.5, cy - 1.0) - at(cx - 0.5, cy - 1.0)) / (4.0 * h);
            (gn, gt)
        } else {
            let gn = (at(cx, cy + 0.5) - at(cx, cy - 0.5)) / h;
            let gt = (at(cx + 1.0, cy + 0.5) + at(cx + 1.0, cy - 0.5) - at(cx - 1.0, cy + 0.5) - at(cx - 1.0, cy - 0.5)) / (4.0 * h);
            (gn, gt)
        };
        let p = weight(x0 + cx * h, y0 + cy * h);
        gn / (1.0 + p * (gn * gn + gt * gt)).sqrt()
    };
    let div = (face(0.5, 0.0, 0) - face(-0.5, 0.0, 0) + face(0.0, 0.5, 1) - face(0.0, -0.5, 1)) / h;
    div
}

fn catenoid_residual<F: Fn(f64, f64) -> f64>(w: &F, at: [f64; 2], h: f64) -> f64 {
    let [s, th] = at;
    let f = |a: f64, b: f64| w(s + a * h, th + b * h);
    let w0 = f(0.0, 0.0);
    let ws = (f(1.0, 0.0) - f(-1.0, 0.0)) / (2.0 * h);
    let wt = (f(0.0, 1.0) - f(0.0, -1.0)) / (2.0 * h);
    let wss = (f(1.0, 0.0) - 2.0 * w0 + f(-1.0, 0.0)) / (h * h);
    let wtt = (f(0.0, 1.0) - 2.0 * w0 + f(0.0, -1.0)) / (h * h);
    let wst = (f(1.0, 1.0) - f(1.0, -1.0) - f(-1.0, 1.0) + f(-1.0, -1.0)) / (4.0 * h * h);
    let (sh, ch) = (s.sinh(), s.cosh());
    let (sn, cs) = th.sin_cos();
    let (sech, tanh) = (1.0 / ch, s.tanh());
    let n = [cs * sech, sn * sech, -tanh];
    let n_s = [-cs * sech * tanh, -sn * sech * tanh, -sech * sech];
    let n_t = [-sn * sech, cs * sech, 0.0];
    let k = sech * tanh * tanh - sech.powi(3);
    let n_ss = [cs * k, sn * k, 2.0 * sech * sech * tanh];
    let n_st = [sn * sech * tanh, -cs * sech * tanh, 0.0];
    let n_tt = [-cs * sech, -sn * sech, 0.0];
    let comb = |base: [f64; 3], terms: &[(f64, [f64; 3])]| -> [f64; 3] {
        let mut o = base;
        for (c, v) in terms {
            for q in 0..3 {
                o[q] += c * v[q];
            }
        }
        o
    };
    let x_s = comb([sh * cs, sh * sn, 1.0], &[(ws, n), (w0, n_s)]);
    let x_t = comb([-ch * sn, ch * cs, 0.0], &[(wt, n), (w0, n_t)]);
    let x_ss = comb([ch * cs, ch * sn, 0.0], &[(wss, n), (2.0 * ws, n_s), (w0, n_ss)]);
    let x_st = comb([-sh * sn, sh * cs, 0.0], &[(wst, n), (ws, n_t), (wt, n_s), (w0, n_st)]);
    let x_tt = comb([-ch * cs, -ch * sn, 0.0], &[(wtt, n), (2.0 * wt, n_t), (w0, n_tt)]);
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cr = [
        x_s[1] * x_t[2] - x_s[2] * x_t[1],
        x_s[2] * x_t[0] - x_s[0] * x_t[2],
        x_s[0] * x_t[1] - x_s[1] * x_t[0],
    ];
    let len = dot(cr, cr).sqrt();
    let nu = [cr[0] / len, cr[1] / len, cr[2] / len];
    let (e, ff, g) = (dot(x_s, x_s), dot(x_s, x_t), dot(x_t, x_t));
    let (l, m, nn) = (dot(x_ss, nu), dot(x_st, nu), dot(x_tt, nu));
    let two_h = (e * nn - 2.0 * ff * m + g * l) / (e * g - ff * ff);
    two_h * ch * ch
}

/// Residual of the named operator at one point with spacing h.
pub fn residual_at<F>(graph: &F, equation: GraphEquation, x: [f64; 2], h: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    match equation {
        GraphEquation::PlanarEnd => {
            let weight = |a: f64, b: f64| (a * a + b * b).powi(2);
            weight(x[0], x[1]) * divergence_residual(graph, &weight, x, h)
        }
        GraphEquation::ScherkGraph => {
            let weight = |_: f64, _: f64| 1.0;
            let gx = (graph(x[0] + h, x[1]) - graph(x[0] - h, x[1])) / (2.0 * h);
            let gy = (graph(x[0], x[1] + h) - graph(x[0], x[1] - h)) / (2.0 * h);
            (1.0 + gx * gx + gy * gy).sqrt() * divergence_residual(graph, &weight, x, h)
        }
        GraphEquation::CatenoidNormal => catenoid_residual(graph, x, h),
    }
}

/// One spacing of a residual study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub h: f64,
    pub max_residual: f64,
    pub l2_residual: f64,
    /// log₂ of the ratio to the previous row's max residual over log₂ of the spacing ratio.
    pub order_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub equation: GraphEquation,
    pub rows: Vec<ResidualRow>,
}

impl ResidualReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,max_residual,l2_residual,order_estimate\n");
        for r in &self.rows {
            let ord = r.order_estimate.map_or(String::new(), |o| format!("{o:.4}"));
            out.push_str(&format!("{:.6e},{:.6e},{:.6e},{}\n", r.h, r.max_residual, r.l2_residual, ord));
        }
        out
    }
}

/// Max and root-mean-square residual over the sample points.
pub fn mean_curvature_residual<F>(graph: &F, equation: GraphEquation, points: &[[f64; 2]], h: f64) -> (f64, f64)
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let vals: Vec<f64> = points.par_iter().map(|&x| residual_at(graph, equation, x, h)).collect();
    let max = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let l2 = if vals.is_empty() { 0.0 } else { (vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64).sqrt() };
    (max, l2)
}

/// Residuals at each spacing with observed orders between consecutive spacings.
pub fn residual_study<F>(graph: &F, equation: GraphEquation, points: &[[f64; 2]], spacings: &[f64]) -> ResidualReport
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let mut rows: Vec<ResidualRow> = Vec::new();
    for &h in spacings {
        let (max, l2) = mean_curvature_residual(graph, equation, points, h);
        let order_estimate = rows.last().map(|p| (p.max_residual / max).ln() / (p.h / h).ln());
        rows.push(ResidualRow { h, max_residual: max, l2_residual: l2, order_estimate });
    }
    ResidualReport { equation, rows }
}

/// Cartesian view (x₁, x₂) ↦ U of an end model, NaN where evaluation fails.
pub fn cartesian<'a>(model: &'a EndModel) -> impl Fn(f64, f64) -> f64 + Sync + 'a {
    move |x, y| model.eval(x.hypot(y), y.atan2(x)).unwrap_or(f64::NAN)
}
