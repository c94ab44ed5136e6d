//! KMR examples from their Weierstrass data: Gauss map and height differential,
//! the immersion by path integration in the conformal chart, periods around
//! the ends, the graph near the catenoidal limit, and the area density of
//! normal graphs over the surface.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::coords::{build_chart, l_of, m_of, z_parts, z_parts_partials, ConformalChart, Sheet, SpheroConal};
use crate::error::{Error, Result};
use crate::harmonic::HarmonicExtension;
use crate::jacobi::{lame_apply, Jet2};
use crate::specfun::complete_k;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest detour radius around an end in the chart.
const MAX_DETOUR_RADIUS: f64 = 0.5;
/// Longest straight piece handed to one Gauss–Legendre rule.
const MAX_PIECE: f64 = 0.25;
const QUAD_NODES: usize = 16;

fn rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        GaussLegendre::new(QUAD_NODES)
            .expect("degree is at least two")
            .into_node_weight_pairs()
    })
}

fn re3(v: [Complex64; 3]) -> [f64; 3] {
    [v[0].re, v[1].re, v[2].re]
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Which value the Gauss map takes at an end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndKind {
    GaussZero,
    GaussPole,
}

/// An end of the surface located in the conformal chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Puncture {
    /// Position in the fundamental rectangle [0, U) × [−V/4, 3V/4).
    pub zeta: Complex64,
    pub kind: EndKind,
    pub sheet: Sheet,
}

/// Parameters (σ, α, β) of one KMR example with the quantities derived from them.
#[derive(Debug, Clone)]
pub struct SurfaceParams {
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// cot(σ/2); the branch values of the Gauss map are ±iλ, ±i/λ.
    pub lambda: f64,
    /// π csc σ / K(sin²σ).
    pub mu: f64,
    /// dh = iν dζ in the conformal chart; ν = 2π/U.
    pub nu: f64,
    pub a: Complex64,
    pub b: Complex64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub chart: ConformalChart,
    ends: Vec<Puncture>,
    detour_radius: f64,
}

impl SurfaceParams {
    pub fn new(sigma: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma < FRAC_PI_2) {
            return Err(Error::Domain(format!("sigma must lie in (0, pi/2), got {sigma}")));
        }
        for (name, t) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..=FRAC_PI_2).contains(&t) {
                return Err(Error::Domain(format!("{name} must lie in [0, pi/2], got {t}")));
            }
        }
        if alpha == 0.0 && beta == sigma {
            return Err(Error::Domain("(alpha, beta) = (0, sigma) is excluded".into()));
        }
        let chart = build_chart(sigma)?;
        let k = complete_k(sigma.sin().powi(2))?;
        let (sp, cp) = (0.5 * (alpha + beta)).sin_cos();
        let (sm, cm) = (0.5 * (alpha - beta)).sin_cos();
        let a = Complex64::new(cp, cm);
        let b = Complex64::new(sm, sp);
        let mut params = Self {
            sigma,
            alpha,
            beta,
            lambda: 1.0 / (0.5 * sigma).tan(),
            mu: PI / (sigma.sin() * k),
            nu: 2.0 * PI / chart.u_period,
            a,
            b,
            kappa1: b.re + b.im,
            kappa2: b.re - b.im,
            chart,
            ends: Vec::new(),
            detour_radius: MAX_DETOUR_RADIUS,
        };
        params.ends = locate_ends(&params)?;
        params.detour_radius = detour_radius(&params);
        Ok(params)
    }

    /// g(z) = (az + b) / (i(ā − b̄z)).
    pub fn gauss(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (I * (self.a.conj() - self.b.conj() * z))
    }

    /// g'(z) = −2i / (ā − b̄z)², using |a|² + |b|² = 2.
    pub fn gauss_derivative(&self, z: Complex64) -> Complex64 {
        let d = self.a.conj() - self.b.conj() * z;
        -2.0 * I / (d * d)
    }

    pub fn branch_points(&self) -> [Complex64; 4] {
        let l = self.lambda;
        [I * l, -I * l, I / l, -I / l]
    }

    /// Sheet-one root of (z² + λ²)(z² + λ⁻²): λz √(1 + λ⁻²z⁻²) √(1 + λ⁻²z²).
    ///
    /// Continuous off the cuts {iy : |y| ≤ 1/λ} and {iy : |y| ≥ λ}; z = 0 takes
    /// the limit from Re z > 0.
    pub fn w_sheet_one(&self, z: Complex64) -> Complex64 {
        if z == Complex64::new(0.0, 0.0) {
            return Complex64::new(1.0, 0.0);
        }
        let l = self.lambda;
        let inner = (1.0 + 1.0 / (l * l * z * z)).sqrt();
        let outer = (1.0 + z * z / (l * l)).sqrt();
        l * z * inner * outer
    }

    /// Zero −b/a of the Gauss map and its pole ā/b̄ (None when b = 0: the pole is at ∞).
    pub fn end_values(&self) -> (Complex64, Option<Complex64>) {
        let zero = -self.b / self.a;
        let pole = if self.b.norm() == 0.0 { None } else { Some(self.a.conj() / self.b.conj()) };
        (zero, pole)
    }

    pub fn t_alpha(&self) -> f64 {
        let s = self.sigma.sin();
        s / (s * s * self.alpha.cos().powi(2) + self.alpha.sin().powi(2)).sqrt()
    }

    pub fn t_beta(&self) -> Result<f64> {
        if self.beta >= self.sigma {
            return Err(Error::Domain(format!("t_beta needs beta < sigma, got beta = {}", self.beta)));
        }
        let s = self.sigma.sin();
        Ok(s / (s * s - self.beta.sin().powi(2)).sqrt())
    }

    /// |T| from the closed forms: πμ t_α when β = 0, πμ t_β when α = 0.
    pub fn end_period_norm(&self) -> Result<f64> {
        if self.beta == 0.0 {
            Ok(PI * self.mu * self.t_alpha())
        } else if self.alpha == 0.0 {
            Ok(PI * self.mu * self.t_beta()?)
        } else {
            Err(Error::Domain("closed-form period only for alpha = 0 or beta = 0".into()))
        }
    }

    pub fn ends(&self) -> &[Puncture] {
        &self.ends
    }

    /// Radius of the circles used to detour around ends; also the minimal
    /// admissible distance from an evaluation point to an end.
    pub fn detour_radius(&self) -> f64 {
        self.detour_radius
    }

    /// Homogeneous Gauss map (A, B) with g = A/B at a chart point.
    fn gauss_parts(&self, p: SpheroConal) -> (Complex64, Complex64) {
        let (num, den) = z_parts(p);
        self.parts_from(num, den)
    }

    fn parts_from(&self, num: Complex64, den: f64) -> (Complex64, Complex64) {
        (self.a * num + self.b * den, I * (self.a.conj() * den - self.b.conj() * num))
    }

    /// g at ζ = u + iv.
    pub fn gauss_in_chart(&self, zeta: Complex64) -> Complex64 {
        let (a, b) = self.gauss_parts(self.chart.point(zeta.re, zeta.im));
        a / b
    }

    /// (A, B, ∂_u(A, B), ∂_v(A, B)) at a chart point.
    fn gauss_parts_jet(&self, u: f64, v: f64) -> [(Complex64, Complex64); 3] {
        let p = self.chart.point(u, v);
        let (num, den) = z_parts(p);
        let [(nx, dx), (ny, dy)] = z_parts_partials(p);
        let lx = l_of(p.x, self.sigma);
        let my = m_of(p.y, self.sigma);
        let base = self.parts_from(num, den);
        let du = self.parts_from(nx * lx, dx * lx);
        let dv = self.parts_from(ny * my, dy * my);
        [base, du, dv]
    }

    /// Weierstrass density 𝒲 = (½(1/g − g), (i/2)(1/g + g), 1) dh/dζ in the chart.
    pub fn density_in_chart(&self, zeta: Complex64) -> Result<[Complex64; 3]> {
        let (a, b) = self.gauss_parts(self.chart.point(zeta.re, zeta.im));
        let scale = a.norm().max(b.norm());
        if !(scale > 0.0) || a.norm() == 0.0 || b.norm() == 0.0 {
            return Err(Error::Pole(format!("end of the surface at zeta = {zeta}")));
        }
        let (a, b) = (a / scale, b / scale);
        let ab = a * b;
        let dh = I * self.nu;
        Ok([
            0.5 * (b * b - a * a) / ab * dh,
            0.5 * I * (b * b + a * a) / ab * dh,
            dh,
        ])
    }

    /// w at ζ read off the chart: dh = μ dz / w = iν dζ, so w = μ z_ζ / (iν).
    pub fn w_in_chart(&self, zeta: Complex64) -> Result<Complex64> {
        let dz = self.chart.dz_dzeta(zeta.re, zeta.im)?;
        Ok(self.mu * dz / (I * self.nu))
    }

    fn lattice(&self) -> (f64, f64) {
        (self.chart.u_period, self.chart.v_period)
    }

    /// Images of the ends within `pad` of the box spanned by two chart points.
    fn end_images_near(&self, a: Complex64, b: Complex64, pad: f64) -> Vec<Complex64> {
        let (up, vp) = self.lattice();
        let (u_lo, u_hi) = (a.re.min(b.re) - pad, a.re.max(b.re) + pad);
        let (v_lo, v_hi) = (a.im.min(b.im) - pad, a.im.max(b.im) + pad);
        let mut out = Vec::new();
        for e in &self.ends {
            let m0 = ((u_lo - e.zeta.re) / up).floor() as i64;
            let m1 = ((u_hi - e.zeta.re) / up).ceil() as i64;
            let n0 = ((v_lo - e.zeta.im) / vp).floor() as i64;
            let n1 = ((v_hi - e.zeta.im) / vp).ceil() as i64;
            for m in m0..=m1 {
                for n in n0..=n1 {
                    let p = e.zeta + Complex64::new(m as f64 * up, n as f64 * vp);
                    if p.re >= u_lo && p.re <= u_hi && p.im >= v_lo && p.im <= v_hi {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    /// Distance from a chart point to the nearest end.
    pub fn distance_to_ends(&self, zeta: Complex64) -> f64 {
        let (up, vp) = self.lattice();
        self.ends
            .iter()
            .map(|e| {
                let d = zeta - e.zeta;
                let du = d.re - up * (d.re / up).round();
                let dv = d.im - vp * (d.im / vp).round();
                du.hypot(dv)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn check_clear(&self, zeta: Complex64) -> Result<()> {
        let d = self.distance_to_ends(zeta);
        if d < self.detour_radius {
            return Err(Error::NearPuncture(format!(
                "zeta = {zeta} is {d:.3e} from an end (margin {:.3e})",
                self.detour_radius
            )));
        }
        Ok(())
    }

    fn integrate_line(&self, a: Complex64, b: Complex64) -> Result<[f64; 3]> {
        let len = (b - a).norm();
        if len == 0.0 {
            return Ok([0.0; 3]);
        }
        let pieces = (len / MAX_PIECE).ceil() as usize;
        let step = (b - a) / pieces as f64;
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        for k in 0..pieces {
            let mid = a + step * (k as f64 + 0.5);
            for &(x, wt) in rule() {
                let phi = self.density_in_chart(mid + step * (0.5 * x))?;
                for c in 0..3 {
                    acc[c] += phi[c] * step * (0.5 * wt);
                }
            }
        }
        Ok(re3(acc))
    }

    /// Clockwise (sweep < 0) or counterclockwise arc p + R e^{iθ}, θ from θ0 by `sweep`.
    fn integrate_arc(&self, p: Complex64, radius: f64, theta0: f64, sweep: f64) -> Result<[f64; 3]> {
        let pieces = ((sweep.abs() / (0.25 * PI)).ceil() as usize).max(1);
        let dth = sweep / pieces as f64;
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        for k in 0..pieces {
            let mid = theta0 + dth * (k as f64 + 0.5);
            for &(x, wt) in rule() {
                let th = mid + 0.5 * dth * x;
                let e = Complex64::from_polar(1.0, th);
                let dz = I * radius * e * (0.5 * dth * wt);
                let phi = self.density_in_chart(p + radius * e)?;
                for c in 0..3 {
                    acc[c] += phi[c] * dz;
                }
            }
        }
        Ok(re3(acc))
    }

    /// Re ∫ 𝒲 along the straight segment a → b, passing every end it meets on
    /// its left (the end stays to the right of the path).
    pub fn integrate_segment(&self, a: Complex64, b: Complex64) -> Result<[f64; 3]> {
        self.check_clear(a)?;
        self.check_clear(b)?;
        let len = (b - a).norm();
        if len == 0.0 {
            return Ok([0.0; 3]);
        }
        let r = self.detour_radius;
        let dir = (b - a) / len;
        let mut hits: Vec<(f64, f64, Complex64)> = Vec::new();
        for p in self.end_images_near(a, b, r) {
            let rel = (p - a) * dir.conj();
            if rel.im.abs() < r {
                let half = (r * r - rel.im * rel.im).sqrt();
                let (s1, s2) = (rel.re - half, rel.re + half);
                if s2 > 0.0 && s1 < len {
                    hits.push((s1, s2, p));
                }
            }
        }
        hits.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut acc = [0.0; 3];
        let mut cur = 0.0;
        for (s1, s2, p) in hits {
            acc = add3(acc, self.integrate_line(a + dir * cur, a + dir * s1)?);
            let entry = (a + dir * s1 - p).arg();
            let exit = (a + dir * s2 - p).arg();
            let sweep = -(entry - exit).rem_euclid(2.0 * PI);
            acc = add3(acc, self.integrate_arc(p, r, entry, sweep)?);
            cur = s2;
        }
        acc = add3(acc, self.integrate_line(a + dir * cur, b)?);
        Ok(acc)
    }

    /// X(ζ) along the canonical path 0 → u → u + iv from the base point ζ = 0 (z = 1, sheet one).
    pub fn position(&self, zeta: Complex64) -> Result<[f64; 3]> {
        let corner = Complex64::new(zeta.re, 0.0);
        Ok(add3(
            self.integrate_segment(Complex64::new(0.0, 0.0), corner)?,
            self.integrate_segment(corner, zeta)?,
        ))
    }

    /// X(u + U, v) − X(u, v) along the horizontal line at height v.
    pub fn u_loop_period(&self, v: f64) -> Result<[f64; 3]> {
        let a = Complex64::new(0.0, v);
        self.integrate_segment(a, a + self.chart.u_period)
    }

    /// X(u, v + V) − X(u, v) along the vertical line through u.
    pub fn v_loop_period(&self, u: f64) -> Result<[f64; 3]> {
        let a = Complex64::new(u, 0.0);
        self.integrate_segment(a, a + I * self.chart.v_period)
    }

    /// Period around an end: counterclockwise circle of the detour radius.
    pub fn end_period_contour(&self, end: &Puncture) -> Result<[f64; 3]> {
        self.integrate_arc(end.zeta, self.detour_radius, 0.0, 2.0 * PI)
    }

    /// Period around an end from the residue of 𝒲, with the derivative of the
    /// Gauss map (or of its reciprocal) at the end from a Cauchy integral.
    pub fn end_period_residue(&self, end: &Puncture) -> Result<[f64; 3]> {
        let n = 64;
        let r = 0.5 * self.detour_radius;
        let mut deriv = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
            let (a, b) = self.gauss_parts(self.chart.point((end.zeta + r * e).re, (end.zeta + r * e).im));
            let val = match end.kind {
                EndKind::GaussZero => a / b,
                EndKind::GaussPole => b / a,
            };
            deriv += val / e;
        }
        deriv /= n as f64 * r;
        let dh = I * self.nu;
        // residue of 1/g at a zero, of g at a pole
        let res = 1.0 / deriv;
        let res_w = match end.kind {
            EndKind::GaussZero => [0.5 * res * dh, 0.5 * I * res * dh],
            EndKind::GaussPole => [-0.5 * res * dh, 0.5 * I * res * dh],
        };
        Ok([(2.0 * PI * I * res_w[0]).re, (2.0 * PI * I * res_w[1]).re, 0.0])
    }

    /// Period around the sheet-one end at the zero of g from R = μ / (w g') in the z-plane.
    ///
    /// Needs the zero off the cuts of the sheet-one root.
    pub fn end_period_z_residue(&self) -> Result<[f64; 3]> {
        let (zp, _) = self.end_values();
        let on_cut = zp.re.abs() < 1e-14 && (zp.im.abs() <= 1.0 / self.lambda || zp.im.abs() >= self.lambda);
        if on_cut {
            return Err(Error::BranchPoint(format!("zero of g at {zp} lies on a cut")));
        }
        let r = self.mu / (self.w_sheet_one(zp) * self.gauss_derivative(zp));
        Ok([-PI * r.im, -PI * r.re, 0.0])
    }

    /// The end at the zero of g lying on sheet one (|v| < V/4 mod V).
    pub fn sheet_one_zero_end(&self) -> Option<&Puncture> {
        self.ends.iter().find(|e| e.kind == EndKind::GaussZero && e.sheet == Sheet::One)
    }
}

/// Inverse stereographic image of the homogeneous point p/q.
fn sphere_from_homogeneous(p: Complex64, q: Complex64) -> [f64; 3] {
    let pq = p * q.conj();
    let s = p.norm_sqr() + q.norm_sqr();
    [2.0 * pq.re / s, 2.0 * pq.im / s, (p.norm_sqr() - q.norm_sqr()) / s]
}

/// Sphero-conal preimages of a sphere point: sin²x and cos²y solve a quadratic,
/// then every sign choice is checked against the point.
fn sphero_conal_preimages(pt: [f64; 3], sigma: f64) -> Vec<(f64, f64)> {
    let s2 = sigma.sin().powi(2);
    let (p1, p2, p3) = (pt[0], pt[1], pt[2]);
    let bq = p3 * p3 - 1.0 - s2 * (1.0 - p1 * p1);
    let cq = p2 * p2;
    let disc = (bq * bq - 4.0 * s2 * cq).max(0.0);
    let q = -0.5 * (bq + bq.signum() * disc.sqrt());
    let mut xs = Vec::new();
    if q != 0.0 {
        xs.push(cq / q);
        if s2 > 0.0 {
            xs.push(q / s2);
        }
    } else {
        xs.push(0.0);
    }
    let mut out = Vec::new();
    for sx2 in xs {
        if !(-1e-9..=1.0 + 1e-9).contains(&sx2) {
            continue;
        }
        let sx2 = sx2.clamp(0.0, 1.0);
        let cy2 = (p3 * p3 / (1.0 - s2 * sx2)).clamp(0.0, 1.0);
        let x0 = sx2.sqrt().asin();
        let y0 = cy2.sqrt().acos();
        for x in [x0, PI - x0, PI + x0, 2.0 * PI - x0] {
            for y in [y0, PI - y0, PI + y0, 2.0 * PI - y0] {
                let f = SpheroConal { x, y, sigma }.sphere_point();
                if norm3(sub3(f, pt)) < 1e-7 {
                    out.push((x, y));
                }
            }
        }
    }
    out
}

fn reduce_to_cell(chart: &ConformalChart, zeta: Complex64) -> Complex64 {
    let (up, vp) = (chart.u_period, chart.v_period);
    let u = zeta.re.rem_euclid(up);
    let v = (zeta.im + 0.25 * vp).rem_euclid(vp) - 0.25 * vp;
    Complex64::new(u, v)
}

fn locate_ends(params: &SurfaceParams) -> Result<Vec<Puncture>> {
    let chart = &params.chart;
    let (up, vp) = (chart.u_period, chart.v_period);
    let targets = [
        (EndKind::GaussZero, -params.b, params.a),
        (EndKind::GaussPole, params.a.conj(), params.b.conj()),
    ];
    let mut ends = Vec::new();
    for (kind, p, q) in targets {
        let pt = sphere_from_homogeneous(p, q);
        let mut found: Vec<Complex64> = Vec::new();
        for (x, y) in sphero_conal_preimages(pt, params.sigma) {
            let zeta = polish_end(params, kind, Complex64::new(chart.u_of_x(x), chart.v_of_y(y)));
            let zeta = reduce_to_cell(chart, zeta);
            let dup = found.iter().any(|f| {
                let d = zeta - f;
                let du = d.re - up * (d.re / up).round();
                let dv = d.im - vp * (d.im / vp).round();
                du.hypot(dv) < 1e-6
            });
            if !dup {
                found.push(zeta);
            }
        }
        if found.len() != 2 {
            return Err(Error::Domain(format!("expected two preimages of each end, found {}", found.len())));
        }
        for zeta in found {
            let sheet = Sheet::of_y(chart.y_of_v(zeta.im));
            ends.push(Puncture { zeta, kind, sheet });
        }
    }
    Ok(ends)
}

/// Newton on g (or 1/g) in the chart; keeps the starting point where the
/// homogeneous coordinates degenerate.
fn polish_end(params: &SurfaceParams, kind: EndKind, start: Complex64) -> Complex64 {
    let value = |z: Complex64| {
        let (a, b) = params.gauss_parts(params.chart.point(z.re, z.im));
        match kind {
            EndKind::GaussZero => a / b,
            EndKind::GaussPole => b / a,
        }
    };
    let h = 1e-6;
    let mut z = start;
    for _ in 0..30 {
        let f = value(z);
        let df = (value(z + h) - value(z - h)) / (2.0 * h);
        let step = f / df;
        if !step.re.is_finite() || !step.im.is_finite() || step.norm() > 0.1 {
            break;
        }
        z -= step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    z
}

fn detour_radius(params: &SurfaceParams) -> f64 {
    let (up, vp) = params.lattice();
    let mut min_sep = f64::INFINITY;
    for (i, e) in params.ends.iter().enumerate() {
        for f in &params.ends[i + 1..] {
            let d = e.zeta - f.zeta;
            let du = d.re - up * (d.re / up).round();
            let dv = d.im - vp * (d.im / vp).round();
            min_sep = min_sep.min(du.hypot(dv));
        }
    }
    min_sep = min_sep.min(up).min(vp);
    MAX_DETOUR_RADIUS.min(0.25 * min_sep)
}

/// Weierstrass data at z on a sheet: (g, μ/w).
pub fn weierstrass_at(params: &SurfaceParams, z: Complex64, sheet: Sheet) -> Result<(Complex64, Complex64)> {
    for bp in params.branch_points() {
        if (z - bp).norm() <= 1e-12 * (1.0 + bp.norm()) {
            return Err(Error::BranchPoint(format!("w vanishes at z = {z}")));
        }
    }
    let w = sheet.sign() * params.w_sheet_one(z);
    Ok((params.gauss(z), params.mu / w))
}

/// (½(1/g − g), (i/2)(1/g + g), 1) dh in the z-plane.
fn weierstrass_density(g: Complex64, dh: Complex64) -> [Complex64; 3] {
    let gi = 1.0 / g;
    [0.5 * (gi - g) * dh, 0.5 * I * (gi + g) * dh, dh]
}

/// Rectangle [u_min, u_max] × [v_min, v_max] in the conformal chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchRegion {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// Sampled immersion on a uniform (u, v) grid, row-major in v.
#[derive(Debug, Clone)]
pub struct MeshPatch {
    pub nu: usize,
    pub nv: usize,
    pub u0: f64,
    pub v0: f64,
    pub h: f64,
    pub points: Vec<[f64; 3]>,
    pub params: SurfaceParams,
    /// Set when every sample lies on the same sheet.
    pub sheet: Option<Sheet>,
}

impl MeshPatch {
    pub fn at(&self, i: usize, j: usize) -> [f64; 3] {
        self.points[j * self.nu + i]
    }

    pub fn uv(&self, i: usize, j: usize) -> (f64, f64) {
        (self.u0 + i as f64 * self.h, self.v0 + j as f64 * self.h)
    }

    /// Mean curvature at interior nodes from central differences of the
    /// sampled immersion (second fundamental form over the first).
    pub fn mean_curvature(&self) -> Vec<f64> {
        let h = self.h;
        let mut out = Vec::new();
        for j in 1..self.nv.saturating_sub(1) {
            for i in 1..self.nu.saturating_sub(1) {
                let c = self.at(i, j);
                let (e, w) = (self.at(i + 1, j), self.at(i - 1, j));
                let (n, s) = (self.at(i, j + 1), self.at(i, j - 1));
                let xu = sub3(e, w).map(|t| t / (2.0 * h));
                let xv = sub3(n, s).map(|t| t / (2.0 * h));
                let xuu = [0, 1, 2].map(|k| (e[k] - 2.0 * c[k] + w[k]) / (h * h));
                let xvv = [0, 1, 2].map(|k| (n[k] - 2.0 * c[k] + s[k]) / (h * h));
                let (ne, nw) = (self.at(i + 1, j + 1), self.at(i - 1, j + 1));
                let (se, sw) = (self.at(i + 1, j - 1), self.at(i - 1, j - 1));
                let xuv = [0, 1, 2].map(|k| (ne[k] - nw[k] - se[k] + sw[k]) / (4.0 * h * h));
                let nrm = cross3(xu, xv);
                let nn = norm3(nrm);
                let nrm = nrm.map(|t| t / nn);
                let (ee, ff, gg) = (dot3(xu, xu), dot3(xu, xv), dot3(xv, xv));
                let (l2, m2, n2) = (dot3(xuu, nrm), dot3(xuv, nrm), dot3(xvv, nrm));
                out.push((l2 * gg - 2.0 * m2 * ff + n2 * ee) / (2.0 * (ee * gg - ff * ff)));
            }
        }
        out
    }

    pub fn max_mean_curvature(&self) -> f64 {
        self.mean_curvature().iter().fold(0.0, |m, h| m.max(h.abs()))
    }
}

fn grid_axis(lo: f64, hi: f64, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) || !(hi >= lo) {
        return Err(Error::Domain(format!("bad patch axis [{lo}, {hi}] with spacing {h}")));
    }
    let n = ((hi - lo) / h).round() as usize + 1;
    Ok((0..n).map(|k| lo + k as f64 * h).collect())
}

/// Cumulative integrals from `start` to each of `targets` along one line,
/// stepping outward from the start in both directions.
fn march<F>(targets: &[f64], start: [f64; 3], seg: F) -> Result<Vec<[f64; 3]>>
where
    F: Fn(f64, f64) -> Result<[f64; 3]>,
{
    let mut out = vec![[0.0; 3]; targets.len()];
    let mut up: Vec<usize> = (0..targets.len()).filter(|&k| targets[k] >= 0.0).collect();
    let mut down: Vec<usize> = (0..targets.len()).filter(|&k| targets[k] < 0.0).collect();
    up.sort_by(|&a, &b| targets[a].total_cmp(&targets[b]));
    down.sort_by(|&a, &b| targets[b].total_cmp(&targets[a]));
    for order in [up, down] {
        let (mut pos, mut acc) = (0.0, start);
        for k in order {
            acc = add3(acc, seg(pos, targets[k])?);
            pos = targets[k];
            out[k] = acc;
        }
    }
    Ok(out)
}

/// Samples X = Re ∫ 𝒲 on a chart rectangle with spacing h.
///
/// Paths run from ζ = 0 along v = 0 and then vertically; every sample must
/// keep the detour radius from the ends.
pub fn evaluate_patch(params: &SurfaceParams, region: PatchRegion, h: f64) -> Result<MeshPatch> {
    let us = grid_axis(region.u_min, region.u_max, h)?;
    let vs = grid_axis(region.v_min, region.v_max, h)?;
    for &u in &us {
        for &v in &vs {
            params.check_clear(Complex64::new(u, v))?;
        }
    }
    let base = march(&us, [0.0; 3], |a, b| params.integrate_segment(Complex64::new(a, 0.0), Complex64::new(b, 0.0)))?;
    let columns: Vec<Vec<[f64; 3]>> = us
        .par_iter()
        .zip(base.par_iter())
        .map(|(&u, &x0)| {
            march(&vs, x0, |a, b| params.integrate_segment(Complex64::new(u, a), Complex64::new(u, b)))
        })
        .collect::<Result<_>>()?;
    let (nu, nv) = (us.len(), vs.len());
    let mut points = vec![[0.0; 3]; nu * nv];
    for (i, col) in columns.iter().enumerate() {
        for (j, x) in col.iter().enumerate() {
            points[j * nu + i] = *x;
        }
    }
    let sheets: Vec<Sheet> = vs.iter().map(|&v| Sheet::of_y(params.chart.y_of_v(v))).collect();
    let sheet = if sheets.iter().all(|s| *s == sheets[0]) { Some(sheets[0]) } else { None };
    Ok(MeshPatch { nu, nv, u0: region.u_min, v0: region.v_min, h, points, params: params.clone(), sheet })
}

/// Maximal discrete mean curvature at spacings h, h/2, h/4 and the observed orders.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    pub spacings: [f64; 3],
    pub max_mean_curvature: [f64; 3],
    pub orders: [f64; 2],
}

pub fn minimality_study(params: &SurfaceParams, region: PatchRegion, h: f64) -> Result<MinimalityReport> {
    let spacings = [h, 0.5 * h, 0.25 * h];
    let mut max_h = [0.0; 3];
    for (k, &s) in spacings.iter().enumerate() {
        max_h[k] = evaluate_patch(params, region, s)?.max_mean_curvature();
    }
    let orders = [(max_h[0] / max_h[1]).log2(), (max_h[1] / max_h[2]).log2()];
    Ok(MinimalityReport { spacings, max_mean_curvature: max_h, orders })
}

/// Vertical graph of a KMR example near the end at z = 0 in the catenoidal
/// limit, sampled through the z-plane on sheet one.
///
/// Normalized at the base point z₀ = √ε by the two-term local expansion of the
/// Weierstrass integrals about the end, with zero constants of integration; for
/// α = β = 0 this is X(z₀) = (−(z₀ + 1/z₀)/2, 0, ln z₀) up to the factor μ/λ.
#[derive(Debug, Clone)]
pub struct GraphSampler {
    params: SurfaceParams,
    pub eps: f64,
    base: Complex64,
    base_point: [f64; 3],
    singular: Vec<Complex64>,
}

impl GraphSampler {
    pub fn new(params: &SurfaceParams, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("scale must lie in (0,1), got {eps}")));
        }
        let z0 = eps.sqrt();
        let (zero, pole) = params.end_values();
        let mut singular = vec![Complex64::new(0.0, 0.0), zero];
        singular.extend(pole);
        singular.extend(params.branch_points());
        // Local expansions near the end, with dh ≈ (μ/λ) dz/z, 1/g = c(1/z − t/z² − q + …)
        // and g = (z + t + …)/c:
        //   ∫ dh/g ≈ (μ/λ) c (−1/z + t/(2z²) − q ln z),   ∫ g dh ≈ (μ/λ)(z + t ln z)/c.
        // X₁ + iX₂ = ½ conj(∫ dh/g) − ½ ∫ g dh; constants of integration are set to zero.
        let c = I * params.a.conj() / params.a;
        let t = params.b / params.a;
        let q = params.b.conj() / params.a.conj();
        let ratio = params.mu / params.lambda;
        let zb = Complex64::new(z0, 0.0);
        let lz = zb.ln();
        let d = ratio * c * (-1.0 / zb + t / (2.0 * zb * zb) - q * lz);
        let e = ratio * (zb + t * lz) / c;
        let horizontal = 0.5 * d.conj() - 0.5 * e;
        Ok(Self {
            params: params.clone(),
            eps,
            base: zb,
            base_point: [horizontal.re, horizontal.im, ratio * z0.ln()],
            singular,
        })
    }

    fn density(&self, z: Complex64) -> Result<[Complex64; 3]> {
        let (g, dh) = weierstrass_at(&self.params, z, Sheet::One)?;
        Ok(weierstrass_density(g, dh))
    }

    fn clearance(&self, z: Complex64) -> f64 {
        self.singular.iter().map(|s| (z - s).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Re ∫ along a path z(t), t ∈ [0, 1], given with z'(t); pieces shrink near singular points.
    fn integrate_path<P>(&self, path: P) -> Result<[f64; 3]>
    where
        P: Fn(f64) -> (Complex64, Complex64),
    {
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        let mut t = 0.0;
        let mut guard = 0;
        while t < 1.0 {
            let (z, dz) = path(t);
            let sp = dz.norm().max(1e-300);
            let dt = (0.25 * self.clearance(z) / sp).min(1.0 - t);
            let mid = t + 0.5 * dt;
            for &(x, wt) in rule() {
                let (zs, dzs) = path(mid + 0.5 * dt * x);
                let phi = self.density(zs)?;
                for c in 0..3 {
                    acc[c] += phi[c] * dzs * (0.5 * dt * wt);
                }
            }
            t += dt;
            guard += 1;
            if guard > 100_000 {
                return Err(Error::NoConvergence { iterations: guard, detail: "path subdivision".into() });
            }
        }
        Ok(re3(acc))
    }

    /// X(z) along the arc |z| = √ε from z₀ to arg z, then radially.
    pub fn position(&self, z: Complex64) -> Result<[f64; 3]> {
        let r0 = self.base.re;
        let th = z.arg();
        let arc = self.integrate_path(|t| {
            let e = Complex64::from_polar(r0, th * t);
            (e, I * th * e)
        })?;
        let start = Complex64::from_polar(r0, th);
        let radial = self.integrate_path(|t| (start + (z - start) * t, z - start))?;
        Ok(add3(self.base_point, add3(arc, radial)))
    }

    /// Point z whose image lies over (r cos θ, r sin θ).
    pub fn locate(&self, r: f64, theta: f64) -> Result<Complex64> {
        let target = [r * theta.cos(), r * theta.sin()];
        let mut z = -1.0 / (2.0 * Complex64::new(target[0], -target[1]));
        for it in 0..60 {
            let x = self.position(z)?;
            let (f1, f2) = (x[0] - target[0], x[1] - target[1]);
            if f1.hypot(f2) < 1e-13 * r {
                return Ok(z);
            }
            let phi = self.density(z)?;
            // ∂X/∂(Re z) = Re φ, ∂X/∂(Im z) = −Im φ
            let (j11, j12, j21, j22) = (phi[0].re, -phi[0].im, phi[1].re, -phi[1].im);
            let det = j11 * j22 - j12 * j21;
            let dx = (j22 * f1 - j12 * f2) / det;
            let dy = (j11 * f2 - j21 * f1) / det;
            let mut step = Complex64::new(dx, dy);
            // keep each step within a fraction of |z| so the path stays on the annulus
            let cap = 0.25 * z.norm();
            if step.norm() > cap {
                step *= cap / step.norm();
            }
            z -= step;
            if it == 59 {
                break;
            }
        }
        Err(Error::NoConvergence { iterations: 60, detail: format!("locating r = {r}, theta = {theta}") })
    }

    pub fn height(&self, r: f64, theta: f64) -> Result<f64> {
        Ok(self.position(self.locate(r, theta)?)?[2])
    }

    /// ∇U at (r cos θ, r sin θ) from the Gauss map: ∇U = −(N₁, N₂)/N₃.
    pub fn gradient(&self, r: f64, theta: f64) -> Result<[f64; 2]> {
        let z = self.locate(r, theta)?;
        let g = self.params.gauss(z);
        let n = sphere_from_homogeneous(g, Complex64::new(1.0, 0.0));
        Ok([-n[0] / n[2], -n[1] / n[2]])
    }

    /// Height and r∂_r of the graph.
    pub fn height_and_radial_slope(&self, r: f64, theta: f64) -> Result<(f64, f64)> {
        let z = self.locate(r, theta)?;
        let x = self.position(z)?;
        let g = self.params.gauss(z);
        let n = sphere_from_homogeneous(g, Complex64::new(1.0, 0.0));
        let (gx, gy) = (-n[0] / n[2], -n[1] / n[2]);
        Ok((x[2], r * (theta.cos() * gx + theta.sin() * gy)))
    }
}

/// How the first argument of a dressing extension depends on r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialCoordinate {
    /// t = r.
    Radius,
    /// t = 1/r.
    InverseRadius,
    /// t = s_ε − ln 2r.
    LogInward { s_eps: f64 },
    /// t = ln 2r.
    LogRadius,
}

impl RadialCoordinate {
    pub fn map(&self, r: f64) -> f64 {
        match self {
            RadialCoordinate::Radius => r,
            RadialCoordinate::InverseRadius => 1.0 / r,
            RadialCoordinate::LogInward { s_eps } => s_eps - (2.0 * r).ln(),
            RadialCoordinate::LogRadius => (2.0 * r).ln(),
        }
    }

    /// r dt/dr.
    pub fn r_dt_dr(&self, r: f64) -> f64 {
        match self {
            RadialCoordinate::Radius => r,
            RadialCoordinate::InverseRadius => -1.0 / r,
            RadialCoordinate::LogInward { .. } => -1.0,
            RadialCoordinate::LogRadius => 1.0,
        }
    }
}

/// Boundary data applied through a harmonic extension in a radial coordinate.
#[derive(Debug, Clone)]
pub struct Dressing {
    pub extension: HarmonicExtension,
    pub coordinate: RadialCoordinate,
}

impl Dressing {
    pub fn eval(&self, r: f64, theta: f64) -> f64 {
        self.extension.eval(self.coordinate.map(r), theta)
    }

    pub fn r_dr(&self, r: f64, theta: f64) -> f64 {
        self.extension.d_first(self.coordinate.map(r), theta) * self.coordinate.r_dt_dr(r)
    }

    pub fn d_theta(&self, r: f64, theta: f64) -> f64 {
        self.extension.d_theta(self.coordinate.map(r), theta)
    }
}

/// U(r,θ) = c ln 2r + r(τ₁ cos θ + τ₂ sin θ) + (t₁ cos θ + t₂ sin θ)/r + d + dressing.
#[derive(Debug, Clone)]
pub struct GraphExpansion {
    pub log_coeff: f64,
    pub tilt: (f64, f64),
    pub translation: (f64, f64),
    pub offset: f64,
    pub boundary_radius: f64,
    pub dressing: Option<Dressing>,
    pub remainder_budget: f64,
}

/// Nominal constant C of the Cε remainder budget of the catenoidal expansion.
pub const EXPANSION_BUDGET_CONSTANT: f64 = 1.0;

impl GraphExpansion {
    pub fn new(
        log_coeff: f64,
        tilt: (f64, f64),
        translation: (f64, f64),
        offset: f64,
        boundary_radius: f64,
        remainder_budget: f64,
    ) -> Result<Self> {
        if !(boundary_radius > 0.0) {
            return Err(Error::Domain(format!("boundary radius must be positive, got {boundary_radius}")));
        }
        if !(remainder_budget >= 0.0) {
            return Err(Error::Domain(format!("remainder budget must be nonnegative, got {remainder_budget}")));
        }
        Ok(Self { log_coeff, tilt, translation, offset, boundary_radius, dressing: None, remainder_budget })
    }

    pub fn with_dressing(mut self, dressing: Dressing) -> Self {
        self.dressing = Some(dressing);
        self
    }

    /// The closed-form part, without the dressing.
    pub fn explicit(&self, r: f64, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        self.log_coeff * (2.0 * r).ln()
            + r * (self.tilt.0 * c + self.tilt.1 * s)
            + (self.translation.0 * c + self.translation.1 * s) / r
            + self.offset
    }

    pub fn eval(&self, r: f64, theta: f64) -> f64 {
        self.explicit(r, theta) + self.dressing.as_ref().map_or(0.0, |d| d.eval(r, theta))
    }

    pub fn r_dr(&self, r: f64, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        self.log_coeff + r * (self.tilt.0 * c + self.tilt.1 * s) - (self.translation.0 * c + self.translation.1 * s) / r
            + self.dressing.as_ref().map_or(0.0, |d| d.r_dr(r, theta))
    }

    pub fn d_theta(&self, r: f64, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        r * (-self.tilt.0 * s + self.tilt.1 * c)
            + (-self.translation.0 * s + self.translation.1 * c) / r
            + self.dressing.as_ref().map_or(0.0, |d| d.d_theta(r, theta))
    }
}

/// −(1+γ) ln(2r/(1+γ)) + r(κ₁ cos θ − κ₂ sin θ) − ((1+γ)/r)(ξ₁ cos θ + ξ₂ sin θ) + ξ₃
/// on the annulus around |z| = √ε, with boundary radius ½ε^{−1/2}.
pub fn catenoidal_expansion(params: &SurfaceParams, gamma: f64, xi: [f64; 3], eps: f64) -> Result<GraphExpansion> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("scale must lie in (0,1), got {eps}")));
    }
    let total = params.alpha + params.beta + params.sigma;
    if total > eps {
        return Err(Error::Scale(format!("alpha + beta + sigma = {total} exceeds eps = {eps}")));
    }
    let dil = 1.0 + gamma;
    if !(dil > 0.0) {
        return Err(Error::Domain(format!("dilation 1 + gamma must be positive, got {dil}")));
    }
    GraphExpansion::new(
        -dil,
        (params.kappa1, -params.kappa2),
        (-dil * xi[0], -dil * xi[1]),
        xi[2] + dil * dil.ln(),
        0.5 / eps.sqrt(),
        EXPANSION_BUDGET_CONSTANT * eps,
    )
}

/// Frame of the immersion at a chart point: tangents, unit normal and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFrame {
    pub x_u: [f64; 3],
    pub x_v: [f64; 3],
    pub normal: [f64; 3],
    pub normal_u: [f64; 3],
    pub normal_v: [f64; 3],
    /// 4|g_ζ|² / (1 + |g|²)², the pulled-back sphere metric factor.
    pub sphere_factor: f64,
}

fn normal_and_derivative(a: Complex64, b: Complex64, da: Complex64, db: Complex64) -> ([f64; 3], [f64; 3]) {
    let s = a.norm_sqr() + b.norm_sqr();
    let p = a * b.conj();
    let dp = da * b.conj() + a * db.conj();
    let dna = 2.0 * (da * a.conj()).re;
    let dnb = 2.0 * (db * b.conj()).re;
    let ds = dna + dnb;
    let n = [2.0 * p.re / s, 2.0 * p.im / s, (a.norm_sqr() - b.norm_sqr()) / s];
    let dn = [
        2.0 * dp.re / s - 2.0 * p.re * ds / (s * s),
        2.0 * dp.im / s - 2.0 * p.im * ds / (s * s),
        (dna - dnb) / s - (a.norm_sqr() - b.norm_sqr()) * ds / (s * s),
    ];
    (n, dn)
}

/// Tangent frame and normal derivatives at ζ = u + iv; N is the inverse
/// stereographic image of g (pointing up where |g| > 1).
pub fn surface_frame(params: &SurfaceParams, u: f64, v: f64) -> Result<SurfaceFrame> {
    let [(a, b), (au, bu), (av, bv)] = params.gauss_parts_jet(u, v);
    let scale = a.norm().max(b.norm());
    if a.norm() == 0.0 || b.norm() == 0.0 || !(scale > 0.0) {
        return Err(Error::Pole(format!("end of the surface at ({u}, {v})")));
    }
    let (a, b, au, bu, av, bv) = (a / scale, b / scale, au / scale, bu / scale, av / scale, bv / scale);
    let phi = params.density_in_chart(Complex64::new(u, v))?;
    let x_u = [phi[0].re, phi[1].re, phi[2].re];
    let x_v = [-phi[0].im, -phi[1].im, -phi[2].im];
    let (normal, normal_u) = normal_and_derivative(a, b, au, bu);
    let (_, normal_v) = normal_and_derivative(a, b, av, bv);
    let wr = au * b - a * bu;
    let s = a.norm_sqr() + b.norm_sqr();
    Ok(SurfaceFrame { x_u, x_v, normal, normal_u, normal_v, sphere_factor: 4.0 * wr.norm_sqr() / (s * s) })
}

/// Λ, K and the angles between N_p and the coordinate tangents at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalGeometry {
    /// Conformal factor |X_p|² = |X_q|².
    pub lambda: f64,
    /// Gauss curvature.
    pub k_gauss: f64,
    /// ⟨N_p, X_p⟩ / (√(−K) Λ).
    pub cos_g1: f64,
    /// ⟨N_p, X_q⟩ / (√(−K) Λ).
    pub cos_g2: f64,
}

/// Geometry at ζ = u + iv, with (p, q) = (u, v).
///
/// Λ = ¼ν²(|g| + 1/|g|)² and −K = 4|g_ζ|² / ((1 + |g|²)² Λ).
pub fn normal_geometry(params: &SurfaceParams, u: f64, v: f64) -> Result<NormalGeometry> {
    let fr = surface_frame(params, u, v)?;
    let g = params.gauss_in_chart(Complex64::new(u, v));
    let gn = g.norm();
    let lambda = 0.25 * params.nu * params.nu * (gn + 1.0 / gn).powi(2);
    let k_gauss = -fr.sphere_factor / lambda;
    let scale = (-k_gauss).sqrt() * lambda;
    Ok(NormalGeometry {
        lambda,
        k_gauss,
        cos_g1: dot3(fr.normal_u, fr.x_u) / scale,
        cos_g2: dot3(fr.normal_u, fr.x_v) / scale,
    })
}

/// E_f G_f − F_f² of the normal graph X + fN in conformal coordinates:
/// Λ² + Λ(f_p² + f_q²) + 2KΛ²f² + 2f(f_q² − f_p²)√(−K)Λ cos γ₁
/// − 4f f_p f_q √(−K)Λ cos γ₂ − KΛf²(f_p² + f_q²) + f⁴K²Λ².
pub fn normal_graph_energy_density(f: f64, fp: f64, fq: f64, geo: &NormalGeometry) -> f64 {
    let NormalGeometry { lambda: l, k_gauss: k, cos_g1, cos_g2 } = *geo;
    let root = (-k).sqrt() * l;
    let grad2 = fp * fp + fq * fq;
    l * l + l * grad2 + 2.0 * k * l * l * f * f + 2.0 * f * (fq * fq - fp * fp) * root * cos_g1
        - 4.0 * f * fp * fq * root * cos_g2
        - k * l * f * f * grad2
        + f.powi(4) * k * k * l * l
}

/// Partial derivatives of √(E_fG_f − F_f²) in (f, f_p, f_q).
fn lagrangian_partials(f: f64, fp: f64, fq: f64, geo: &NormalGeometry) -> [f64; 3] {
    let NormalGeometry { lambda: l, k_gauss: k, cos_g1, cos_g2 } = *geo;
    let c1 = (-k).sqrt() * l * cos_g1;
    let c2 = (-k).sqrt() * l * cos_g2;
    let grad2 = fp * fp + fq * fq;
    let d = normal_graph_energy_density(f, fp, fq, geo);
    let d_f = 4.0 * k * l * l * f + 2.0 * (fq * fq - fp * fp) * c1 - 4.0 * fp * fq * c2 - 2.0 * k * l * f * grad2
        + 4.0 * f.powi(3) * k * k * l * l;
    let d_p = 2.0 * l * fp - 4.0 * f * fp * c1 - 4.0 * f * fq * c2 - 2.0 * k * l * f * f * fp;
    let d_q = 2.0 * l * fq + 4.0 * f * fq * c1 - 4.0 * f * fp * c2 - 2.0 * k * l * f * f * fq;
    let inv = 0.5 / d.sqrt();
    [d_f * inv, d_p * inv, d_q * inv]
}

/// Euler–Lagrange expression ∂ℒ/∂f − ∂_p(∂ℒ/∂f_p) − ∂_q(∂ℒ/∂f_q) of the area
/// of the normal graph, with ℒ = √(E_fG_f − F_f²); the outer derivatives are
/// fourth-order differences with step h. `f` returns [f, f_u, f_v].
pub fn euler_lagrange<F>(params: &SurfaceParams, f: &F, u: f64, v: f64, h: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> [f64; 3],
{
    let partials = |uu: f64, vv: f64| -> Result<[f64; 3]> {
        let geo = normal_geometry(params, uu, vv)?;
        let [fv, fu_, fv_] = f(uu, vv);
        Ok(lagrangian_partials(fv, fu_, fv_, &geo))
    };
    let centre = partials(u, v)?;
    let d4 = |idx: usize, du: f64, dv: f64| -> Result<f64> {
        let at = |k: f64| partials(u + k * du, v + k * dv).map(|p| p[idx]);
        Ok((-at(2.0)? + 8.0 * at(1.0)? - 8.0 * at(-1.0)? + at(-2.0)?) / (12.0 * h))
    };
    Ok(centre[0] - d4(1, h, 0.0)? - d4(2, 0.0, h)?)
}

/// Q_σ(f) = EL(f) + 𝓛_σ f; a normal graph is minimal exactly when 𝓛_σ f = Q_σ(f).
/// `f` returns [f, f_u, f_v, f_uu, f_vv].
pub fn q_sigma<F>(params: &SurfaceParams, f: &F, u: f64, v: f64, h: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> [f64; 5],
{
    let first = |uu: f64, vv: f64| {
        let j = f(uu, vv);
        [j[0], j[1], j[2]]
    };
    let el = euler_lagrange(params, &first, u, v, h)?;
    let j = f(u, v);
    Ok(el + lame_apply(&params.chart, u, v, Jet2 { value: j[0], d_aa: j[3], d_bb: j[4] }))
}
