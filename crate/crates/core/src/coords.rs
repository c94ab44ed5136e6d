//! Sphero-conal coordinates, the branched covering z(x,y) and the conformal (u,v) chart.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::specfun::{f_unchecked, k_unchecked};

/// A point in sphero-conal coordinates with its cone parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpheroConal {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

/// Which copy of the Riemann sphere a point of the torus lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sheet {
    /// y ∈ (0, π) mod 2π; dh ≈ dz/z in the catenoidal limit.
    One,
    /// y ∈ (π, 2π) mod 2π.
    Two,
}

impl Sheet {
    pub fn of_y(y: f64) -> Sheet {
        if y.rem_euclid(2.0 * PI) < PI {
            Sheet::One
        } else {
            Sheet::Two
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Sheet::One => 1.0,
            Sheet::Two => -1.0,
        }
    }
}

pub fn l_of(x: f64, sigma: f64) -> f64 {
    let s = sigma.sin() * x.sin();
    (1.0 - s * s).sqrt()
}

pub fn m_of(y: f64, sigma: f64) -> f64 {
    let c = sigma.cos() * y.cos();
    (1.0 - c * c).sqrt()
}

pub fn k_of(x: f64, y: f64, sigma: f64) -> f64 {
    let (ss, cs) = sigma.sin_cos();
    ss * ss * x.cos().powi(2) + cs * cs * y.sin().powi(2)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma < FRAC_PI_2) {
        return Err(Error::Domain(format!("cone parameter must lie in (0, pi/2), got {sigma}")));
    }
    Ok(())
}

impl SpheroConal {
    pub fn new(x: f64, y: f64, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { x, y, sigma })
    }

    /// The point F(x,y) on the unit sphere.
    pub fn sphere_point(&self) -> [f64; 3] {
        let (sx, cx) = self.x.sin_cos();
        let (sy, cy) = self.y.sin_cos();
        [cx * sy, sx * m_of(self.y, self.sigma), l_of(self.x, self.sigma) * cy]
    }

    pub fn sheet(&self) -> Sheet {
        Sheet::of_y(self.y)
    }

    pub fn is_branch_point(&self, tol: f64) -> bool {
        k_of(self.x, self.y, self.sigma) < tol * tol
    }
}

/// 1 − l(x) cos y, written without cancellation near the poles of z.
fn denominator(p: SpheroConal) -> f64 {
    let l = l_of(p.x, p.sigma);
    let s = p.sigma.sin() * p.x.sin();
    s * s / (1.0 + l) + 2.0 * l * (0.5 * p.y).sin().powi(2)
}

/// Stereographic image z(x,y) = (cos x sin y + i sin x m(y)) / (1 − l(x) cos y).
pub fn z_map(p: SpheroConal) -> Result<Complex64> {
    let (sx, cx) = p.x.sin_cos();
    let sy = p.y.sin();
    let den = denominator(p);
    if den.abs() < 1e-300 {
        return Err(Error::Pole(format!("z(x={}, y={}) is infinite", p.x, p.y)));
    }
    Ok(Complex64::new(cx * sy, sx * m_of(p.y, p.sigma)) / den)
}

/// Numerator and denominator of z, both finite everywhere (z = num / den).
///
/// Both vanish together only at the two preimages of each pole of the
/// stereographic map, where the ratio is still the limit along the chart.
pub fn z_parts(p: SpheroConal) -> (Complex64, f64) {
    let (sx, cx) = p.x.sin_cos();
    (Complex64::new(cx * p.y.sin(), sx * m_of(p.y, p.sigma)), denominator(p))
}

/// x- and y-derivatives of (num, den) from [`z_parts`].
pub fn z_parts_partials(p: SpheroConal) -> [(Complex64, f64); 2] {
    let (sx, cx) = p.x.sin_cos();
    let (sy, cy) = p.y.sin_cos();
    let l = l_of(p.x, p.sigma);
    let m = m_of(p.y, p.sigma);
    let s2 = p.sigma.sin().powi(2);
    let c2 = p.sigma.cos().powi(2);
    let dl = -s2 * sx * cx / l;
    let dm = c2 * cy * sy / m;
    [
        (Complex64::new(-sx * sy, cx * m), -dl * cy),
        (Complex64::new(cx * cy, sx * dm), l * sy),
    ]
}

/// ∂z/∂x at a sphero-conal point (z is holomorphic in u + iv, so ∂z/∂ζ = l(x) ∂z/∂x).
pub fn z_map_dx(p: SpheroConal) -> Result<Complex64> {
    let (sx, cx) = p.x.sin_cos();
    let (sy, cy) = p.y.sin_cos();
    let l = l_of(p.x, p.sigma);
    let m = m_of(p.y, p.sigma);
    let s2 = p.sigma.sin().powi(2);
    let dl = -s2 * sx * cx / l;
    let num = Complex64::new(cx * sy, sx * m);
    let dnum = Complex64::new(-sx * sy, cx * m);
    let den = denominator(p);
    if den.abs() < 1e-300 {
        return Err(Error::Pole(format!("z(x={}, y={}) is infinite", p.x, p.y)));
    }
    let dden = -dl * cy;
    Ok((dnum * den - num * dden) / (den * den))
}

/// Conformal cylinder chart of the sphere for one cone parameter.
///
/// u(x) = F(x, sin²σ) and v(y) = (F(y, −cot²σ) − K(−cot²σ)) / sin σ, both in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalChart {
    pub sigma: f64,
    pub u_period: f64,
    pub v_period: f64,
    m_u: f64,
    m_v: f64,
    k_v: f64,
    sin_sigma: f64,
}

pub fn build_chart(sigma: f64) -> Result<ConformalChart> {
    check_sigma(sigma)?;
    let (ss, cs) = sigma.sin_cos();
    let m_u = ss * ss;
    let m_v = -(cs * cs) / (ss * ss);
    let k_v = k_unchecked(m_v);
    Ok(ConformalChart {
        sigma,
        u_period: 4.0 * k_unchecked(m_u),
        v_period: 4.0 * k_v / ss,
        m_u,
        m_v,
        k_v,
        sin_sigma: ss,
    })
}

impl ConformalChart {
    pub fn u_of_x(&self, x: f64) -> f64 {
        f_unchecked(x, self.m_u)
    }

    pub fn v_of_y(&self, y: f64) -> f64 {
        (f_unchecked(y, self.m_v) - self.k_v) / self.sin_sigma
    }

    /// dx/du = l(x).
    pub fn dx_du(&self, x: f64) -> f64 {
        l_of(x, self.sigma)
    }

    /// dy/dv = m(y).
    pub fn dy_dv(&self, y: f64) -> f64 {
        m_of(y, self.sigma)
    }

    /// d²y/dv² = cos²σ sin y cos y.
    pub fn d2y_dv2(&self, y: f64) -> f64 {
        self.sigma.cos().powi(2) * y.sin() * y.cos()
    }

    /// d²x/du² = −sin²σ sin x cos x.
    pub fn d2x_du2(&self, x: f64) -> f64 {
        -self.m_u * x.sin() * x.cos()
    }

    pub fn x_of_u(&self, u: f64) -> f64 {
        let turns = (u / self.u_period).floor();
        let r = u - turns * self.u_period;
        let x = invert_monotone(|x| self.u_of_x(x), |x| 1.0 / self.dx_du(x), r, 0.0, 2.0 * PI);
        x + 2.0 * PI * turns
    }

    pub fn y_of_v(&self, v: f64) -> f64 {
        // v(y + π) = v(y) + V/2 and v(0) = −V/4
        let half = 0.5 * self.v_period;
        let shifts = ((v + 0.25 * self.v_period) / half).floor();
        let r = v - shifts * half;
        let y = invert_monotone(|y| self.v_of_y(y), |y| 1.0 / self.dy_dv(y), r, 0.0, PI);
        y + PI * shifts
    }

    pub fn point(&self, u: f64, v: f64) -> SpheroConal {
        SpheroConal { x: self.x_of_u(u), y: self.y_of_v(v), sigma: self.sigma }
    }

    /// z at the chart point (u, v); the sheet is read off y(v).
    pub fn z_at(&self, u: f64, v: f64) -> Result<(Complex64, Sheet)> {
        let p = self.point(u, v);
        Ok((z_map(p)?, p.sheet()))
    }

    /// dz/dζ at ζ = u + iv.
    pub fn dz_dzeta(&self, u: f64, v: f64) -> Result<Complex64> {
        let p = self.point(u, v);
        Ok(z_map_dx(p)? * l_of(p.x, self.sigma))
    }

    /// Conformal factor |F_u|² = |F_v|² = k(x(u), y(v)).
    pub fn conformal_factor(&self, u: f64, v: f64) -> f64 {
        let p = self.point(u, v);
        k_of(p.x, p.y, self.sigma)
    }
}

/// Safeguarded Newton for an increasing function on [lo, hi].
fn invert_monotone<F, D>(f: F, df: D, target: f64, mut lo: f64, mut hi: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x) - target;
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = fx / df(x);
        let mut nx = x - step;
        if !(nx > lo && nx < hi) || !step.is_finite() {
            nx = 0.5 * (lo + hi);
        }
        if (nx - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo < 1e-15 {
            return nx;
        }
        x = nx;
    }
    x
}

/// v-coordinate of the circle |z| = √ε measured along the meridian x = 0.
///
/// There z = cot(y/2) on sheet one, so y = 2 arctan(ε^{−1/2}).
pub fn v_epsilon(sigma: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("scale must lie in (0,1), got {eps}")));
    }
    let chart = build_chart(sigma)?;
    Ok(chart.v_of_y(2.0 * (1.0 / eps.sqrt()).atan()))
}
