//! Elliptic integrals of the first kind and the l=1 associated Legendre functions.
//!
//! Parameter convention is `m` throughout: K(m) = ∫₀^{π/2} (1 − m sin²u)^{−1/2} du.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Arithmetic-geometric mean of two positive numbers.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        if (an - bn).abs() <= 4.0 * f64::EPSILON * an {
            return 0.5 * (an + bn);
        }
        a = an;
        b = bn;
    }
    a
}

/// K(m) for any m < 1, negative parameters included.
pub(crate) fn k_unchecked(m: f64) -> f64 {
    FRAC_PI_2 / agm(1.0, (1.0 - m).sqrt())
}

/// Complete elliptic integral of the first kind on its principal domain 0 ≤ m < 1.
pub fn complete_k(m: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::Domain(format!("complete_k needs 0 <= m < 1, got {m}")));
    }
    Ok(k_unchecked(m))
}

/// Carlson's symmetric integral R_F(x,y,z) by duplication.
pub fn carlson_rf(x: f64, y: f64, z: f64) -> f64 {
    let (mut x, mut y, mut z) = (x, y, z);
    // truncation error of the fifth-order series is about tol^6
    let tol = 1e-3_f64;
    loop {
        let mu = (x + y + z) / 3.0;
        let dx = 1.0 - x / mu;
        let dy = 1.0 - y / mu;
        let dz = 1.0 - z / mu;
        if dx.abs().max(dy.abs()).max(dz.abs()) < tol {
            let e2 = dx * dy - dz * dz;
            let e3 = dx * dy * dz;
            return (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0) / mu.sqrt();
        }
        let (sx, sy, sz) = (x.sqrt(), y.sqrt(), z.sqrt());
        let lam = sx * (sy + sz) + sy * sz;
        x = 0.25 * (x + lam);
        y = 0.25 * (y + lam);
        z = 0.25 * (z + lam);
    }
}

/// Incomplete integral F(y, m) for any real amplitude and m < 1.
///
/// Odd in y, with F(y + kπ, m) = F(y, m) + 2k K(m).
pub fn incomplete_f(y: f64, m: f64) -> Result<f64> {
    if !(m < 1.0) {
        return Err(Error::Domain(format!("incomplete_f needs m < 1, got {m}")));
    }
    Ok(f_unchecked(y, m))
}

pub(crate) fn f_unchecked(y: f64, m: f64) -> f64 {
    let k = (y / PI).round();
    let phi = y - k * PI;
    let (s, c) = phi.sin_cos();
    let base = s * carlson_rf(c * c, 1.0 - m * s * s, 1.0);
    if k == 0.0 {
        base
    } else {
        base + 2.0 * k * k_unchecked(m)
    }
}

/// P₁ʲ(t): t, −√(1−t²), then zero.
pub fn legendre_p1(j: u32, t: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("legendre_p1 needs |t| <= 1, got {t}")));
    }
    Ok(match j {
        0 => t,
        1 => -(1.0 - t * t).sqrt(),
        _ => 0.0,
    })
}

/// n-th derivative of Q₁⁰ at t, closed form.
fn q10_derivative(n: u32, t: f64) -> f64 {
    let lg = ((1.0 + t) / (1.0 - t)).ln();
    match n {
        0 => 0.5 * t * lg - 1.0,
        1 => 0.5 * lg + t / (1.0 - t * t),
        _ => {
            // Q₁⁰'' = 2/(1−t²)² = ½[(1−t)⁻² + (1+t)⁻² + (1−t)⁻¹ + (1+t)⁻¹]
            let d = n - 2;
            let rising = |p: u32| -> f64 { (0..d).map(|i| (p + i) as f64).product() };
            let sgn = if d % 2 == 0 { 1.0 } else { -1.0 };
            let e2 = rising(2) * ((1.0 - t).powi(-(2 + d as i32)) + sgn * (1.0 + t).powi(-(2 + d as i32)));
            let e1 = rising(1) * ((1.0 - t).powi(-(1 + d as i32)) + sgn * (1.0 + t).powi(-(1 + d as i32)));
            0.5 * (e2 + e1)
        }
    }
}

/// Q₁ʲ(t) = (−1)ʲ (1−t²)^{j/2} dʲQ₁⁰/dtʲ together with its first two t-derivatives.
pub fn legendre_q1_with_derivs(j: u32, t: f64) -> Result<[f64; 3]> {
    if !(t > -1.0 && t < 1.0) {
        return Err(Error::Domain(format!("legendre_q1 needs |t| < 1, got {t}")));
    }
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    let w = 1.0 - t * t;
    let jf = j as f64;
    // s(t) = w^{j/2}; s' = −j t w^{j/2−1}; s'' = −j w^{j/2−1} + j(j−2) t² w^{j/2−2}
    let s = w.powf(0.5 * jf);
    let s1 = -jf * t * w.powf(0.5 * jf - 1.0);
    let s2 = -jf * w.powf(0.5 * jf - 1.0) + jf * (jf - 2.0) * t * t * w.powf(0.5 * jf - 2.0);
    let d0 = q10_derivative(j, t);
    let d1 = q10_derivative(j + 1, t);
    let d2 = q10_derivative(j + 2, t);
    Ok([
        sign * s * d0,
        sign * (s1 * d0 + s * d1),
        sign * (s2 * d0 + 2.0 * s1 * d1 + s * d2),
    ])
}

pub fn legendre_q1(j: u32, t: f64) -> Result<f64> {
    Ok(legendre_q1_with_derivs(j, t)?[0])
}

/// Residual of sin y ∂_y(sin y ∂_y f) − j² f + 2 sin²y f at t = cos y, for f = Q₁ʲ.
///
/// In t the operator reads (1−t²)[(1−t²) f'' − 2t f'] − j² f + 2(1−t²) f.
pub fn legendre_ode_residual(j: u32, t: f64) -> Result<f64> {
    let [f, f1, f2] = legendre_q1_with_derivs(j, t)?;
    let w = 1.0 - t * t;
    let jf = j as f64;
    Ok(w * (w * f2 - 2.0 * t * f1) - jf * jf * f + 2.0 * w * f)
}
