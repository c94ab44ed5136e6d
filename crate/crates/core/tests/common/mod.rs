//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod 7/15 quadrature by recursive bisection.
pub fn quad<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, e) = gk15(f, a, b);
        if e <= tol || depth > 40 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(&f, a, b, tol, 0)
}

/// Elliptic integral of the first kind by direct quadrature of its integrand.
pub fn f_by_quadrature(y: f64, m: f64) -> f64 {
    quad(|t| 1.0 / (1.0 - m * t.sin().powi(2)).sqrt(), 0.0, y, 1e-14)
}

/// Central finite difference of order 8 for the n-th derivative (n = 1, 2).
pub fn fd8<F: Fn(f64) -> f64>(f: F, x: f64, h: f64, n: u32) -> f64 {
    match n {
        1 => {
            let c = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
            let mut s = 0.0;
            for (k, ck) in c.iter().enumerate() {
                let d = (k + 1) as f64 * h;
                s += ck * (f(x + d) - f(x - d));
            }
            s / h
        }
        2 => {
            let c = [8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
            let mut s = -205.0 / 72.0 * f(x);
            for (k, ck) in c.iter().enumerate() {
                let d = (k + 1) as f64 * h;
                s += ck * (f(x + d) + f(x - d));
            }
            s / (h * h)
        }
        _ => unimplemented!("fd8 supports first and second derivatives"),
    }
}

/// Q₁ʲ(cos y(v)) cos(ju) with exact second derivatives in u and v.
pub fn lame_kernel_jet(chart: &kmrglue::coords::ConformalChart, j: u32, u: f64, v: f64) -> kmrglue::jacobi::Jet2 {
    let y = chart.y_of_v(v);
    let (sy, cy) = y.sin_cos();
    let [q, q1, q2] = kmrglue::specfun::legendre_q1_with_derivs(j, cy).unwrap();
    let yv = chart.dy_dv(y);
    let yvv = chart.d2y_dv2(y);
    let a = q;
    let avv = q2 * (sy * yv).powi(2) - q1 * (cy * yv * yv + sy * yvv);
    let jf = j as f64;
    let c = (jf * u).cos();
    kmrglue::jacobi::Jet2 { value: a * c, d_aa: -jf * jf * a * c, d_bb: avv * c }
}
