//! Linearized operators: catenoid and plane Jacobi operators, the Lamé operator
//! on the conformal cylinder, its reduced spectrum in u, a mode-wise right
//! inverse on half cylinders and a mode-radial Dirichlet solver outside a disk.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::coords::{build_chart, l_of, ConformalChart};
use crate::error::{Error, Result};
use crate::harmonic::Parity;

/// Value and pure second derivatives of a field in its two coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub value: f64,
    pub d_aa: f64,
    pub d_bb: f64,
}

/// (1/cosh²s)(w_ss + w_θθ + 2w/cosh²s) at one point, from exact derivatives.
pub fn catenoid_jacobi(s: f64, w: Jet2) -> f64 {
    let sech2 = 1.0 / s.cosh().powi(2);
    sech2 * (w.d_aa + w.d_bb + 2.0 * sech2 * w.value)
}

/// |x|⁴ Δ₀v at x from a fourth-order five-point Laplacian with step h.
pub fn plane_jacobi<F: Fn([f64; 2]) -> f64>(v: F, x: [f64; 2], h: f64) -> f64 {
    let c = v(x);
    let mut lap = 0.0;
    for d in 0..2 {
        let at = |k: f64| {
            let mut p = x;
            p[d] += k * h;
            v(p)
        };
        lap += (-at(2.0) + 16.0 * at(1.0) - 30.0 * c + 16.0 * at(-1.0) - at(-2.0)) / (12.0 * h * h);
    }
    (x[0] * x[0] + x[1] * x[1]).powi(2) * lap
}

/// A field sampled on a uniform grid t_k = t0 + k dt (k < nt) times a periodic
/// angle grid of `n_angle` points over `angle_period`; row-major in t.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub t0: f64,
    pub dt: f64,
    pub nt: usize,
    pub n_angle: usize,
    pub angle_period: f64,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn from_fn<F: Fn(f64, f64) -> f64>(t0: f64, dt: f64, nt: usize, n_angle: usize, angle_period: f64, f: F) -> Self {
        let mut values = Vec::with_capacity(nt * n_angle);
        for k in 0..nt {
            for j in 0..n_angle {
                values.push(f(t0 + k as f64 * dt, angle_period * j as f64 / n_angle as f64));
            }
        }
        Self { t0, dt, nt, n_angle, angle_period, values }
    }

    pub fn at(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.n_angle + j % self.n_angle]
    }

    pub fn angle(&self, j: usize) -> f64 {
        self.angle_period * j as f64 / self.n_angle as f64
    }

    /// Second-order central second derivatives at interior t-rows.
    fn second_derivs(&self, k: usize, j: usize) -> (f64, f64) {
        let da = self.angle_period / self.n_angle as f64;
        let jm = (j + self.n_angle - 1) % self.n_angle;
        let jp = (j + 1) % self.n_angle;
        let c = self.at(k, j);
        let tt = (self.at(k + 1, j) - 2.0 * c + self.at(k - 1, j)) / (self.dt * self.dt);
        let aa = (self.at(k, jp) - 2.0 * c + self.at(k, jm)) / (da * da);
        (tt, aa)
    }

    fn map_interior<F: Fn(f64, f64, Jet2) -> f64>(&self, op: F) -> GridField {
        let nt = self.nt.saturating_sub(2);
        let mut values = Vec::with_capacity(nt * self.n_angle);
        for k in 1..self.nt.saturating_sub(1) {
            for j in 0..self.n_angle {
                let (tt, aa) = self.second_derivs(k, j);
                let jet = Jet2 { value: self.at(k, j), d_aa: tt, d_bb: aa };
                values.push(op(self.t0 + k as f64 * self.dt, self.angle(j), jet));
            }
        }
        GridField { t0: self.t0 + self.dt, dt: self.dt, nt, n_angle: self.n_angle, angle_period: self.angle_period, values }
    }
}

/// Catenoid Jacobi operator on a sampled (s, θ) grid; boundary rows are dropped.
pub fn catenoid_jacobi_grid(w: &GridField) -> GridField {
    w.map_interior(|s, _, jet| catenoid_jacobi(s, jet))
}

/// ∂²_uu f + ∂²_vv f + 2 sin²σ cos²(x(u)) f + 2 cos²σ sin²(y(v)) f at one point.
pub fn lame_apply(chart: &ConformalChart, u: f64, v: f64, f: Jet2) -> f64 {
    let p = chart.point(u, v);
    let (ss, cs) = chart.sigma.sin_cos();
    f.d_uu() + f.d_vv() + 2.0 * (ss * ss * p.x.cos().powi(2) + cs * cs * p.y.sin().powi(2)) * f.value
}

impl Jet2 {
    fn d_uu(&self) -> f64 {
        self.d_aa
    }
    fn d_vv(&self) -> f64 {
        self.d_bb
    }
}

/// Lamé operator on a grid whose first coordinate is v and whose angle is u.
pub fn lame_apply_grid(chart: &ConformalChart, f: &GridField) -> GridField {
    f.map_interior(|v, u, jet| lame_apply(chart, u, v, Jet2 { value: jet.value, d_aa: jet.d_bb, d_bb: jet.d_aa }))
}

/// Eigenpairs of −(∂²_uu + 2 sin²σ cos²x(u)) on U_σ-periodic functions of one parity.
#[derive(Debug, Clone)]
pub struct SpectralSystem {
    pub sigma: f64,
    pub parity: Parity,
    /// λ_{σ,i} for i = first_index, first_index + 1, ...
    pub eigenvalues: Vec<f64>,
    pub first_index: usize,
    pub u_period: f64,
    /// Galerkin coefficients in cos(kx) (even) or sin(kx) (odd).
    coeffs: Vec<Vec<f64>>,
    chart: Option<ConformalChart>,
}

pub const MAX_SPECTRUM_MODES: usize = 32;

fn basis_x(parity: Parity, k: usize, x: f64) -> [f64; 3] {
    let fk = k as f64;
    let (s, c) = (fk * x).sin_cos();
    match parity {
        Parity::Even => [c, -fk * s, -fk * fk * c],
        Parity::Odd => [s, fk * c, -fk * fk * s],
    }
}

/// Reduced Lamé spectrum by Fourier–Galerkin in x.
///
/// In x the weak form reads ∫ l e′f′ dx − ∫ 2 sin²σ cos²x e f / l dx = λ ∫ e f / l dx,
/// a generalized symmetric problem reduced by Cholesky. σ = 0 is accepted and gives the flat case.
pub fn reduced_spectrum(sigma: f64, n: usize, parity: Parity) -> Result<SpectralSystem> {
    if n > MAX_SPECTRUM_MODES {
        return Err(Error::Domain(format!("at most {MAX_SPECTRUM_MODES} modes, asked for {n}")));
    }
    if !(sigma >= 0.0 && sigma < PI / 2.0) {
        return Err(Error::Domain(format!("cone parameter must lie in [0, pi/2), got {sigma}")));
    }
    let chart = if sigma > 0.0 { Some(build_chart(sigma)?) } else { None };
    let first_index = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    let kmax = (2 * n + 24).max(48);
    let ks: Vec<usize> = (first_index..=kmax).collect();
    let nb = ks.len();
    let nx = 8 * kmax;
    let s2 = sigma.sin().powi(2);
    let mut stiff = DMatrix::<f64>::zeros(nb, nb);
    let mut mass = DMatrix::<f64>::zeros(nb, nb);
    let dx = 2.0 * PI / nx as f64;
    let mut vals = vec![[0.0; 3]; nb];
    for q in 0..nx {
        let x = q as f64 * dx;
        let l = l_of(x, sigma);
        let pot = 2.0 * s2 * x.cos().powi(2) / l;
        for (a, k) in ks.iter().enumerate() {
            vals[a] = basis_x(parity, *k, x);
        }
        for a in 0..nb {
            for b in a..nb {
                let (ea, eb) = (vals[a], vals[b]);
                stiff[(a, b)] += dx * (l * ea[1] * eb[1] - pot * ea[0] * eb[0]);
                mass[(a, b)] += dx * ea[0] * eb[0] / l;
            }
        }
    }
    for a in 0..nb {
        for b in 0..a {
            stiff[(a, b)] = stiff[(b, a)];
            mass[(a, b)] = mass[(b, a)];
        }
    }
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("Galerkin mass matrix is not positive definite".into()))?;
    let lower = chol.l();
    let linv = lower
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
    let reduced = &linv * &stiff * linv.transpose();
    let reduced = 0.5 * (&reduced + reduced.transpose());
    let eig = reduced.symmetric_eigen();
    let mut order: Vec<usize> = (0..nb).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let count = n + 1 - first_index.min(n + 1);
    let mut eigenvalues = Vec::with_capacity(count);
    let mut coeffs = Vec::with_capacity(count);
    for &idx in order.iter().take(count) {
        let y: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        // c = L^{-T} y is M-orthonormal, i.e. ∫ e² du = 1
        let mut c: Vec<f64> = (linv.transpose() * y).iter().copied().collect();
        let sign_probe = match parity {
            Parity::Even => c.iter().sum::<f64>(),
            Parity::Odd => c.iter().zip(&ks).map(|(c, k)| c * *k as f64).sum::<f64>(),
        };
        if sign_probe < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        eigenvalues.push(eig.eigenvalues[idx]);
        coeffs.push(c);
    }
    let u_period = chart.as_ref().map_or(2.0 * PI, |c| c.u_period);
    Ok(SpectralSystem { sigma, parity, eigenvalues, first_index, u_period, coeffs, chart })
}

impl SpectralSystem {
    /// One past the largest stored index.
    pub fn len(&self) -> usize {
        self.first_index + self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalue(&self, i: usize) -> Option<f64> {
        i.checked_sub(self.first_index).and_then(|k| self.eigenvalues.get(k).copied())
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.first_index..self.len()
    }

    fn x_of_u(&self, u: f64) -> f64 {
        self.chart.as_ref().map_or(u, |c| c.x_of_u(u))
    }

    /// e_{σ,i}(u) with its first two u-derivatives; zero outside the stored range.
    pub fn eval_with_derivs(&self, i: usize, u: f64) -> [f64; 3] {
        let Some(k) = i.checked_sub(self.first_index) else { return [0.0; 3] };
        let Some(c) = self.coeffs.get(k) else { return [0.0; 3] };
        let x = self.x_of_u(u);
        self.eval_at_x(c, x)
    }

    fn eval_at_x(&self, c: &[f64], x: f64) -> [f64; 3] {
        let mut e = [0.0; 3];
        for (a, ca) in c.iter().enumerate() {
            let b = basis_x(self.parity, a + self.first_index, x);
            for q in 0..3 {
                e[q] += ca * b[q];
            }
        }
        let l = l_of(x, self.sigma);
        let x_uu = -self.sigma.sin().powi(2) * x.sin() * x.cos();
        [e[0], l * e[1], l * l * e[2] + x_uu * e[1]]
    }

    pub fn eval(&self, i: usize, u: f64) -> f64 {
        self.eval_with_derivs(i, u)[0]
    }

    /// e_{σ,i} sampled on n uniform points of [0, U_σ).
    pub fn sample_grid(&self, i: usize, n: usize) -> Vec<f64> {
        (0..n).map(|q| self.eval(i, self.u_period * q as f64 / n as f64)).collect()
    }

    /// Sup over a u-grid of |e_{σ,i}(u) − cos(i x(u))·norm| (sin for odd data).
    pub fn distance_to_flat(&self, i: usize, n: usize) -> f64 {
        let norm = if i == 0 { (1.0 / self.u_period).sqrt() } else { (2.0 / self.u_period).sqrt() };
        (0..n)
            .map(|q| {
                let u = self.u_period * q as f64 / n as f64;
                let x = self.x_of_u(u);
                let flat = basis_x(self.parity, i, x)[0] * norm;
                (self.eval(i, u) - flat).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// One row of the eigenvalue bound check −2 sin²σ ≤ λ_{σ,i} − i² ≤ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub index: usize,
    pub lambda: f64,
    pub shift: f64,
    pub lower: f64,
    pub holds: bool,
    /// λ_{σ,i} − (2πi/U_σ)², the comparison that does hold asymptotically.
    pub period_shift: f64,
}

pub fn eigenvalue_bound_check(sys: &SpectralSystem, tol: f64) -> Vec<BoundRow> {
    let lower = -2.0 * sys.sigma.sin().powi(2);
    sys.indices()
        .map(|i| {
            let lambda = sys.eigenvalue(i).unwrap_or(f64::NAN);
            let shift = lambda - (i * i) as f64;
            let k = 2.0 * PI * i as f64 / sys.u_period;
            BoundRow {
                index: i,
                lambda,
                shift,
                lower,
                holds: shift >= lower - tol && shift <= tol,
                period_shift: lambda - k * k,
            }
        })
        .collect()
}

/// CSV with columns i, lambda, lambda_minus_i_sq.
pub fn spectrum_csv(sys: &SpectralSystem) -> String {
    let mut out = String::from("i,lambda,lambda_minus_i_sq\n");
    for i in sys.indices() {
        let lambda = sys.eigenvalue(i).unwrap_or(f64::NAN);
        out.push_str(&format!("{i},{lambda:.12e},{:.12e}\n", lambda - (i * i) as f64));
    }
    out
}

/// v-potential 2 cos²σ sin²(y(v)) of the Lamé operator.
fn v_potential(chart: &ConformalChart, v: f64) -> f64 {
    2.0 * chart.sigma.cos().powi(2) * chart.y_of_v(v).sin().powi(2)
}

/// Mode-wise solution of 𝓛_σ w = f on [v₀, v_max].
#[derive(Debug, Clone)]
pub struct HalfCylinderSolution {
    pub v0: f64,
    pub v_max: f64,
    pub dv: f64,
    /// modes[i - first_index][k] = w_i(v₀ + k dv)
    pub modes: Vec<Vec<f64>>,
    pub forcing: Vec<Vec<f64>>,
    pub system: SpectralSystem,
}

impl HalfCylinderSolution {
    pub fn node(&self, k: usize) -> f64 {
        self.v0 + k as f64 * self.dv
    }

    pub fn eval_node(&self, k: usize, u: f64) -> f64 {
        self.modes
            .iter()
            .enumerate()
            .map(|(m, w)| w.get(k).copied().unwrap_or(0.0) * self.system.eval(m + self.system.first_index, u))
            .sum()
    }

    /// Weighted sup of the solution, max_k e^{−μ v_k} Σ|w_i(v_k)| sup|e_i|.
    pub fn weighted_norm(&self, mu: f64) -> f64 {
        weighted_modal_norm(&self.modes, self.v0, self.dv, mu)
    }

    pub fn forcing_weighted_norm(&self, mu: f64) -> f64 {
        weighted_modal_norm(&self.forcing, self.v0, self.dv, mu)
    }

    /// Fourth-order finite-difference residual w_i'' + (Q − λ_i) w_i − f_i of one mode, max over interior nodes.
    pub fn mode_residual(&self, chart: &ConformalChart, i: usize) -> f64 {
        let m = i - self.system.first_index;
        let w = &self.modes[m];
        let f = &self.forcing[m];
        let lambda = self.system.eigenvalue(i).unwrap_or(0.0);
        let h2 = self.dv * self.dv;
        let mut worst: f64 = 0.0;
        for k in 2..w.len().saturating_sub(2) {
            let d2 = (-w[k + 2] + 16.0 * w[k + 1] - 30.0 * w[k] + 16.0 * w[k - 1] - w[k - 2]) / (12.0 * h2);
            let q = v_potential(chart, self.node(k));
            worst = worst.max((d2 + (q - lambda) * w[k] - f[k]).abs());
        }
        worst
    }
}

fn weighted_modal_norm(modes: &[Vec<f64>], v0: f64, dv: f64, mu: f64) -> f64 {
    let n = modes.iter().map(Vec::len).max().unwrap_or(0);
    (0..n)
        .map(|k| {
            let s: f64 = modes.iter().map(|w| w.get(k).map_or(0.0, |x| x.abs())).sum();
            (-mu * (v0 + k as f64 * dv)).exp() * s
        })
        .fold(0.0, f64::max)
}

const HALF_CYLINDER_LENGTH: f64 = 20.0;
const HALF_CYLINDER_STEP: f64 = 0.005;
const PROJECTION_POINTS: usize = 256;

fn check_right_inverse_inputs(sys: &SpectralSystem, mu: f64) -> Result<ConformalChart> {
    if !(mu > -2.0 && mu < -1.0) {
        return Err(Error::Weight(format!("weight must lie in (-2,-1), got {mu}")));
    }
    if sys.parity != Parity::Even {
        return Err(Error::Parity("right inverse is defined on even functions".into()));
    }
    sys.chart
        .clone()
        .ok_or_else(|| Error::Domain("right inverse needs a positive cone parameter".into()))
}

/// Right inverse of 𝓛_σ on [v₀, ∞) truncated at v₀ + 20, for a forcing field f(u, v).
///
/// The forcing is projected on the eigenbasis of `sys` and handed to
/// [`right_inverse_modal`].
pub fn right_inverse_halfcylinder<F>(sys: &SpectralSystem, v0: f64, f: F, mu: f64) -> Result<HalfCylinderSolution>
where
    F: Fn(f64, f64) -> f64,
{
    check_right_inverse_inputs(sys, mu)?;
    let du = sys.u_period / PROJECTION_POINTS as f64;
    let us: Vec<f64> = (0..PROJECTION_POINTS).map(|q| q as f64 * du).collect();
    let basis: Vec<Vec<f64>> = sys.indices().map(|i| us.iter().map(|&u| sys.eval(i, u)).collect()).collect();
    let nsteps = (HALF_CYLINDER_LENGTH / HALF_CYLINDER_STEP).round() as usize;
    let mut proj = vec![vec![0.0; nsteps + 1]; basis.len()];
    for k in 0..=nsteps {
        let v = v0 + k as f64 * HALF_CYLINDER_STEP;
        let samples: Vec<f64> = us.iter().map(|&u| f(u, v)).collect();
        for (m, e) in basis.iter().enumerate() {
            proj[m][k] = du * samples.iter().zip(e).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let first = sys.first_index;
    right_inverse_modal(sys, v0, |i, k, _| proj[i - first][k], mu)
}

/// Right inverse of 𝓛_σ from modal forcing f_i(v), given as `f(i, node, v)`.
///
/// Each mode w_i'' + (Q(v) − λ_i) w_i = f_i, Q = 2 cos²σ sin²y(v), is discretized by
/// Numerov's fourth-order scheme on a 0.005 grid. Modes i ≥ 2 are solved as a two-point
/// problem with w_i(v₀) = 0 and the outflow condition w′ = −√(i²−2) w at the far end.
/// Modes 0 and 1 start from zero Cauchy data at the far end and are marched back to v₀;
/// their trace there lies in span{e_0, e_1}.
pub fn right_inverse_modal<F>(sys: &SpectralSystem, v0: f64, f: F, mu: f64) -> Result<HalfCylinderSolution>
where
    F: Fn(usize, usize, f64) -> f64,
{
    let chart = check_right_inverse_inputs(sys, mu)?;
    let dv = HALF_CYLINDER_STEP;
    let nsteps = (HALF_CYLINDER_LENGTH / dv).round() as usize;
    let v_max = v0 + nsteps as f64 * dv;
    let nodes: Vec<f64> = (0..=nsteps).map(|k| v0 + k as f64 * dv).collect();
    let qv: Vec<f64> = nodes.iter().map(|&v| v_potential(&chart, v)).collect();
    let mut modes = Vec::with_capacity(sys.eigenvalues.len());
    let mut forcing = Vec::with_capacity(sys.eigenvalues.len());
    let (mut near, mut far) = (0.0_f64, 0.0_f64);
    for i in sys.indices() {
        let fm: Vec<f64> = nodes.iter().enumerate().map(|(k, &v)| f(i, k, v)).collect();
        near += fm[0].abs();
        far += fm[nsteps].abs();
        let lambda = sys.eigenvalue(i).unwrap_or(0.0);
        let coef: Vec<f64> = qv.iter().map(|q| q - lambda).collect();
        let w = if i >= 2 {
            let kappa = ((i * i) as f64 - 2.0).sqrt();
            numerov_two_point(&coef, &fm, dv, kappa)
        } else {
            numerov_backward(&coef, &fm, dv)
        };
        modes.push(w);
        forcing.push(fm);
    }
    if far * (-mu * v_max).exp() > 10.0 * near.max(1e-300) * (-mu * v0).exp() + 1e-12 {
        return Err(Error::Weight("forcing does not decay at the prescribed weight".into()));
    }
    Ok(HalfCylinderSolution { v0, v_max, dv, modes, forcing, system: sys.clone() })
}

/// Numerov for w'' = −c w + f with w(0) = 0 and (w_N − w_{N−1})/h = −κ w_N.
fn numerov_two_point(coef: &[f64], f: &[f64], h: f64, kappa: f64) -> Vec<f64> {
    let n = coef.len();
    let h2 = h * h / 12.0;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    diag[0] = 1.0;
    for k in 1..n - 1 {
        // (1 + h²c/12) w_{k±1} and −2(1 − 5h²c/12) w_k
        lower[k] = 1.0 + h2 * coef[k - 1];
        diag[k] = -2.0 + 10.0 * h2 * coef[k];
        upper[k] = 1.0 + h2 * coef[k + 1];
        rhs[k] = h2 * (f[k + 1] + 10.0 * f[k] + f[k - 1]);
    }
    lower[n - 1] = -1.0;
    diag[n - 1] = 1.0 + kappa * h;
    thomas(&lower, &diag, &upper, &rhs)
}

/// Numerov marched from zero Cauchy data at the far end back to the start.
fn numerov_backward(coef: &[f64], f: &[f64], h: f64) -> Vec<f64> {
    let n = coef.len();
    let h2 = h * h / 12.0;
    let mut w = vec![0.0; n];
    // w(V) = w'(V) = 0, so w(V − h) = h² f/2 + O(h³)
    w[n - 2] = 0.5 * h * h * f[n - 1];
    for k in (1..n - 1).rev() {
        let num = -(1.0 + h2 * coef[k + 1]) * w[k + 1] + (2.0 - 10.0 * h2 * coef[k]) * w[k]
            + h2 * (f[k + 1] + 10.0 * f[k] + f[k - 1]);
        w[k - 1] = num / (1.0 + h2 * coef[k - 1]);
    }
    w
}

/// Smallest singular value of the Dirichlet problem for 𝓛_σ on [v₀, v₁] restricted to modes 2..=n.
pub fn injectivity_singular_value(sys: &SpectralSystem, chart: &ConformalChart, v0: f64, v1: f64, nodes: usize) -> f64 {
    let h = (v1 - v0) / (nodes + 1) as f64;
    let mut worst = f64::INFINITY;
    for i in sys.indices().filter(|&i| i >= 2) {
        let lambda = sys.eigenvalue(i).unwrap_or(0.0);
        let mut a = DMatrix::<f64>::zeros(nodes, nodes);
        for k in 0..nodes {
            let v = v0 + (k + 1) as f64 * h;
            a[(k, k)] = -2.0 / (h * h) + v_potential(chart, v) - lambda;
            if k > 0 {
                a[(k, k - 1)] = 1.0 / (h * h);
            }
            if k + 1 < nodes {
                a[(k, k + 1)] = 1.0 / (h * h);
            }
        }
        let sv = a.singular_values();
        worst = worst.min(sv.iter().copied().fold(f64::INFINITY, f64::min));
    }
    worst
}

/// Uniform (t = ln(ρ/s), θ) grid outside the disk |ζ| = s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExteriorGrid {
    pub s: f64,
    pub nt: usize,
    pub n_theta: usize,
    pub t_max: f64,
}

/// Outer radius of the exterior grid is 10³ times the inner one.
pub const EXTERIOR_RADIUS_RATIO: f64 = 1000.0;

impl ExteriorGrid {
    pub fn new(s: f64, nt: usize, n_theta: usize) -> Result<Self> {
        if !(s > 0.0) || nt < 4 || n_theta < 4 {
            return Err(Error::Domain("exterior grid needs s > 0, nt >= 4, n_theta >= 4".into()));
        }
        Ok(Self { s, nt, n_theta, t_max: EXTERIOR_RADIUS_RATIO.ln() })
    }

    pub fn dt(&self) -> f64 {
        self.t_max / (self.nt - 1) as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn rho(&self, k: usize) -> f64 {
        self.s * self.t(k).exp()
    }

    pub fn theta(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_theta as f64
    }

    pub fn index(&self, k: usize, j: usize) -> usize {
        k * self.n_theta + j
    }

    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nt * self.n_theta);
        for k in 0..self.nt {
            for j in 0..self.n_theta {
                out.push(f(self.rho(k), self.theta(j)));
            }
        }
        out
    }

    /// Weighted mean under the volume element (s/ρ)⁴ ρ dρ dθ = s² e^{−2t} dt dθ.
    pub fn weighted_mean(&self, values: &[f64]) -> f64 {
        let dt = self.dt();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..self.nt {
            let edge = if k == 0 || k + 1 == self.nt { 0.5 } else { 1.0 };
            let w = edge * (-2.0 * self.t(k)).exp() * dt;
            for j in 0..self.n_theta {
                num += w * values[self.index(k, j)];
                den += w;
            }
        }
        num / den
    }
}

/// Real Fourier analysis in θ of one grid row: (a_j, b_j) for j = 0..=n_theta/2.
pub(crate) fn row_modes(row: &[f64]) -> Vec<(f64, f64)> {
    use rustfft::{num_complex::Complex, FftPlanner};
    let n = row.len();
    let mut buf: Vec<Complex<f64>> = row.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    (0..=n / 2)
        .map(|j| {
            let w = if j == 0 || 2 * j == n { 1.0 } else { 2.0 };
            (w * buf[j].re / n as f64, -w * buf[j].im / n as f64)
        })
        .collect()
}

pub(crate) fn row_synthesis(modes: &[(f64, f64)], n: usize, out: &mut [f64]) {
    for (q, o) in out.iter_mut().enumerate().take(n) {
        let th = 2.0 * PI * q as f64 / n as f64;
        *o = modes.iter().enumerate().map(|(j, (a, b))| {
            let (s, c) = (j as f64 * th).sin_cos();
            a * c + b * s
        }).sum();
    }
}

/// Tridiagonal solve (Thomas) of lower/diag/upper with right-hand side.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Solves w_j'' − j² w_j = g on the uniform t grid with w_j(0) = 0 and w_j'(T) = −j w_j(T).
pub(crate) fn exterior_mode_solve(j: usize, g: &[f64], dt: f64) -> Vec<f64> {
    let n = g.len();
    let fj = j as f64;
    let h2 = dt * dt;
    let mut lower = vec![1.0 / h2; n];
    let mut diag = vec![-2.0 / h2 - fj * fj; n];
    let mut upper = vec![1.0 / h2; n];
    let mut rhs = g.to_vec();
    // Dirichlet row at t = 0
    diag[0] = 1.0;
    upper[0] = 0.0;
    rhs[0] = 0.0;
    // ghost point w_{n} = w_{n-2} − 2 dt j w_{n-1}
    lower[n - 1] = 2.0 / h2;
    diag[n - 1] = -2.0 / h2 - fj * fj - 2.0 * dt * fj / h2;
    lower[0] = 0.0;
    thomas(&lower, &diag, &upper, &rhs)
}

/// Δw = f outside |ζ| = s, with w constant on the circle and mean zero under (s/ρ)⁴.
///
/// Mode-wise second-order differences in t = ln(ρ/s) out to ρ = 10³ s; the mean mode has
/// zero flux at the outer radius, higher modes decay like ρ^{−j} there.
pub fn dirichlet_exterior_solve(grid: &ExteriorGrid, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != grid.nt * grid.n_theta {
        return Err(Error::Domain(format!("forcing has {} samples, grid needs {}", f.len(), grid.nt * grid.n_theta)));
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("forcing must be finite".into()));
    }
    let nt = grid.nt;
    let nth = grid.n_theta;
    let dt = grid.dt();
    let s2 = grid.s * grid.s;
    let rows: Vec<Vec<(f64, f64)>> = (0..nt).map(|k| row_modes(&f[k * nth..(k + 1) * nth])).collect();
    let nmodes = nth / 2 + 1;
    let mut sol_modes = vec![vec![(0.0, 0.0); nmodes]; nt];
    for j in 0..nmodes {
        for part in 0..2 {
            if part == 1 && (j == 0 || 2 * j == nth) {
                continue;
            }
            let g: Vec<f64> = (0..nt)
                .map(|k| {
                    let c = if part == 0 { rows[k][j].0 } else { rows[k][j].1 };
                    s2 * (2.0 * grid.t(k)).exp() * c
                })
                .collect();
            let w = if j == 0 { exterior_mode_solve_neumann(&g, dt) } else { exterior_mode_solve(j, &g, dt) };
            for k in 0..nt {
                if part == 0 {
                    sol_modes[k][j].0 = w[k];
                } else {
                    sol_modes[k][j].1 = w[k];
                }
            }
        }
    }
    let mut out = vec![0.0; nt * nth];
    for k in 0..nt {
        row_synthesis(&sol_modes[k], nth, &mut out[k * nth..(k + 1) * nth]);
    }
    let mean = grid.weighted_mean(&out);
    out.iter_mut().for_each(|x| *x -= mean);
    Ok(out)
}

/// w'' = g with w(0) = 0 and w'(T) = 0.
pub(crate) fn exterior_mode_solve_neumann(g: &[f64], dt: f64) -> Vec<f64> {
    exterior_mode_solve(0, g, dt)
}

/// Log-slopes of |Q₁¹(cos y(v))| and the linear-fit quality of |Q₁⁰(cos y(v))| on |v| ∈ [a, b].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreGrowth {
    pub slope_j1: f64,
    pub slope_j0: f64,
    /// max relative deviation of |Q₁⁰| from its least-squares line in |v|
    pub linear_fit_residual: f64,
}

pub fn legendre_growth(chart: &ConformalChart, a: f64, b: f64, doubled: bool) -> Result<LegendreGrowth> {
    use crate::specfun::legendre_q1;
    let n = 64;
    let scale = if doubled { 0.5 } else { 1.0 };
    let mut xs = Vec::with_capacity(n);
    let mut l1 = Vec::with_capacity(n);
    let mut q0 = Vec::with_capacity(n);
    for k in 0..n {
        let v = a + (b - a) * k as f64 / (n - 1) as f64;
        // the doubled map reads the chart at 2v, i.e. the same curve with half the v-scale
        let t = chart.y_of_v(v / scale).cos();
        xs.push(v);
        l1.push(legendre_q1(1, t)?.abs().ln());
        q0.push(legendre_q1(0, t)?.abs());
    }
    let fit = |ys: &[f64]| -> (f64, f64) {
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    };
    let (slope_j1, _) = fit(&l1);
    let (slope_j0, icpt) = fit(&q0);
    let linear_fit_residual = xs
        .iter()
        .zip(&q0)
        .map(|(x, y)| ((slope_j0 * x + icpt) - y).abs() / y.abs().max(1e-300))
        .fold(0.0, f64::max);
    Ok(LegendreGrowth { slope_j1, slope_j0, linear_fit_residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_spectrum_is_squares() {
        let sys = reduced_spectrum(0.0, 6, Parity::Even).unwrap();
        for i in 0..=6 {
            assert!((sys.eigenvalue(i).unwrap() - (i * i) as f64).abs() < 1e-10);
        }
        let odd = reduced_spectrum(0.0, 4, Parity::Odd).unwrap();
        assert_eq!(odd.first_index, 1);
        assert!((odd.eigenvalue(3).unwrap() - 9.0).abs() < 1e-10);
    }

    #[test]
    fn too_many_modes_rejected() {
        assert!(reduced_spectrum(0.1, 33, Parity::Even).is_err());
    }

    #[test]
    fn thomas_matches_dense() {
        let lower = [0.0, 1.0, 2.0];
        let diag = [4.0, 5.0, 6.0];
        let upper = [1.0, 1.0, 0.0];
        let x = thomas(&lower, &diag, &upper, &[1.0, 2.0, 3.0]);
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 5.0 * x[1] + x[2] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[1] + 6.0 * x[2] - 3.0).abs() < 1e-14);
    }
}
