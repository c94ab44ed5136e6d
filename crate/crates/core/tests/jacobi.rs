mod common;

use std::f64::consts::PI;

use common::{lame_kernel_jet, quad};
use kmrglue::coords::build_chart;
use kmrglue::harmonic::Parity;
use kmrglue::jacobi::*;
use kmrglue::specfun::legendre_ode_residual;
use kmrglue::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn sech(s: f64) -> f64 {
    1.0 / s.cosh()
}

#[test]
fn catenoid_kernel_is_exact() {
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let s = -5.0 + 10.0 * k as f64 / 199.0;
        let th = 0.37 * k as f64;
        let dil = Jet2 { value: s.tanh(), d_aa: -2.0 * s.tanh() * sech(s).powi(2), d_bb: 0.0 };
        let tr = Jet2 {
            value: th.cos() * sech(s),
            d_aa: th.cos() * (sech(s) - 2.0 * sech(s).powi(3)),
            d_bb: -th.cos() * sech(s),
        };
        worst = worst.max(catenoid_jacobi(s, dil).abs()).max(catenoid_jacobi(s, tr).abs());
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn catenoid_on_constant() {
    for &s in &[0.0_f64, 0.5, 2.0] {
        let r = catenoid_jacobi(s, Jet2 { value: 1.0, d_aa: 0.0, d_bb: 0.0 });
        assert!((r - 2.0 * sech(s).powi(4)).abs() < 1e-15);
    }
}

#[test]
fn catenoid_grid_converges_on_kernel() {
    let resid = |n: usize| {
        let dt = 4.0 / n as f64;
        let g = GridField::from_fn(-2.0, dt, n + 1, 2 * n, 2.0 * PI, |s, th| s.tanh() + th.cos() * sech(s));
        catenoid_jacobi_grid(&g).values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    };
    let (r1, r2) = (resid(40), resid(80));
    assert!(r2 < r1 && r1 / r2 > 3.0, "{r1} {r2}");
}

#[test]
fn plane_jacobi_examples() {
    let x = [0.3, -0.2];
    let h = 1e-3;
    assert_eq!(plane_jacobi(|_| 1.0, x, h), 0.0);
    let log = plane_jacobi(|p| (p[0] * p[0] + p[1] * p[1]).sqrt().ln(), x, h);
    assert!(log.abs() < 1e-8, "{log}");
    let r2 = 0.3_f64 * 0.3 + 0.2 * 0.2;
    let quad_r = plane_jacobi(|p| p[0] * p[0] + p[1] * p[1], x, h);
    assert!((quad_r - 4.0 * r2 * r2).abs() < 1e-9);
}

/// sup over |v| ≤ vmax of |𝓛 f| / sup |f| for f = Q₁ʲ(cos y(v)) cos(ju).
fn lame_kernel_residual(sigma: f64, j: u32, vmax: f64) -> f64 {
    let chart = build_chart(sigma).unwrap();
    let (mut worst, mut scale) = (0.0_f64, 0.0_f64);
    for k in 0..=120 {
        let v = -vmax + 2.0 * vmax * k as f64 / 120.0;
        for q in 0..8 {
            let u = 0.4 * q as f64;
            let jet = lame_kernel_jet(&chart, j, u, v);
            worst = worst.max(lame_apply(&chart, u, v, jet).abs());
            scale = scale.max(jet.value.abs());
        }
    }
    worst / scale
}

#[test]
fn lame_legendre_kernels_converge_like_sigma_squared() {
    // the kernel is exact only in the σ → 0 limit; the defect is O(σ² e^{2|v|})
    for j in [2u32, 3] {
        let r: Vec<f64> = [1e-4, 1e-5, 1e-6].iter().map(|&s| lame_kernel_residual(s, j, 6.0)).collect();
        assert!((r[0] / r[1] / 100.0 - 1.0).abs() < 0.05, "j={j}: {r:?}");
        assert!((r[1] / r[2] / 100.0 - 1.0).abs() < 0.05, "j={j}: {r:?}");
        assert!(r[1] < 1e-4);
        assert!(lame_kernel_residual(1e-3, j, 3.0) < 2e-3, "j={j}");
    }
}

#[test]
fn lame_of_zero_and_separated_fields() {
    let chart = build_chart(0.3).unwrap();
    assert_eq!(lame_apply(&chart, 0.2, 0.1, Jet2::default()), 0.0);
    let sys = reduced_spectrum(0.3, 4, Parity::Even).unwrap();
    let lam0 = sys.eigenvalue(0).unwrap();
    // f = e_0(u) g(v) with g = cosh v: residual is e_0 (g'' + Q g − λ_0 g)
    for &(u, v) in &[(0.1, 0.2), (1.3, -0.7), (2.0, 1.5)] {
        let [e, _, e2] = sys.eval_with_derivs(0, u);
        let g = (v as f64).cosh();
        let jet = Jet2 { value: e * g, d_aa: e2 * g, d_bb: e * g };
        let y = chart.y_of_v(v);
        let q = 2.0 * 0.3_f64.cos().powi(2) * y.sin().powi(2);
        let expect = e * (g + q * g - lam0 * g);
        assert!((lame_apply(&chart, u, v, jet) - expect).abs() < 1e-8);
    }
}

#[test]
fn legendre_ode_holds() {
    for j in [0u32, 1, 2, 3] {
        for k in 1..40 {
            let t = -0.975 + 0.05 * k as f64;
            let r = legendre_ode_residual(j, t).unwrap();
            assert!(r.abs() < 1e-8, "j={j} t={t}: {r}");
        }
    }
}

#[test]
fn flat_spectrum() {
    let sys = reduced_spectrum(0.0, 8, Parity::Even).unwrap();
    for i in 0..=8 {
        assert!((sys.eigenvalue(i).unwrap() - (i * i) as f64).abs() < 1e-10);
        assert!(sys.distance_to_flat(i, 64) < 1e-10);
    }
}

#[test]
fn closed_form_low_eigenvalues() {
    for &sigma in &[0.05_f64, 0.3, 0.8] {
        let s2 = sigma.sin().powi(2);
        let even = reduced_spectrum(sigma, 4, Parity::Even).unwrap();
        let odd = reduced_spectrum(sigma, 4, Parity::Odd).unwrap();
        assert!((even.eigenvalue(0).unwrap() + s2).abs() < 1e-10);
        assert!((even.eigenvalue(1).unwrap() - (1.0 - 2.0 * s2)).abs() < 1e-10);
        assert!((odd.eigenvalue(1).unwrap() - (1.0 - s2)).abs() < 1e-10);
    }
}

#[test]
fn bound_check_rows() {
    let sys = reduced_spectrum(0.3, 8, Parity::Even).unwrap();
    let rows = eigenvalue_bound_check(&sys, 1e-8);
    assert_eq!(rows.len(), 9);
    // the upper side λ ≤ i² always holds; the lower side only for small i
    for r in &rows {
        assert!(r.shift <= 1e-8);
    }
    assert!(rows[..2].iter().all(|r| r.holds));
    assert!(rows[2..].iter().all(|r| !r.holds));
    // against (2πi/U)² the shift stays within the same window
    for r in &rows {
        assert!(r.period_shift <= 1e-8 && r.period_shift >= r.lower - 1e-8, "{r:?}");
    }
}

#[test]
fn eigenvalues_strictly_increase() {
    for parity in [Parity::Even, Parity::Odd] {
        let sys = reduced_spectrum(0.3, 16, parity).unwrap();
        let ev = &sys.eigenvalues;
        assert!(ev.windows(2).all(|w| w[1] > w[0] + 1e-6));
    }
}

/// Periodic second-order finite differences in u over both parities.
fn fd_spectrum(sigma: f64, n: usize) -> Vec<f64> {
    let chart = build_chart(sigma).unwrap();
    let h = chart.u_period / n as f64;
    let s2 = sigma.sin().powi(2);
    let mut a = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let x = chart.x_of_u(k as f64 * h);
        a[(k, k)] = 2.0 / (h * h) - 2.0 * s2 * x.cos().powi(2);
        a[(k, (k + 1) % n)] = -1.0 / (h * h);
        a[(k, (k + n - 1) % n)] = -1.0 / (h * h);
    }
    let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn spectrum_matches_finite_difference_oracle() {
    let sigma = 0.3;
    let even = reduced_spectrum(sigma, 6, Parity::Even).unwrap();
    let odd = reduced_spectrum(sigma, 6, Parity::Odd).unwrap();
    let mut both: Vec<f64> = even.eigenvalues.iter().chain(&odd.eigenvalues).copied().collect();
    both.sort_by(f64::total_cmp);
    let fd = fd_spectrum(sigma, 600);
    for (a, b) in both.iter().take(10).zip(&fd) {
        assert!((a - b).abs() < 2e-3 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

/// Rayleigh quotient ∫(e′² − P e²) du / ∫ e² du by quadrature in x.
fn rayleigh(sys: &SpectralSystem, i: usize) -> f64 {
    let chart = build_chart(sys.sigma).unwrap();
    let s2 = sys.sigma.sin().powi(2);
    // du = dx / l(x)
    let num = quad(
        |x| {
            let u = chart.u_of_x(x);
            let [e, e1, _] = sys.eval_with_derivs(i, u);
            (e1 * e1 - 2.0 * s2 * x.cos().powi(2) * e * e) / chart.dx_du(x)
        },
        0.0,
        2.0 * PI,
        1e-12,
    );
    let den = quad(
        |x| {
            let e = sys.eval(i, chart.u_of_x(x));
            e * e / chart.dx_du(x)
        },
        0.0,
        2.0 * PI,
        1e-12,
    );
    assert!((den - 1.0).abs() < 1e-8, "normalization {den}");
    num / den
}

#[test]
fn eigenpairs_satisfy_rayleigh_quotient() {
    let sys = reduced_spectrum(0.3, 5, Parity::Even).unwrap();
    for i in 0..=5 {
        let r = rayleigh(&sys, i);
        assert!((r - sys.eigenvalue(i).unwrap()).abs() < 1e-8, "i={i}: {r}");
    }
}

#[test]
fn eigenvalues_nonincreasing_in_sigma() {
    let spectra: Vec<SpectralSystem> =
        [0.1, 0.2, 0.3].iter().map(|&s| reduced_spectrum(s, 8, Parity::Even).unwrap()).collect();
    for i in 0..=8 {
        let l: Vec<f64> = spectra.iter().map(|s| s.eigenvalue(i).unwrap()).collect();
        assert!(l[0] >= l[1] && l[1] >= l[2], "i={i}: {l:?}");
    }
}

#[test]
fn eigenfunctions_are_near_flat_at_rate_sin_squared() {
    for i in 1..=4 {
        let c: Vec<f64> = [0.05_f64, 0.1, 0.2]
            .iter()
            .map(|&s| reduced_spectrum(s, 6, Parity::Even).unwrap().distance_to_flat(i, 256) / s.sin().powi(2))
            .collect();
        let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), x| (a.min(*x), b.max(*x)));
        assert!(hi / lo < 1.5, "i={i}: {c:?}");
    }
}

#[test]
fn eigenfunction_sign_and_normalization() {
    let sys = reduced_spectrum(0.2, 4, Parity::Even).unwrap();
    for i in 0..=4 {
        assert!(sys.eval(i, 0.0) > 0.0);
    }
    let odd = reduced_spectrum(0.2, 4, Parity::Odd).unwrap();
    for i in 1..=4 {
        assert!(odd.eval_with_derivs(i, 0.0)[1] > 0.0);
    }
}

#[test]
fn spectrum_input_errors() {
    assert!(matches!(reduced_spectrum(0.1, 33, Parity::Even), Err(Error::Domain(_))));
    assert!(reduced_spectrum(PI / 2.0, 4, Parity::Even).is_err());
    assert!(reduced_spectrum(-0.1, 4, Parity::Even).is_err());
}

#[test]
fn spectrum_csv_layout() {
    let sys = reduced_spectrum(0.0, 2, Parity::Even).unwrap();
    let csv = spectrum_csv(&sys);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "i,lambda,lambda_minus_i_sq");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("2,"));
}

#[test]
fn right_inverse_of_zero() {
    let sys = reduced_spectrum(0.3, 8, Parity::Even).unwrap();
    let sol = right_inverse_halfcylinder(&sys, 1.0, |_, _| 0.0, -1.5).unwrap();
    assert!(sol.modes.iter().flatten().all(|w| *w == 0.0));
}

/// Fourth-order residual of one mode computed here from the chart.
fn mode_residual_oracle(sol: &HalfCylinderSolution, i: usize, sigma: f64) -> f64 {
    let chart = build_chart(sigma).unwrap();
    let w = &sol.modes[i];
    let f = &sol.forcing[i];
    let lam = sol.system.eigenvalue(i).unwrap();
    let h2 = sol.dv * sol.dv;
    let mut worst: f64 = 0.0;
    for k in 2..w.len() - 2 {
        let d2 = (-w[k + 2] + 16.0 * w[k + 1] - 30.0 * w[k] + 16.0 * w[k - 1] - w[k - 2]) / (12.0 * h2);
        let y = chart.y_of_v(sol.node(k));
        let q = 2.0 * sigma.cos().powi(2) * y.sin().powi(2);
        worst = worst.max((d2 + (q - lam) * w[k] - f[k]).abs());
    }
    worst
}

#[test]
fn right_inverse_single_high_mode() {
    let (sigma, v0, mu) = (0.3, 1.0, -1.5_f64);
    let sys = reduced_spectrum(sigma, 8, Parity::Even).unwrap();
    let sol = right_inverse_modal(&sys, v0, |i, _, v| if i == 5 { (mu * v).exp() } else { 0.0 }, mu).unwrap();
    let scale = (mu * v0).exp();
    assert!(mode_residual_oracle(&sol, 5, sigma) < 1e-8 * scale.max(1.0));
    assert_eq!(sol.modes[5][0], 0.0);
    for (m, w) in sol.modes.iter().enumerate() {
        if m != 5 {
            assert!(w.iter().all(|x| *x == 0.0));
        }
    }
    let chart = build_chart(sigma).unwrap();
    assert!(sol.mode_residual(&chart, 5) < 1e-8);
}

#[test]
fn right_inverse_low_modes_and_projection() {
    let (sigma, v0, mu) = (0.3, 0.5, -1.5_f64);
    let sys = reduced_spectrum(sigma, 6, Parity::Even).unwrap();
    let f = |u: f64, v: f64| (mu * v).exp() * (sys.eval(0, u) + 0.5 * sys.eval(1, u));
    let sol = right_inverse_halfcylinder(&sys, v0, f, mu).unwrap();
    for i in [0usize, 1] {
        assert!(mode_residual_oracle(&sol, i, sigma) < 1e-7, "mode {i}");
    }
    // trace at v₀ lives in span{e_0, e_1}
    let trace_high: f64 = sol.modes[2..].iter().map(|w| w[0].abs()).sum();
    assert!(trace_high < 1e-12);
    assert!(sol.modes[0][0].abs() + sol.modes[1][0].abs() > 0.0);
    let ratio = sol.weighted_norm(mu) / sol.forcing_weighted_norm(mu);
    assert!(ratio.is_finite());
}

#[test]
fn right_inverse_input_errors() {
    let sys = reduced_spectrum(0.3, 4, Parity::Even).unwrap();
    let zero = |_: f64, _: f64| 0.0;
    assert!(matches!(right_inverse_halfcylinder(&sys, 0.0, zero, -0.5), Err(Error::Weight(_))));
    assert!(matches!(right_inverse_halfcylinder(&sys, 0.0, zero, -2.5), Err(Error::Weight(_))));
    let growing = |_: usize, _: usize, v: f64| (0.2 * v).exp();
    assert!(matches!(right_inverse_modal(&sys, 0.0, growing, -1.5), Err(Error::Weight(_))));
    let odd = reduced_spectrum(0.3, 4, Parity::Odd).unwrap();
    assert!(matches!(right_inverse_halfcylinder(&odd, 0.0, zero, -1.5), Err(Error::Parity(_))));
    let flat = reduced_spectrum(0.0, 4, Parity::Even).unwrap();
    assert!(matches!(right_inverse_halfcylinder(&flat, 0.0, zero, -1.5), Err(Error::Domain(_))));
}

#[test]
fn injectivity_bounded_away_from_zero() {
    let sigma = 0.2;
    let sys = reduced_spectrum(sigma, 8, Parity::Even).unwrap();
    let chart = build_chart(sigma).unwrap();
    for width in [2.0, 4.0, 8.0] {
        let sv = injectivity_singular_value(&sys, &chart, 1.0, 1.0 + width, 200);
        assert!(sv > 1.0, "width {width}: {sv}");
    }
}

#[test]
fn exterior_solve_of_zero() {
    let grid = ExteriorGrid::new(0.1, 64, 16).unwrap();
    let w = dirichlet_exterior_solve(&grid, &vec![0.0; 64 * 16]).unwrap();
    assert!(w.iter().all(|x| *x == 0.0));
    assert!(dirichlet_exterior_solve(&grid, &[0.0; 3]).is_err());
}

#[test]
fn exterior_solve_radial_oracle() {
    let s = 0.1;
    let grid = ExteriorGrid::new(s, 801, 16).unwrap();
    let bump = |rho: f64| {
        let t = (rho / s).ln();
        if t > 0.5 && t < 2.0 { ((t - 0.5) * (2.0 - t)).powi(2) } else { 0.0 }
    };
    let f = grid.sample(|rho, _| bump(rho));
    let w = dirichlet_exterior_solve(&grid, &f).unwrap();
    // radial oracle: w'' = s² e^{2t} f in t, w(0) = 0, w'(T) = 0, then mean removed
    let tmax = grid.t_max;
    let g = |t: f64| s * s * (2.0 * t).exp() * bump(s * t.exp());
    let flux = |t: f64| quad(g, t.max(0.5), 2.0, 1e-13);
    let oracle = |t: f64| -quad(|tau| if tau < 2.0 { flux(tau) } else { 0.0 }, 0.0, t.min(2.0), 1e-12);
    let raw: Vec<f64> = (0..grid.nt).map(|k| oracle(grid.t(k))).collect();
    let mut full = vec![0.0; grid.nt * grid.n_theta];
    for k in 0..grid.nt {
        for j in 0..grid.n_theta {
            full[grid.index(k, j)] = raw[k];
        }
    }
    let mean = grid.weighted_mean(&full);
    let scale = raw.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    for k in (0..grid.nt).step_by(20) {
        let err = (w[grid.index(k, 3)] - (raw[k] - mean)).abs();
        assert!(err < 1e-3 * scale, "t={}: {err}", grid.t(k));
    }
    let _ = tmax;
}

#[test]
fn exterior_solve_mode_two() {
    let s = 0.05;
    let grid = ExteriorGrid::new(s, 1201, 16).unwrap();
    let f = grid.sample(|rho, th| rho.powi(-4) * (2.0 * th).cos());
    let w = dirichlet_exterior_solve(&grid, &f).unwrap();
    let exact = |rho: f64, th: f64| -0.25 * rho.powi(-2) * (rho / s).ln() * (2.0 * th).cos();
    let scale = 0.25 / (s * s) / std::f64::consts::E / 2.0;
    let mut worst: f64 = 0.0;
    for k in 0..grid.nt {
        for j in 0..grid.n_theta {
            worst = worst.max((w[grid.index(k, j)] - exact(grid.rho(k), grid.theta(j))).abs());
        }
    }
    assert!(worst < 1e-3 * scale, "{worst} vs scale {scale}");
}

#[test]
fn exterior_solution_has_weighted_mean_zero() {
    let grid = ExteriorGrid::new(0.2, 200, 16).unwrap();
    let f = grid.sample(|rho, th| (1.0 + th.cos()) / (1.0 + rho * rho).powi(2));
    let w = dirichlet_exterior_solve(&grid, &f).unwrap();
    assert!(grid.weighted_mean(&w).abs() < 1e-12);
    // constant on the inner circle
    let c0 = w[grid.index(0, 0)];
    assert!((0..grid.n_theta).all(|j| (w[grid.index(0, j)] - c0).abs() < 1e-12));
}

#[test]
fn legendre_growth_true_chart() {
    let chart = build_chart(1e-6).unwrap();
    let g = legendre_growth(&chart, 3.0, 8.0, false).unwrap();
    // in the conformal chart |Q₁¹| grows like e^{|v|}
    assert!((g.slope_j1 - 1.0).abs() < 0.05, "{g:?}");
    assert!(g.linear_fit_residual < 0.05, "{g:?}");
}

#[test]
fn legendre_growth_doubled_map() {
    let chart = build_chart(1e-8).unwrap();
    let g = legendre_growth(&chart, 3.0, 8.0, true).unwrap();
    assert!((g.slope_j1 - 2.0).abs() < 0.1, "{g:?}");
}

proptest! {
    #[test]
    fn every_low_pair_respects_upper_bound(sigma in 0.01f64..1.2) {
        let sys = reduced_spectrum(sigma, 6, Parity::Even).unwrap();
        for row in eigenvalue_bound_check(&sys, 1e-8) {
            prop_assert!(row.shift <= 1e-8);
            if row.index <= 1 {
                prop_assert!(row.holds, "{:?}", row);
            }
        }
    }

    #[test]
    fn catenoid_dilation_kernel_everywhere(s in -20.0f64..20.0) {
        let jet = Jet2 { value: s.tanh(), d_aa: -2.0 * s.tanh() * sech(s).powi(2), d_bb: 0.0 };
        prop_assert!(catenoid_jacobi(s, jet).abs() < 1e-12);
    }

    #[test]
    fn exterior_grid_geometry(s in 0.01f64..1.0, k in 0usize..63) {
        let grid = ExteriorGrid::new(s, 64, 8).unwrap();
        prop_assert!((grid.rho(0) - s).abs() < 1e-15);
        prop_assert!((grid.rho(63) / s - EXTERIOR_RADIUS_RATIO).abs() < 1e-9);
        prop_assert!(grid.rho(k + 1) > grid.rho(k));
    }
}
