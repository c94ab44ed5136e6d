mod common;

use std::f64::consts::PI;

use common::fd8;
use kmrglue::harmonic::*;
use kmrglue::jacobi::reduced_spectrum;
use kmrglue::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn even(coeffs: Vec<f64>, flags: Orthogonality) -> FourierBoundary {
    FourierBoundary::new(Parity::Even, coeffs, flags).unwrap()
}

fn random_data(rng: &mut ChaCha8Rng, parity: Parity, first: usize, n: usize) -> FourierBoundary {
    let coeffs: Vec<f64> = (0..=n).map(|i| if i < first { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
    let flags = match first {
        0 => Orthogonality::NONE,
        1 => Orthogonality::CONSTANT,
        _ => Orthogonality::CONSTANT_AND_FIRST,
    };
    FourierBoundary::new(parity, coeffs, flags).unwrap()
}

/// Polar Laplacian by finite differences.
fn polar_laplacian_fd(ext: &HarmonicExtension, r: f64, th: f64) -> f64 {
    let h = 1e-2 * r;
    let urr = fd8(|x| ext.eval(x, th), r, h, 2);
    let ur = fd8(|x| ext.eval(x, th), r, h, 1);
    let utt = fd8(|t| ext.eval(r, t), th, 1e-2, 2);
    urr + ur / r + utt / (r * r)
}

fn flat_laplacian_fd(ext: &HarmonicExtension, s: f64, th: f64) -> f64 {
    fd8(|x| ext.eval(x, th), s, 1e-2, 2) + fd8(|t| ext.eval(s, t), th, 1e-2, 2)
}

#[test]
fn exterior_single_modes() {
    let cos1 = FourierBoundary::single_mode(Parity::Even, 1, 1.0, 4);
    let w = extend_exterior(1.0, &cos1).unwrap();
    let cos2 = FourierBoundary::single_mode(Parity::Even, 2, 1.0, 4);
    let w2 = extend_exterior(2.0, &cos2).unwrap();
    for &(r, th) in &[(1.0, 0.3), (2.5, 1.7), (10.0, -2.0)] {
        assert!((w.eval(r, th) - th.cos() / r).abs() < 1e-15);
        let r2 = 2.0 * r;
        assert!((w2.eval(r2, th) - (2.0 / r2).powi(2) * (2.0 * th).cos()).abs() < 1e-15);
    }
}

#[test]
fn exterior_rejects_constant() {
    let phi = even(vec![1.0, 0.5], Orthogonality::NONE);
    assert!(matches!(extend_exterior(1.0, &phi), Err(Error::Orthogonality(_))));
    assert!(extend_exterior(0.0, &FourierBoundary::single_mode(Parity::Even, 1, 1.0, 2)).is_err());
}

#[test]
fn exterior_is_harmonic_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let phi = random_data(&mut rng, Parity::Even, 1, 6);
    let ext = extend_exterior(1.5, &phi).unwrap();
    let mut worst: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    for _ in 0..100 {
        let r = rng.gen_range(1.5..6.0);
        let th = rng.gen_range(0.0..2.0 * PI);
        worst = worst.max(ext.laplacian(r, th).abs());
        worst_fd = worst_fd.max(polar_laplacian_fd(&ext, r, th).abs());
    }
    assert!(worst < 1e-10, "mode-wise laplacian {worst}");
    assert!(worst_fd < 1e-8, "finite-difference laplacian {worst_fd}");
}

#[test]
fn exterior_decay_constant() {
    // ρ|w| ≤ ρ̄ Σ|c_i| for data orthogonal to constants
    let phi = even(vec![0.0, 1.0, 0.3, -0.2], Orthogonality::CONSTANT);
    let ext = extend_exterior(1.0, &phi).unwrap();
    let sup: f64 = phi.coeffs().iter().map(|c| c.abs()).sum();
    let mut c: f64 = 0.0;
    for k in 0..200 {
        let r = 1.0 + 0.05 * k as f64;
        for j in 0..64 {
            let th = 2.0 * PI * j as f64 / 64.0;
            c = c.max(r * ext.eval(r, th).abs() / sup);
        }
    }
    assert!(c <= 1.0 + 1e-12, "decay constant {c}");
}

#[test]
fn halfcylinder_single_mode_sup_is_one() {
    let phi = FourierBoundary::single_mode(Parity::Even, 2, 1.0, 8);
    let ext = extend_halfcylinder(&phi).unwrap();
    let mut sup: f64 = 0.0;
    for k in 0..100 {
        let s = 0.1 * k as f64;
        for j in 0..64 {
            let th = 2.0 * PI * j as f64 / 64.0;
            assert!((ext.eval(s, th) - (-2.0 * s).exp() * (2.0 * th).cos()).abs() < 1e-15);
            sup = sup.max((2.0 * s).exp() * ext.eval(s, th).abs());
        }
    }
    assert!((sup - 1.0).abs() < 1e-14);
}

#[test]
fn halfcylinder_two_modes_decay_set_by_lowest() {
    let phi = even(vec![0.0, 0.0, 1.0, 1.0], Orthogonality::CONSTANT_AND_FIRST);
    let ext = extend_halfcylinder(&phi).unwrap();
    // e^{2s}|w(s,0)| = 1 + e^{−s} → 1
    for &s in &[5.0_f64, 10.0, 20.0] {
        let scaled = (2.0 * s).exp() * ext.eval(s, 0.0);
        assert!((scaled - 1.0 - (-s).exp()).abs() < 1e-12);
    }
}

#[test]
fn halfcylinder_is_harmonic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phi = random_data(&mut rng, Parity::Even, 2, 6);
    let ext = extend_halfcylinder(&phi).unwrap();
    for _ in 0..50 {
        let s = rng.gen_range(0.0..4.0);
        let th = rng.gen_range(0.0..2.0 * PI);
        assert!(ext.laplacian(s, th).abs() < 1e-10);
        assert!(flat_laplacian_fd(&ext, s, th).abs() < 1e-8);
    }
}

#[test]
fn halfcylinder_rejects_low_modes() {
    let cos1 = FourierBoundary::single_mode(Parity::Even, 1, 1.0, 4);
    assert!(matches!(extend_halfcylinder(&cos1), Err(Error::Orthogonality(_))));
}

#[test]
fn shifted_flat_basis() {
    let phi = FourierBoundary::single_mode(Parity::Even, 2, 1.0, 6);
    let v0 = 3.0;
    let ext = extend_shifted(v0, &phi, ShiftedBasis::Flat).unwrap();
    for &(v, u) in &[(3.0, 0.2), (4.5, 1.0), (7.0, 2.5)] {
        assert!((ext.eval(v, u) - (-2.0 * (v - v0)).exp() * (2.0 * u).cos()).abs() < 1e-15);
    }
    let zero = FourierBoundary::zero(Parity::Even, 8, Orthogonality::LOW_EIGEN);
    let ez = extend_shifted(v0, &zero, ShiftedBasis::Flat).unwrap();
    assert_eq!(ez.eval(5.0, 1.0), 0.0);
}

#[test]
fn shifted_weighted_norm() {
    // sup_v≥v₀ e^{−μv}|w| ≤ c e^{−μv₀} sup|φ|, μ = −1.5, v₀ = 3
    let (mu, v0) = (-1.5_f64, 3.0_f64);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi = random_data(&mut rng, Parity::Even, 2, 8);
    let ext = extend_shifted(v0, &phi, ShiftedBasis::Flat).unwrap();
    let l1: f64 = phi.coeffs().iter().map(|c| c.abs()).sum();
    let mut worst: f64 = 0.0;
    for k in 0..400 {
        let v = v0 + 0.025 * k as f64;
        for j in 0..64 {
            let u = 2.0 * PI * j as f64 / 64.0;
            worst = worst.max((-mu * v).exp() * ext.eval(v, u).abs());
        }
    }
    let c = worst / ((-mu * v0).exp() * l1);
    assert!(c <= 1.0 + 1e-12, "weighted constant {c}");
}

#[test]
fn shifted_lame_basis_parity_and_size() {
    let sys = reduced_spectrum(0.2, 8, Parity::Even).unwrap();
    let odd = FourierBoundary::single_mode(Parity::Odd, 2, 1.0, 4);
    assert!(matches!(
        extend_shifted(0.0, &odd, ShiftedBasis::Lame(Box::new(sys.clone()))),
        Err(Error::Parity(_))
    ));
    let long = FourierBoundary::single_mode(Parity::Even, 2, 1.0, 20);
    assert!(extend_shifted(0.0, &long, ShiftedBasis::Lame(Box::new(sys.clone()))).is_err());
    let phi = FourierBoundary::single_mode(Parity::Even, 3, 1.0, 6);
    let ext = extend_shifted(1.0, &phi, ShiftedBasis::Lame(Box::new(sys.clone()))).unwrap();
    let u = 0.4;
    assert!((ext.eval(1.0, u) - sys.eval(3, u)).abs() < 1e-14);
}

#[test]
fn shifted_lame_basis_trace_positive() {
    let sys = reduced_spectrum(0.1, 6, Parity::Even).unwrap();
    assert!(sys.eval(2, 0.0) > 0.0);
}

#[test]
fn literal_identity_single_cos_mode() {
    let cos1 = FourierBoundary::single_mode(Parity::Even, 1, 1.0, 4);
    let rep = derivative_identity_exterior(&cos1, 1.0).unwrap();
    assert!(rep.max_violation < 1e-14);
    let rep = derivative_identity_interior(&cos1, 1.0).unwrap();
    // interior: left side is cos θ, right side is +cos θ
    assert!(rep.max_violation < 1e-14);
}

#[test]
fn identities_vanish_on_constants() {
    let one = even(vec![2.0], Orthogonality::NONE);
    let rep = derivative_identity_interior(&one, 1.3).unwrap();
    assert_eq!(rep.max_violation, 0.0);
    let rep = dirichlet_to_neumann_interior(&one, 1.3).unwrap();
    assert_eq!(rep.max_violation, 0.0);
}

#[test]
fn literal_identity_fails_off_the_first_mode() {
    // the rotation by π/2 only intertwines ∂_θ and r∂_r on modes i ≡ 1 (mod 4)
    for i in [1usize, 5, 9] {
        let phi = FourierBoundary::single_mode(Parity::Even, i, 1.0, 10);
        assert!(derivative_identity_exterior(&phi, 1.0).unwrap().max_violation < 1e-12);
    }
    for i in [2usize, 3, 4] {
        let phi = FourierBoundary::single_mode(Parity::Even, i, 1.0, 10);
        let rep = derivative_identity_exterior(&phi, 1.0).unwrap();
        assert!(rep.max_violation > 0.5, "mode {i}: {}", rep.max_violation);
    }
}

#[test]
fn dirichlet_to_neumann_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for parity in [Parity::Even, Parity::Odd] {
        let phi = random_data(&mut rng, parity, 1, 8);
        let r0 = rng.gen_range(0.5..3.0);
        assert!(dirichlet_to_neumann_exterior(&phi, r0).unwrap().max_violation < 1e-10);
        assert!(dirichlet_to_neumann_interior(&phi, r0).unwrap().max_violation < 1e-10);
    }
}

#[test]
fn odd_data_uses_sine_modes() {
    let phi = FourierBoundary::single_mode(Parity::Odd, 3, 1.0, 4);
    let ext = extend_halfcylinder(&phi).unwrap();
    assert!((ext.eval(0.5, 0.7) - (-1.5_f64).exp() * (2.1_f64).sin()).abs() < 1e-15);
    assert_eq!(ext.eval(0.5, 0.0), 0.0);
}

proptest! {
    #[test]
    fn boundary_trace_reproduces_data(cs in prop::collection::vec(-1.0f64..1.0, 3..10), th in 0.0f64..6.3, r in 0.2f64..5.0) {
        let mut coeffs = cs.clone();
        coeffs[0] = 0.0;
        coeffs[1] = 0.0;
        let phi = even(coeffs, Orthogonality::CONSTANT_AND_FIRST);
        let scale = 1.0 + phi.sup_norm();
        prop_assert!((extend_exterior(r, &phi).unwrap().eval(r, th) - phi.eval(th)).abs() < 1e-13 * scale);
        prop_assert!((extend_interior(r, &phi).unwrap().eval(r, th) - phi.eval(th)).abs() < 1e-13 * scale);
        prop_assert!((extend_halfcylinder(&phi).unwrap().eval(0.0, th) - phi.eval(th)).abs() < 1e-13 * scale);
        prop_assert!((extend_shifted(r, &phi, ShiftedBasis::Flat).unwrap().eval(r, th) - phi.eval(th)).abs() < 1e-13 * scale);
    }

    #[test]
    fn decay_rate_equals_mode_index(i in 1usize..10, r in 1.0f64..4.0) {
        let phi = FourierBoundary::single_mode(Parity::Even, i, 1.0, 10);
        let ext = extend_exterior(1.0, &phi).unwrap();
        let slope = (ext.eval(2.0 * r, 0.0).ln() - ext.eval(r, 0.0).ln()) / 2f64.ln();
        prop_assert!((slope + i as f64).abs() < 1e-10);
        if i >= 2 {
            let cyl = extend_halfcylinder(&phi).unwrap();
            let s_slope = cyl.eval(r + 1.0, 0.0).ln() - cyl.eval(r, 0.0).ln();
            prop_assert!((s_slope + i as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn declared_flags_force_zero_coefficients(c0 in -1.0f64..1.0, c1 in -1.0f64..1.0) {
        prop_assume!(c0 != 0.0 && c1 != 0.0);
        prop_assert!(FourierBoundary::new(Parity::Even, vec![c0, 0.0, 1.0], Orthogonality::CONSTANT).is_err());
        prop_assert!(FourierBoundary::new(Parity::Even, vec![0.0, c1, 1.0], Orthogonality::CONSTANT_AND_FIRST).is_err());
        prop_assert!(FourierBoundary::new(Parity::Even, vec![0.0, c1, 1.0], Orthogonality::CONSTANT).is_ok());
    }
}
