use std::f64::consts::PI;
use std::sync::OnceLock;

use approx::assert_abs_diff_eq;
use kmrglue::error::Error;
use kmrglue::gluing::*;
use kmrglue::harmonic::{FourierBoundary, Orthogonality, Parity};
use kmrglue::model_graphs::*;
use proptest::prelude::*;

const EPS: f64 = 1e-2;

fn boundary(parity: Parity, coeffs: &[(usize, f64)], trunc: usize) -> FourierBoundary {
    let mut c = vec![0.0; trunc + 1];
    for &(j, a) in coeffs {
        c[j] = a;
    }
    FourierBoundary::new(parity, c, Orthogonality::NONE).unwrap()
}

/// d/dθ on coefficients, the map `invert_dtheta` should undo.
fn apply_dtheta(phi: &FourierBoundary) -> FourierBoundary {
    let (parity, sign) = match phi.parity() {
        Parity::Even => (Parity::Odd, -1.0),
        Parity::Odd => (Parity::Even, 1.0),
    };
    let c = (0..=phi.truncation()).map(|j| sign * j as f64 * phi.coeff(j)).collect();
    FourierBoundary::new(parity, c, Orthogonality::NONE).unwrap()
}

fn gap(value: FourierBoundary, slope: FourierBoundary) -> SeamGap {
    let mean = |b: &FourierBoundary| if b.parity() == Parity::Even { b.coeff(0) } else { 0.0 };
    SeamGap {
        value_mean: mean(&value),
        slope_mean: mean(&slope),
        off_parity: 0.0,
        above_truncation: 0.0,
        c0: value.sup_norm(),
        c1: value.sup_norm().max(slope.sup_norm()),
        value,
        slope,
    }
}

fn flat_middle() -> EndModel {
    let psi = FourierBoundary::zero(Parity::Even, 8, Orthogonality::CONSTANT);
    chm_end_model(ChmEnd::Middle, EPS, &psi, ChmShape::straight()).unwrap()
}

fn th1() -> &'static MatchingState {
    static STATE: OnceLock<MatchingState> = OnceLock::new();
    STATE.get_or_init(|| solve_matching(&GluingConfig::new(Theorem::Th1, EPS)).unwrap())
}

fn th3_k0() -> &'static MatchingState {
    static STATE: OnceLock<MatchingState> = OnceLock::new();
    STATE.get_or_init(|| solve_matching(&GluingConfig::new(Theorem::Th3K0, EPS)).unwrap())
}

#[test]
fn identical_models_have_no_gap() {
    let psi = FourierBoundary::single_mode(Parity::Even, 3, 1e-4, 8);
    let m = chm_end_model(ChmEnd::Top, EPS, &psi, ChmShape::bent(EPS)).unwrap();
    let g = seam_mismatch(&m, &m, 128, 16).unwrap();
    assert_eq!(g.c1, 0.0);
    assert!(g.value.coeffs().iter().chain(g.slope.coeffs()).all(|c| *c == 0.0));
}

#[test]
fn catenoid_seen_from_both_sides_matches() {
    let zero = FourierBoundary::zero(Parity::Even, 8, Orthogonality::CONSTANT);
    let inner = chm_end_model(ChmEnd::Top, EPS, &zero, ChmShape::straight()).unwrap();
    let mut outer = inner.clone();
    outer.side = Side::Outer;
    outer.rule = DressingRule::Exterior;
    let outer = outer.with_frozen_remainder(&FourierBoundary::zero(Parity::Even, 32, Orthogonality::CONSTANT)).unwrap();
    let g = seam_mismatch(&inner, &outer, 128, 16).unwrap();
    assert!(g.c1 < 1e-10, "c1 = {}", g.c1);
}

#[test]
fn offset_difference_is_a_pure_constant() {
    let a = flat_middle();
    let mut b = a.clone();
    b.expansion.offset += 0.3;
    let g = seam_mismatch(&a, &b, 128, 16).unwrap();
    assert_abs_diff_eq!(g.value.coeff(0), -0.3, epsilon = 1e-14);
    assert_abs_diff_eq!(g.value_mean, -0.3, epsilon = 1e-14);
    for j in 1..=16 {
        assert_abs_diff_eq!(g.value.coeff(j), 0.0, epsilon = 1e-14);
    }
    assert!(g.slope.coeffs().iter().all(|c| c.abs() < 1e-14));
    assert!(g.off_parity < 1e-28 && g.above_truncation < 1e-28);
}

#[test]
fn mismatch_rejects_mixed_parity() {
    let odd = FourierBoundary::zero(Parity::Odd, 8, Orthogonality::CONSTANT);
    let shape = ChmShape { level: 0.0, bend: 0.0, axis: TiltAxis::Sin };
    let b = chm_end_model(ChmEnd::Middle, EPS, &odd, shape).unwrap();
    assert!(matches!(seam_mismatch(&flat_middle(), &b, 128, 16), Err(Error::Parity(_))));
    assert!(matches!(seam_mismatch(&flat_middle(), &flat_middle(), 16, 16), Err(Error::Domain(_))));
}

#[test]
fn invert_dtheta_examples() {
    let g = boundary(Parity::Odd, &[(2, -2.0)], 8);
    let phi = invert_dtheta(&g).unwrap();
    assert_eq!(phi.parity(), Parity::Even);
    assert_abs_diff_eq!(phi.coeff(2), 1.0, epsilon = 1e-15);
    for k in 0..20 {
        let t = 0.31 * k as f64;
        assert_abs_diff_eq!(phi.eval_dtheta(t), g.eval(t), epsilon = 1e-14);
    }

    let zero = invert_dtheta(&FourierBoundary::zero(Parity::Even, 8, Orthogonality::NONE)).unwrap();
    assert!(zero.coeffs().iter().all(|c| *c == 0.0));

    let with_mean = boundary(Parity::Even, &[(0, 0.1), (2, 1.0)], 8);
    assert!(matches!(invert_dtheta(&with_mean), Err(Error::Orthogonality(_))));
}

#[test]
fn conjugate_swaps_families() {
    let g = boundary(Parity::Even, &[(3, 0.5)], 6);
    let h = conjugate(&g);
    assert_eq!(h.parity(), Parity::Odd);
    assert_eq!(h.coeff(3), 0.5);
    assert_eq!(conjugate(&h).coeff(3), -0.5);
}

#[test]
fn projection_examples() {
    let t = 8;
    let zero = FourierBoundary::zero(Parity::Even, t, Orthogonality::NONE);
    let constant = gap(boundary(Parity::Even, &[(0, 0.7)], t), zero.clone());
    let first = gap(boundary(Parity::Even, &[(1, 0.4)], t), zero.clone());
    let third = gap(boundary(Parity::Even, &[(3, 1.0)], t), zero.clone());
    let p = project_matching(&[constant, first, third]);

    assert_eq!(p.parameter_equations(), vec![0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.4, 0.0]);
    assert!(p.orthogonal[0].0.coeffs().iter().all(|c| *c == 0.0));
    assert!(p.orthogonal[1].0.coeffs().iter().all(|c| *c == 0.0));
    assert_eq!(p.low[2], [0.0; 4]);
    assert_eq!(p.orthogonal[2].0.coeff(3), 1.0);
}

#[test]
fn odd_projection_uses_the_sine_mode() {
    let t = 8;
    let zero = FourierBoundary::zero(Parity::Odd, t, Orthogonality::NONE);
    let p = project_matching(&[gap(zero.clone(), boundary(Parity::Odd, &[(1, -0.2), (2, 0.5)], t))]);
    assert_eq!(p.low[0], [0.0, 0.0, 0.0, -0.2]);
    assert_eq!(p.orthogonal[0].1.coeff(2), 0.5);
    assert_eq!(p.orthogonal[0].1.coeff(1), 0.0);
}

#[test]
fn self_matching_is_exact() {
    let s = self_test(EPS, 16).unwrap();
    assert!(s.converged);
    assert_eq!(s.parameters, MatchingParameters::default());
    assert!(s.c1_residual() < 1e-12, "residual {}", s.c1_residual());
    for seam in &s.seams {
        assert!(seam.inner_data.coeffs().iter().chain(seam.outer_data.coeffs()).all(|c| c.abs() < 1e-12));
    }
}

#[test]
fn th1_converges_with_small_residual() {
    let s = th1();
    assert!(s.converged);
    assert!(s.iterations() <= 50);
    assert_eq!(s.seams.len(), 3);
    assert!(s.residual_constant() <= 1.0, "C = {}", s.residual_constant());
    // κ stays frozen and the offsets come out opposite
    let p = s.parameters.to_array();
    for i in [0, 1, 4, 5, 6, 7] {
        assert_eq!(p[i], 0.0, "{} moved", PARAMETER_NAMES[i]);
    }
    assert_abs_diff_eq!(s.parameters.eta_t, -s.parameters.eta_b, epsilon = 1e-9);
    assert!(s.parameters.eta_t.abs() < 10.0 * EPS);
    assert!(s.report().contains("residual_constant = "));
}

#[test]
fn th1_trace_decreases_after_the_first_iterate() {
    let t = &th1().trace;
    assert!(t.len() >= 2);
    for w in t[1..].windows(2) {
        assert!(w[1].c1_residual <= w[0].c1_residual * (1.0 + 1e-6) + 1e-14, "{:?}", t);
    }
    let csv = th1().trace_csv();
    assert!(csv.starts_with("iter,param_norm,data_norm,c0_residual,c1_residual\n"));
    assert_eq!(csv.lines().count(), t.len() + 1);
}

#[test]
fn th3_k0_single_seam_system_is_solved() {
    let s = th3_k0();
    assert!(s.converged && s.iterations() <= 50);
    assert_eq!(s.seams.len(), 1);
    assert!(s.seams[0].inner_kind.starts_with("kmr"));
    // η + φ − ψ: the value mean left on the seam
    assert!(s.c0_residual() < 1e-6, "c0 = {}", s.c0_residual());
    assert!(s.residual_constant() <= 1.0);
    let p = s.parameters.to_array();
    assert!(p.iter().enumerate().all(|(i, v)| i == 2 || *v == 0.0));
}

#[test]
fn th3_k0_data_step_contracts_at_rate_eps() {
    let lip = th3_k0().data_lipschitz();
    assert!(lip > 0.0 && lip <= 10.0 * EPS, "Lipschitz {lip}");
}

#[test]
fn odd_configuration_keeps_odd_data() {
    let s = solve_matching(&GluingConfig::new(Theorem::Th2K1, EPS)).unwrap();
    assert!(s.converged);
    for seam in &s.seams {
        assert_eq!(seam.inner_data.parity(), Parity::Odd);
        assert_eq!(seam.outer_data.parity(), Parity::Odd);
    }
}

#[test]
fn even_configurations_keep_even_data() {
    for s in [th1(), th3_k0()] {
        for seam in &s.seams {
            assert_eq!(seam.inner_data.parity(), Parity::Even);
            assert_eq!(seam.outer_data.parity(), Parity::Even);
            assert!(seam.off_parity < 1e-20, "{} off-parity {}", seam.name.name(), seam.off_parity);
        }
    }
}

#[test]
fn iteration_cap_reports_the_trace() {
    let mut cfg = GluingConfig::new(Theorem::Th1, EPS);
    cfg.max_iterations = 1;
    match solve_matching(&cfg) {
        Err(Error::NoConvergence { iterations, detail }) => {
            assert_eq!(iterations, 1);
            assert!(detail.starts_with("iter,"));
        }
        other => panic!("expected NoConvergence, got {other:?}"),
    }
}

#[test]
fn leaving_the_trust_region_is_reported() {
    let mut cfg = GluingConfig::new(Theorem::Th1, EPS);
    cfg.trust_radius = 1e-3;
    assert!(matches!(solve_matching(&cfg), Err(Error::TrustRegion(_))));
}

#[test]
fn config_validation() {
    let mut cfg = GluingConfig::new(Theorem::Th1, 2e-2);
    assert!(matches!(cfg.validate(), Err(Error::Scale(_))));
    cfg.eps = EPS;
    assert!(cfg.validate().is_ok());
    cfg.genus = 0;
    assert!(matches!(cfg.validate(), Err(Error::Domain(_))));

    let mut k0 = GluingConfig::new(Theorem::Th3K0, EPS);
    assert_eq!(k0.genus, 0);
    k0.genus = 2;
    assert!(k0.validate().is_err());

    let mut small = GluingConfig::new(Theorem::Th2K2, EPS);
    small.truncation = 1;
    assert!(small.validate().is_err());
}

#[test]
fn theorem_names_round_trip() {
    for t in Theorem::ALL {
        assert_eq!(t.name().parse::<Theorem>().unwrap(), t);
        assert_eq!(t.to_string(), t.name());
    }
    assert!("th4".parse::<Theorem>().is_err());
    assert_eq!(Theorem::Th2K1.parity(), Parity::Odd);
    assert_eq!(Theorem::Th2K2.parity(), Parity::Even);
}

fn coeffs(max_mode: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, max_mode + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invert_then_differentiate_is_identity(c in coeffs(12), odd in any::<bool>()) {
        let parity = if odd { Parity::Odd } else { Parity::Even };
        let mut c = c;
        c[0] = 0.0;
        let g = FourierBoundary::new(parity, c, Orthogonality::NONE).unwrap();
        let back = apply_dtheta(&invert_dtheta(&g).unwrap());
        prop_assert_eq!(back.parity(), parity);
        for j in 0..=12 {
            prop_assert!((back.coeff(j) - g.coeff(j)).abs() <= 1e-14);
        }
    }

    #[test]
    fn projection_recombines_exactly(v in coeffs(10), s in coeffs(10), odd in any::<bool>()) {
        let parity = if odd { Parity::Odd } else { Parity::Even };
        let mut v = v;
        let mut s = s;
        if odd {
            v[0] = 0.0;
            s[0] = 0.0;
        }
        let value = FourierBoundary::new(parity, v, Orthogonality::NONE).unwrap();
        let slope = FourierBoundary::new(parity, s, Orthogonality::NONE).unwrap();
        let g = gap(value.clone(), slope.clone());
        let back = project_matching(&[g]).recombine();
        for j in 0..=10 {
            prop_assert!((back[0].0.coeff(j) - value.coeff(j)).abs() <= 1e-14);
            prop_assert!((back[0].1.coeff(j) - slope.coeff(j)).abs() <= 1e-14);
        }
        for k in 0..16 {
            let t = 2.0 * PI * k as f64 / 16.0;
            prop_assert!((back[0].0.eval(t) - value.eval(t)).abs() <= 1e-14 * 16.0);
        }
    }
}
