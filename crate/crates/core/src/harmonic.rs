//! Boundary data on the circle and its harmonic extensions.
//!
//! Three extensions are provided: outside a disk (ρ̄/ρ)^i, along a half cylinder
//! e^{−is}, and along a shifted half cylinder e^{−i(v−v₀)} in a chosen u-basis.
//! Odd data (sin modes) is handled by the same formulas.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::jacobi::SpectralSystem;

/// Default mode truncation for boundary data.
pub const DEFAULT_TRUNCATION: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    /// cos(iθ) modes.
    Even,
    /// sin(iθ) modes.
    Odd,
}

/// Declared orthogonality of boundary data.
///
/// `first_mode` refers to cos θ for even data and sin θ for odd data.
/// `low_eigen` is orthogonality to e_{σ,0}, e_{σ,1}; in the flat basis it
/// coincides with `constant` plus `first_mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Orthogonality {
    pub constant: bool,
    pub first_mode: bool,
    pub low_eigen: bool,
}

impl Orthogonality {
    pub const NONE: Self = Self { constant: false, first_mode: false, low_eigen: false };
    pub const CONSTANT: Self = Self { constant: true, first_mode: false, low_eigen: false };
    pub const CONSTANT_AND_FIRST: Self = Self { constant: true, first_mode: true, low_eigen: false };
    pub const LOW_EIGEN: Self = Self { constant: true, first_mode: true, low_eigen: true };

    /// Lowest mode index allowed to be nonzero.
    pub fn first_free_mode(&self) -> usize {
        if self.first_mode || self.low_eigen {
            2
        } else if self.constant {
            1
        } else {
            0
        }
    }
}

/// Trigonometric data φ(θ) = Σ c_i cos(iθ) (even) or Σ c_i sin(iθ) (odd).
#[derive(Debug, Clone, PartialEq)]
pub struct FourierBoundary {
    parity: Parity,
    coeffs: Vec<f64>,
    flags: Orthogonality,
}

impl FourierBoundary {
    /// Builds data after checking that declared orthogonality really holds.
    pub fn new(parity: Parity, coeffs: Vec<f64>, flags: Orthogonality) -> Result<Self> {
        let b = Self { parity, coeffs, flags };
        b.check()?;
        Ok(b)
    }

    pub fn zero(parity: Parity, truncation: usize, flags: Orthogonality) -> Self {
        Self { parity, coeffs: vec![0.0; truncation + 1], flags }
    }

    /// A single mode cos(jθ) or sin(jθ) with amplitude `amp`, flags set to the strongest ones it satisfies.
    pub fn single_mode(parity: Parity, j: usize, amp: f64, truncation: usize) -> Self {
        let mut coeffs = vec![0.0; truncation.max(j) + 1];
        coeffs[j] = amp;
        let flags = match j {
            0 => Orthogonality::NONE,
            1 => Orthogonality::CONSTANT,
            _ => Orthogonality::LOW_EIGEN,
        };
        Self { parity, coeffs, flags }
    }

    fn check(&self) -> Result<()> {
        if self.parity == Parity::Odd && self.coeffs.first().is_some_and(|c| *c != 0.0) {
            return Err(Error::Parity("odd data cannot carry a constant mode".into()));
        }
        let first = self.flags.first_free_mode();
        for (i, c) in self.coeffs.iter().enumerate().take(first) {
            if *c != 0.0 {
                return Err(Error::Orthogonality(format!(
                    "mode {i} has coefficient {c} but data is declared orthogonal to it"
                )));
            }
        }
        Ok(())
    }

    /// Fails unless the data is orthogonal to every mode below `first`.
    pub fn require_from_mode(&self, first: usize) -> Result<()> {
        for (i, c) in self.coeffs.iter().enumerate().take(first) {
            if *c != 0.0 {
                return Err(Error::Orthogonality(format!("mode {i} must vanish, found {c}")));
            }
        }
        Ok(())
    }

    pub fn require_parity(&self, parity: Parity) -> Result<()> {
        if self.parity != parity {
            return Err(Error::Parity(format!("expected {parity:?} data, got {:?}", self.parity)));
        }
        Ok(())
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn flags(&self) -> Orthogonality {
        self.flags
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    /// Sets one coefficient; fails if the flags forbid that mode.
    pub fn set_coeff(&mut self, i: usize, c: f64) -> Result<()> {
        if i < self.flags.first_free_mode() && c != 0.0 {
            return Err(Error::Orthogonality(format!("mode {i} is fixed to zero")));
        }
        if i == 0 && self.parity == Parity::Odd && c != 0.0 {
            return Err(Error::Parity("odd data cannot carry a constant mode".into()));
        }
        if i >= self.coeffs.len() {
            self.coeffs.resize(i + 1, 0.0);
        }
        self.coeffs[i] = c;
        Ok(())
    }

    fn basis(&self, i: usize, theta: f64) -> f64 {
        let a = i as f64 * theta;
        match self.parity {
            Parity::Even => a.cos(),
            Parity::Odd => a.sin(),
        }
    }

    fn basis_dtheta(&self, i: usize, theta: f64) -> f64 {
        let fi = i as f64;
        let a = fi * theta;
        match self.parity {
            Parity::Even => -fi * a.sin(),
            Parity::Odd => fi * a.cos(),
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, c)| c * self.basis(i, theta)).sum()
    }

    pub fn eval_dtheta(&self, theta: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, c)| c * self.basis_dtheta(i, theta)).sum()
    }

    /// Sampled sup norm on a 4N-point grid.
    pub fn sup_norm(&self) -> f64 {
        let n = 4 * (self.coeffs.len() + 4);
        (0..n).map(|k| self.eval(2.0 * PI * k as f64 / n as f64).abs()).fold(0.0, f64::max)
    }

    /// Sum of |c_i| (1 + i + i²), a cheap bound for the C² norm.
    pub fn c2_bound(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, c)| c.abs() * (1.0 + i as f64 + (i * i) as f64)).sum()
    }

    pub fn l2_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { parity: self.parity, coeffs: self.coeffs.iter().map(|c| c * s).collect(), flags: self.flags }
    }

    /// Coefficient-wise sum; flags kept only where both operands satisfy them.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.parity != other.parity {
            return Err(Error::Parity("cannot add even and odd data".into()));
        }
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n).map(|i| self.coeff(i) + other.coeff(i)).collect();
        let flags = Orthogonality {
            constant: self.flags.constant && other.flags.constant,
            first_mode: self.flags.first_mode && other.flags.first_mode,
            low_eigen: self.flags.low_eigen && other.flags.low_eigen,
        };
        Ok(Self { parity: self.parity, coeffs, flags })
    }

    /// Projects sampled values on a uniform grid θ_k = 2πk/n onto modes 0..=truncation.
    pub fn from_samples(parity: Parity, samples: &[f64], truncation: usize) -> Self {
        let n = samples.len();
        let mut coeffs = vec![0.0; truncation + 1];
        for (i, c) in coeffs.iter_mut().enumerate() {
            if parity == Parity::Odd && i == 0 {
                continue;
            }
            let mut acc = 0.0;
            for (k, s) in samples.iter().enumerate() {
                let a = i as f64 * 2.0 * PI * k as f64 / n as f64;
                acc += s * match parity {
                    Parity::Even => a.cos(),
                    Parity::Odd => a.sin(),
                };
            }
            let w = if i == 0 || 2 * i == n { 1.0 } else { 2.0 };
            *c = w * acc / n as f64;
        }
        Self { parity, coeffs, flags: Orthogonality::NONE }
    }
}

/// Basis in u used by the shifted half-cylinder extension.
#[derive(Debug, Clone, Default)]
pub enum ShiftedBasis {
    /// e_{0,i}(u) = cos(iu) (or sin(iu) for odd data).
    #[default]
    Flat,
    /// Eigenfunctions e_{σ,i} of the reduced Lamé operator.
    Lame(Box<SpectralSystem>),
}

#[derive(Debug, Clone)]
pub enum ExtensionKind {
    /// (ρ̄/ρ)^i on ρ ≥ ρ̄.
    Exterior { radius: f64 },
    /// (ρ/ρ̄)^i on ρ ≤ ρ̄.
    Interior { radius: f64 },
    /// e^{−is} on s ≥ 0.
    HalfCylinder,
    /// e^{−i(v−v₀)} on v ≥ v₀.
    Shifted { v0: f64, basis: ShiftedBasis },
}

/// A harmonic function built mode-wise from boundary data.
#[derive(Debug, Clone)]
pub struct HarmonicExtension {
    pub kind: ExtensionKind,
    pub boundary: FourierBoundary,
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    Ok(())
}

/// Extension outside the disk of radius ρ̄; needs φ ⊥ 1.
pub fn extend_exterior(radius: f64, phi: &FourierBoundary) -> Result<HarmonicExtension> {
    check_radius(radius)?;
    phi.require_from_mode(1)?;
    Ok(HarmonicExtension { kind: ExtensionKind::Exterior { radius }, boundary: phi.clone() })
}

/// Extension inside the disk of radius ρ̄ (constants allowed).
pub fn extend_interior(radius: f64, phi: &FourierBoundary) -> Result<HarmonicExtension> {
    check_radius(radius)?;
    Ok(HarmonicExtension { kind: ExtensionKind::Interior { radius }, boundary: phi.clone() })
}

/// Extension along [0,∞) × S¹; needs φ ⊥ {1, first mode}.
pub fn extend_halfcylinder(phi: &FourierBoundary) -> Result<HarmonicExtension> {
    phi.require_from_mode(2)?;
    Ok(HarmonicExtension { kind: ExtensionKind::HalfCylinder, boundary: phi.clone() })
}

/// Extension along [v₀,∞) × S¹ in the given u-basis; needs φ ⊥ {e_0, e_1}.
pub fn extend_shifted(v0: f64, phi: &FourierBoundary, basis: ShiftedBasis) -> Result<HarmonicExtension> {
    phi.require_from_mode(2)?;
    if let ShiftedBasis::Lame(sys) = &basis {
        if sys.parity != phi.parity() {
            return Err(Error::Parity("eigenbasis parity differs from boundary data".into()));
        }
        if sys.len() <= phi.truncation() {
            return Err(Error::Domain(format!(
                "eigenbasis has {} functions, data needs {}",
                sys.len(),
                phi.truncation() + 1
            )));
        }
    }
    Ok(HarmonicExtension { kind: ExtensionKind::Shifted { v0, basis }, boundary: phi.clone() })
}

impl HarmonicExtension {
    /// Radial/axial factor of mode i and its derivative in the first coordinate.
    fn profile(&self, i: usize, t: f64) -> (f64, f64) {
        let fi = i as f64;
        match &self.kind {
            ExtensionKind::Exterior { radius } => {
                let p = (radius / t).powi(i as i32);
                (p, -fi * p / t)
            }
            ExtensionKind::Interior { radius } => {
                let p = (t / radius).powi(i as i32);
                (p, fi * p / t)
            }
            ExtensionKind::HalfCylinder => {
                let p = (-fi * t).exp();
                (p, -fi * p)
            }
            ExtensionKind::Shifted { v0, .. } => {
                let p = (-fi * (t - v0)).exp();
                (p, -fi * p)
            }
        }
    }

    fn angular(&self, i: usize, theta: f64) -> (f64, f64, f64) {
        if let ExtensionKind::Shifted { basis: ShiftedBasis::Lame(sys), .. } = &self.kind {
            let [e, e1, e2] = sys.eval_with_derivs(i, theta);
            return (e, e1, e2);
        }
        let fi = i as f64;
        let (s, c) = (fi * theta).sin_cos();
        match self.boundary.parity() {
            Parity::Even => (c, -fi * s, -fi * fi * c),
            Parity::Odd => (s, fi * c, -fi * fi * s),
        }
    }

    /// Value at (t, θ) where t is ρ, s or v according to the kind.
    pub fn eval(&self, t: f64, theta: f64) -> f64 {
        let mut acc = 0.0;
        for (i, c) in self.boundary.coeffs().iter().enumerate() {
            if *c != 0.0 {
                acc += c * self.profile(i, t).0 * self.angular(i, theta).0;
            }
        }
        acc
    }

    /// Derivative in the first coordinate (ρ, s or v).
    pub fn d_first(&self, t: f64, theta: f64) -> f64 {
        let mut acc = 0.0;
        for (i, c) in self.boundary.coeffs().iter().enumerate() {
            if *c != 0.0 {
                acc += c * self.profile(i, t).1 * self.angular(i, theta).0;
            }
        }
        acc
    }

    pub fn d_theta(&self, t: f64, theta: f64) -> f64 {
        let mut acc = 0.0;
        for (i, c) in self.boundary.coeffs().iter().enumerate() {
            if *c != 0.0 {
                acc += c * self.profile(i, t).0 * self.angular(i, theta).1;
            }
        }
        acc
    }

    /// Exact Laplacian from the mode formulas: polar for disk kinds, flat for cylinders.
    ///
    /// Vanishes identically for the flat bases; with a Lamé eigenbasis it returns
    /// the (nonzero) defect of the separated ansatz.
    pub fn laplacian(&self, t: f64, theta: f64) -> f64 {
        let mut acc = 0.0;
        for (i, c) in self.boundary.coeffs().iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let fi = i as f64;
            let (p, dp) = self.profile(i, t);
            let (a, _, a2) = self.angular(i, theta);
            let term = match &self.kind {
                ExtensionKind::Exterior { .. } | ExtensionKind::Interior { .. } => {
                    // p'' + p'/ρ with p'' = i(i∓1) p / ρ² reconstructed from p, p'
                    let d2p = dp * dp / p - dp / t;
                    (d2p + dp / t) * a + p * a2 / (t * t)
                }
                _ => fi * fi * p * a + p * a2,
            };
            acc += c * term;
        }
        acc
    }
}

/// Outcome of a pointwise identity check over a θ-grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub max_violation: f64,
    pub scale: f64,
    pub samples: usize,
}

const IDENTITY_SAMPLES: usize = 256;

fn identity_report<F: Fn(f64) -> (f64, f64)>(sides: F) -> IdentityReport {
    let mut max_violation: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..IDENTITY_SAMPLES {
        let th = 2.0 * PI * k as f64 / IDENTITY_SAMPLES as f64;
        let (lhs, rhs) = sides(th);
        max_violation = max_violation.max((lhs - rhs).abs());
        scale = scale.max(lhs.abs()).max(rhs.abs());
    }
    IdentityReport { max_violation, scale, samples: IDENTITY_SAMPLES }
}

/// ∂_θu(r₀, θ−π/2) against −r₀ ∂_r u(r₀, θ) for the decaying extension outside r₀.
pub fn derivative_identity_exterior(phi: &FourierBoundary, r0: f64) -> Result<IdentityReport> {
    check_radius(r0)?;
    let ext = HarmonicExtension { kind: ExtensionKind::Exterior { radius: r0 }, boundary: phi.clone() };
    Ok(identity_report(|th| (ext.d_theta(r0, th - PI / 2.0), -r0 * ext.d_first(r0, th))))
}

/// ∂_θu(r₀, θ−π/2) against r₀ ∂_r u(r₀, θ) for the regular extension inside r₀.
pub fn derivative_identity_interior(phi: &FourierBoundary, r0: f64) -> Result<IdentityReport> {
    check_radius(r0)?;
    let ext = HarmonicExtension { kind: ExtensionKind::Interior { radius: r0 }, boundary: phi.clone() };
    Ok(identity_report(|th| (ext.d_theta(r0, th - PI / 2.0), r0 * ext.d_first(r0, th))))
}

/// Dirichlet-to-Neumann map of the exterior extension: −r₀∂_r u = Σ i c_i cos(iθ).
pub fn dirichlet_to_neumann_exterior(phi: &FourierBoundary, r0: f64) -> Result<IdentityReport> {
    check_radius(r0)?;
    let ext = HarmonicExtension { kind: ExtensionKind::Exterior { radius: r0 }, boundary: phi.clone() };
    let weighted: Vec<f64> = phi.coeffs().iter().enumerate().map(|(i, c)| i as f64 * c).collect();
    let rhs = FourierBoundary { parity: phi.parity(), coeffs: weighted, flags: Orthogonality::NONE };
    Ok(identity_report(|th| (-r0 * ext.d_first(r0, th), rhs.eval(th))))
}

/// Dirichlet-to-Neumann map of the interior extension: r₀∂_r u = Σ i c_i cos(iθ).
pub fn dirichlet_to_neumann_interior(phi: &FourierBoundary, r0: f64) -> Result<IdentityReport> {
    check_radius(r0)?;
    let ext = HarmonicExtension { kind: ExtensionKind::Interior { radius: r0 }, boundary: phi.clone() };
    let weighted: Vec<f64> = phi.coeffs().iter().enumerate().map(|(i, c)| i as f64 * c).collect();
    let rhs = FourierBoundary { parity: phi.parity(), coeffs: weighted, flags: Orthogonality::NONE };
    Ok(identity_report(|th| (r0 * ext.d_first(r0, th), rhs.eval(th))))
}
