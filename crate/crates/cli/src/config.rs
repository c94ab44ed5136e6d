//! Run configuration: one TOML table per command, unknown keys rejected.

use std::f64::consts::FRAC_PI_2;

use serde::Deserialize;

use kmrglue::gluing::Theorem;
use kmrglue::harmonic::Parity;
use kmrglue::jacobi::MAX_SPECTRUM_MODES;

use crate::verify::SUITES;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub kmr_mesh: MeshConfig,
    pub spectrum: SpectrumConfig,
    pub scherk_solve: ScherkConfig,
    pub glue: GlueConfig,
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub spacing: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { sigma: 0.3, alpha: 0.2, beta: 0.0, u_min: 0.3, u_max: 1.3, v_min: -0.5, v_max: 0.5, spacing: 0.05 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub sigmas: Vec<f64>,
    pub modes: usize,
    pub parity: String,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { sigmas: vec![0.0, 0.05, 0.1, 0.3], modes: 16, parity: "even".into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScherkConfig {
    pub epsilon: f64,
    /// Asymptotic directions; (ε/4, ε/4) when omitted.
    pub theta: Option<[f64; 2]>,
    pub period: Option<f64>,
    /// Cosine coefficients of the seam data, starting at mode 0 (which must vanish).
    pub data: Vec<f64>,
    pub truncation: usize,
    pub radial_points: usize,
}

impl Default for ScherkConfig {
    fn default() -> Self {
        Self { epsilon: 1e-2, theta: None, period: None, data: Vec::new(), truncation: 8, radial_points: 801 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlueConfig {
    pub configuration: String,
    /// Pair every model with itself instead of solving a configuration.
    pub self_test: bool,
    pub epsilon: f64,
    pub truncation: usize,
    pub genus: Option<usize>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub trust_radius: f64,
    pub mesh_rings: usize,
    pub mesh_angles: usize,
}

impl Default for GlueConfig {
    fn default() -> Self {
        Self {
            configuration: "th1".into(),
            self_test: false,
            epsilon: 1e-2,
            truncation: 16,
            genus: None,
            tolerance: 1e-9,
            max_iterations: 50,
            trust_radius: 10.0,
            mesh_rings: 8,
            mesh_angles: 64,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Invariants to run; all of them when omitted.
    pub suites: Option<Vec<String>>,
    /// Added to every computed eigenvalue (fault injection).
    pub inject_eigenvalue_shift: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { suites: None, inject_eigenvalue_shift: 0.0 }
    }
}

pub type Validation = std::result::Result<(), String>;

fn finite(name: &str, x: f64) -> Validation {
    if x.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be finite, got {x}"))
    }
}

impl MeshConfig {
    pub fn validate(&self) -> Validation {
        for (n, x) in [("u_min", self.u_min), ("u_max", self.u_max), ("v_min", self.v_min), ("v_max", self.v_max)] {
            finite(n, x)?;
        }
        if !(self.sigma > 0.0 && self.sigma < FRAC_PI_2) {
            return Err(format!("sigma must lie in (0, pi/2), got {}", self.sigma));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(format!("spacing must be positive, got {}", self.spacing));
        }
        let (nu, nv) = self.grid_size();
        if nu * nv > 4_000_000 {
            return Err(format!("{nu} x {nv} grid is too large"));
        }
        Ok(())
    }

    /// A rectangle without interior gives an empty mesh.
    pub fn is_empty(&self) -> bool {
        self.u_max <= self.u_min || self.v_max <= self.v_min
    }

    pub fn grid_size(&self) -> (usize, usize) {
        if self.is_empty() {
            return (0, 0);
        }
        let n = |lo: f64, hi: f64| ((hi - lo) / self.spacing).round() as usize + 1;
        (n(self.u_min, self.u_max), n(self.v_min, self.v_max))
    }
}

pub fn parse_parity(s: &str) -> std::result::Result<Parity, String> {
    match s.to_ascii_lowercase().as_str() {
        "even" | "cos" => Ok(Parity::Even),
        "odd" | "sin" => Ok(Parity::Odd),
        _ => Err(format!("parity must be 'even' or 'odd', got '{s}'")),
    }
}

impl SpectrumConfig {
    pub fn validate(&self) -> Validation {
        parse_parity(&self.parity)?;
        if self.modes == 0 || self.modes > MAX_SPECTRUM_MODES {
            return Err(format!("modes must lie in 1..={MAX_SPECTRUM_MODES}, got {}", self.modes));
        }
        for &s in &self.sigmas {
            if !(s >= 0.0 && s < FRAC_PI_2) {
                return Err(format!("sigma must lie in [0, pi/2), got {s}"));
            }
        }
        Ok(())
    }
}

impl ScherkConfig {
    pub fn validate(&self) -> Validation {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if let Some(t) = self.theta {
            if !t.iter().all(|x| (0.0..FRAC_PI_2).contains(x)) {
                return Err(format!("directions must lie in [0, pi/2), got {t:?}"));
            }
            if t == [0.0, 0.0] && self.period.is_none() {
                return Err("a flat end needs an explicit period".into());
            }
        }
        if let Some(p) = self.period {
            if !(p > 0.0 && p.is_finite()) {
                return Err(format!("period must be positive, got {p}"));
            }
        }
        if self.truncation < 2 {
            return Err(format!("truncation must be at least 2, got {}", self.truncation));
        }
        if self.data.len() > self.truncation + 1 {
            return Err(format!("{} data coefficients exceed truncation {}", self.data.len(), self.truncation));
        }
        if self.data.first().is_some_and(|c| *c != 0.0) {
            return Err("seam data must have zero mean".into());
        }
        for &c in &self.data {
            finite("data coefficient", c)?;
        }
        if self.radial_points < 16 {
            return Err(format!("radial_points must be at least 16, got {}", self.radial_points));
        }
        Ok(())
    }

    pub fn directions(&self) -> [f64; 2] {
        self.theta.unwrap_or([0.25 * self.epsilon; 2])
    }
}

impl GlueConfig {
    pub fn validate(&self) -> Validation {
        if !self.self_test {
            self.configuration.parse::<Theorem>().map_err(|e| e.to_string())?;
        }
        if self.mesh_rings < 1 || self.mesh_angles < 3 {
            return Err("seam meshes need at least 1 ring and 3 angles".into());
        }
        Ok(())
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Validation {
        finite("inject_eigenvalue_shift", self.inject_eigenvalue_shift)?;
        if let Some(s) = &self.suites {
            for name in s {
                if !SUITES.contains(&name.as_str()) {
                    return Err(format!("unknown invariant '{name}'"));
                }
            }
        }
        Ok(())
    }

    pub fn selected(&self) -> Vec<&'static str> {
        match &self.suites {
            None => SUITES.to_vec(),
            Some(s) => SUITES.iter().copied().filter(|n| s.iter().any(|x| x == n)).collect(),
        }
    }
}
