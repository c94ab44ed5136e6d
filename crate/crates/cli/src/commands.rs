//! The five verbs. Each validates, computes in memory, then writes.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use kmrglue::gluing::{self_test, solve_matching, GluingConfig, MatchingState, Theorem};
use kmrglue::harmonic::{FourierBoundary, Orthogonality, Parity};
use kmrglue::jacobi::{eigenvalue_bound_check, reduced_spectrum};
use kmrglue::kmr::{evaluate_patch, MeshPatch, PatchRegion, SurfaceParams};
use kmrglue::model_graphs::{conormal_flux, scherk_trace_csv, EndModel, ScherkProblem, scherk_end, Orientation};
use kmrglue::Error;
use num_complex::Complex64;

use crate::config::{parse_parity, GlueConfig, MeshConfig, RunConfig, ScherkConfig};
use crate::verify;

/// Exit status 1 for bad input, 2 for numerical or I/O failure.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid configuration: {m}"),
            Failure::Numerical(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Numerical(e)
    }
}

/// Precondition failures of the library count as bad input.
fn classify(e: Error) -> Failure {
    match e {
        Error::NoConvergence { .. } | Error::TrustRegion(_) => Failure::Numerical(e.into()),
        _ => Failure::Validation(e.to_string()),
    }
}

fn invalid(r: std::result::Result<(), String>) -> Result<(), Failure> {
    r.map_err(Failure::Validation)
}

pub type Outcome = Result<Vec<PathBuf>, Failure>;

fn write_all(out: &Path, files: Vec<(String, String)>) -> Outcome {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

fn obj(vertices: &[[f64; 3]], faces: &[[usize; 3]]) -> String {
    let mut s = String::new();
    for v in vertices {
        s.push_str(&format!("v {:.12e} {:.12e} {:.12e}\n", v[0], v[1], v[2]));
    }
    for f in faces {
        s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    s
}

/// Two triangles per grid cell; `wrap` closes the first index periodically.
fn grid_faces(nu: usize, nv: usize, wrap: bool) -> Vec<[usize; 3]> {
    let cols = if wrap { nu } else { nu.saturating_sub(1) };
    let mut faces = Vec::new();
    for j in 0..nv.saturating_sub(1) {
        for i in 0..cols {
            let i1 = (i + 1) % nu;
            let (a, b, c, d) = (j * nu + i, j * nu + i1, (j + 1) * nu + i1, (j + 1) * nu + i);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    faces
}

fn mesh_obj(patch: &MeshPatch) -> String {
    obj(&patch.points, &grid_faces(patch.nu, patch.nv, false))
}

fn period_csv(p: &SurfaceParams) -> Result<String, Error> {
    let mut s = String::from("quantity,measured,expected,abs_error\n");
    let mut row = |name: &str, got: f64, want: Option<f64>| {
        let (w, e) = match want {
            Some(w) => (format!("{w:.12e}"), format!("{:.3e}", (got - w).abs())),
            None => (String::new(), String::new()),
        };
        s.push_str(&format!("{name},{got:.12e},{w},{e}\n"));
    };
    if let Some(end) = p.sheet_one_zero_end().copied() {
        let t = p.end_period_contour(&end)?;
        let expected: [Option<f64>; 3] = if p.beta == 0.0 {
            [Some(0.0), Some(PI * p.mu * p.t_alpha()), Some(0.0)]
        } else {
            [None; 3]
        };
        for (k, axis) in ["x", "y", "z"].iter().enumerate() {
            row(&format!("end_period_{axis}"), t[k], expected[k]);
        }
        let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        row("end_period_norm", norm, p.end_period_norm().ok());
    }
    let u_loop = p.u_loop_period(0.0)?;
    for (k, axis) in ["x", "y", "z"].iter().enumerate() {
        row(&format!("u_loop_{axis}"), u_loop[k], Some(0.0));
    }
    Ok(s)
}

pub fn kmr_mesh(cfg: &MeshConfig, out: &Path) -> Outcome {
    invalid(cfg.validate())?;
    let params = SurfaceParams::new(cfg.sigma, cfg.alpha, cfg.beta).map_err(classify)?;
    let (nu, nv) = cfg.grid_size();
    for i in 0..nu {
        for j in 0..nv {
            let z = Complex64::new(cfg.u_min + i as f64 * cfg.spacing, cfg.v_min + j as f64 * cfg.spacing);
            if params.distance_to_ends(z) < params.detour_radius() {
                return Err(Failure::Validation(format!("grid point {z} lies too close to an end")));
            }
        }
    }
    let mesh = if cfg.is_empty() {
        String::new()
    } else {
        let region = PatchRegion { u_min: cfg.u_min, u_max: cfg.u_max, v_min: cfg.v_min, v_max: cfg.v_max };
        mesh_obj(&evaluate_patch(&params, region, cfg.spacing).map_err(classify)?)
    };
    let periods = period_csv(&params).map_err(classify)?;
    write_all(out, vec![("kmr_mesh.obj".into(), mesh), ("kmr_periods.csv".into(), periods)])
}

pub fn spectrum(cfg: &RunConfig, out: &Path) -> Outcome {
    let sc = &cfg.spectrum;
    invalid(sc.validate())?;
    let parity = parse_parity(&sc.parity).map_err(Failure::Validation)?;
    let mut csv = String::from("sigma,i,lambda,lambda_minus_i_sq,lower_bound,within_bounds\n");
    for &sigma in &sc.sigmas {
        let sys = reduced_spectrum(sigma, sc.modes, parity).map_err(classify)?;
        for row in eigenvalue_bound_check(&sys, 1e-8) {
            csv.push_str(&format!(
                "{sigma},{},{:.12e},{:.12e},{:.12e},{}\n",
                row.index, row.lambda, row.shift, row.lower + 0.0, row.holds
            ));
        }
    }
    write_all(out, vec![("spectrum.csv".into(), csv)])
}

fn seam_csv(m: &EndModel, n: usize) -> Result<String, Error> {
    let mut s = String::from("theta,value,r_dr\n");
    let (values, slopes) = m.seam_trace(n)?;
    for (k, (v, d)) in values.iter().zip(&slopes).enumerate() {
        s.push_str(&format!("{:.12e},{v:.12e},{d:.12e}\n", 2.0 * PI * k as f64 / n as f64));
    }
    Ok(s)
}

pub fn scherk_solve(cfg: &ScherkConfig, out: &Path) -> Outcome {
    invalid(cfg.validate())?;
    let mut c = cfg.data.clone();
    c.resize(cfg.truncation + 1, 0.0);
    let phi = FourierBoundary::new(Parity::Even, c, Orthogonality::CONSTANT).map_err(classify)?;
    let theta = cfg.directions();
    let mut problem = ScherkProblem::new(theta, cfg.period, cfg.epsilon, &phi);
    problem.nt = cfg.radial_points;
    let m = scherk_end(Orientation::Up, &problem).map_err(classify)?;
    let sol = m.scherk_solution().expect("Scherk-type model carries its solution");
    let (flux, euclidean) = conormal_flux(&m, m.seam_radius, 512).map_err(classify)?;
    let target = -(theta[0].sin() + theta[1].sin()) * sol.period;
    let report = format!(
        "eps = {:e}\ntheta = [{:.12e}, {:.12e}]\nperiod = {:.12e}\nseam_radius = {:.12e}\nlog_coeff = {:.12e}\n\
         tilt = {:.12e}\nflux = {flux:.12e}\neuclidean_flux = {euclidean:.12e}\nflux_target = {target:.12e}\n\
         flux_relative_error = {:.6e}\ncontraction = {:.6e}\niterations = {}\ncorrection_sup = {:.6e}\n",
        cfg.epsilon,
        theta[0],
        theta[1],
        sol.period,
        m.seam_radius,
        m.expansion.log_coeff,
        sol.tilt + 0.0,
        (flux / target - 1.0).abs(),
        sol.contraction,
        sol.trace.len(),
        sol.correction_sup(),
    );
    let seam = seam_csv(&m, 128).map_err(classify)?;
    write_all(
        out,
        vec![
            ("scherk_report.txt".into(), report),
            ("scherk_trace.csv".into(), scherk_trace_csv(&sol.trace)),
            ("scherk_seam.csv".into(), seam),
        ],
    )
}

fn gluing_config(g: &GlueConfig) -> Result<GluingConfig, Failure> {
    let theorem: Theorem = g.configuration.parse().map_err(classify)?;
    let mut c = GluingConfig::new(theorem, g.epsilon);
    c.truncation = g.truncation;
    if let Some(k) = g.genus {
        c.genus = k;
    }
    c.tolerance = g.tolerance;
    c.max_iterations = g.max_iterations;
    c.trust_radius = g.trust_radius;
    c.validate().map_err(classify)?;
    Ok(c)
}

/// The graph over its annulus as a polar grid (rings × angles, closed in θ).
fn graph_obj(m: &EndModel, rings: usize, angles: usize) -> Result<String, Error> {
    let (r0, r1) = m.side.annulus(m.seam_radius);
    let mut v = Vec::with_capacity((rings + 1) * angles);
    for i in 0..=rings {
        let r = r0 + (r1 - r0) * i as f64 / rings as f64;
        for j in 0..angles {
            let t = 2.0 * PI * j as f64 / angles as f64;
            v.push([r * t.cos(), r * t.sin(), m.eval(r, t)?]);
        }
    }
    Ok(obj(&v, &grid_faces(angles, rings + 1, true)))
}

fn glue_files(state: &MatchingState, g: &GlueConfig) -> Result<Vec<(String, String)>, Error> {
    let mut files = vec![("glue_report.txt".to_string(), state.report()), ("glue_trace.csv".to_string(), state.trace_csv())];
    for (k, s) in state.seams.iter().enumerate() {
        let tag = if state.theorem.is_none() { format!("{}_{k}", s.name.name()) } else { s.name.name().to_string() };
        files.push((format!("seam_{tag}_inner.obj"), graph_obj(&s.inner, g.mesh_rings, g.mesh_angles)?));
        files.push((format!("seam_{tag}_outer.obj"), graph_obj(&s.outer, g.mesh_rings, g.mesh_angles)?));
    }
    Ok(files)
}

pub fn glue(g: &GlueConfig, out: &Path) -> Outcome {
    invalid(g.validate())?;
    let result = if g.self_test {
        if !(g.epsilon > 0.0 && g.epsilon <= 1e-2) || g.truncation < 2 {
            return Err(Failure::Validation(format!("self-test needs 0 < epsilon <= 1e-2 and truncation >= 2")));
        }
        self_test(g.epsilon, g.truncation)
    } else {
        solve_matching(&gluing_config(g)?)
    };
    match result {
        Ok(state) => write_all(out, glue_files(&state, g).map_err(classify)?),
        Err(Error::NoConvergence { iterations, detail }) => {
            // keep the trace for diagnosis
            write_all(out, vec![("glue_trace.csv".into(), detail)])?;
            Err(Failure::Numerical(anyhow::anyhow!("no convergence after {iterations} iterations")))
        }
        Err(e) => Err(classify(e)),
    }
}

pub fn verify(cfg: &RunConfig, out: &Path) -> Result<(Vec<PathBuf>, Vec<verify::Check>), Failure> {
    invalid(cfg.verify.validate())?;
    let checks = verify::run(&cfg.verify, cfg.seed);
    let files = write_all(out, vec![("verify.csv".into(), verify::to_csv(&checks))])?;
    Ok((files, checks))
}
