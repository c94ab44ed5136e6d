use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use kmrglue_cli::commands::{self, Failure};
use kmrglue_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "kmrglue", version, about = "KMR examples, end models and Cauchy-data matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML file with one table per command
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for sampled checks
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides epsilon of scherk-solve and glue
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Overrides the mode truncation (spectrum modes, scherk-solve data, glue)
    #[arg(long, global = true)]
    truncation: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// OBJ mesh of a KMR patch and its periods
    KmrMesh,
    /// Reduced Lamé spectrum with the eigenvalue bound check
    Spectrum,
    /// Solve a Scherk-type end with prescribed seam data
    ScherkSolve,
    /// Solve a matching configuration
    Glue,
    /// Run the invariant suite
    Verify,
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        None => RunConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(|e| Failure::Validation(format!("{e:#}")))?;
            toml::from_str(&text).map_err(|e| Failure::Validation(e.to_string()))?
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(e) = cli.epsilon {
        cfg.scherk_solve.epsilon = e;
        cfg.glue.epsilon = e;
    }
    if let Some(n) = cli.truncation {
        cfg.spectrum.modes = n;
        cfg.scherk_solve.truncation = n;
        cfg.glue.truncation = n;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load(cli)?;
    let out = &cli.out;
    let written = match cli.command {
        Command::KmrMesh => commands::kmr_mesh(&cfg.kmr_mesh, out)?,
        Command::Spectrum => commands::spectrum(&cfg, out)?,
        Command::ScherkSolve => commands::scherk_solve(&cfg.scherk_solve, out)?,
        Command::Glue => commands::glue(&cfg.glue, out)?,
        Command::Verify => {
            let (written, checks) = commands::verify(&cfg, out)?;
            for c in &checks {
                let status = if c.pass { "PASS" } else { "FAIL" };
                println!("{status} {} value={:.6e} threshold={:.6e} {}", c.name, c.value, c.threshold, c.detail);
            }
            let passed = checks.iter().filter(|c| c.pass).count();
            println!("{passed}/{} invariants pass", checks.len());
            written
        }
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
