//! Batch front-end for the `whitney` engine.
//!
//! Every command reads a [`RunConfig`], writes one report (JSON, CSV or a
//! fixed-width table) and maps the outcome to an exit status:
//! [`EXIT_CHECKS_FAILED`] when a check misses its tolerance,
//! [`EXIT_CONFIG`] for unreadable configs, [`EXIT_IMMERSION`] when the
//! geometry engine rejects the immersion and [`EXIT_IO`] for file errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;
use whitney::identities::{run_identity_suite, SuiteOptions};
use whitney::immersion::ImmersionSpec;
use whitney::quadrature::{energy_report, EnergyReport, QuadratureRule};

pub mod config;
pub mod render;

pub use config::{Format, RunConfig, ScanConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IMMERSION: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Immersion(#[from] whitney::error::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Immersion(_) => EXIT_IMMERSION,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "whitney", version, about = "Lagrangian submanifold identities and energies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pointwise identity suite at seeded sample points.
    Identities(RunArgs),
    /// Integrate the energy functionals over a compact immersion.
    Energy(RunArgs),
    /// Energy functionals along a parameter sweep.
    Scan(RunArgs),
    /// Re-render a JSON report.
    Report {
        path: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol_scale: Option<f64>,
}

/// Rendered report and whether every requested check passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub out: Option<PathBuf>,
    pub passed: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            EXIT_CHECKS_FAILED
        }
    }
}

pub fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let text = read(&args.config)?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(scale) = args.tol_scale {
        cfg.tol_scale = scale;
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if args.format.is_some() {
        cfg.format = args.format;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a command without touching stdout.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Identities(args) => identities(&load_config(args)?),
        Command::Energy(args) => energy(&load_config(args)?),
        Command::Scan(args) => scan(&load_config(args)?),
        Command::Report { path, format, out } => {
            let doc: Value = serde_json::from_str(&read(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let text = render::rerender(&doc, format.unwrap_or(Format::Table))?;
            let passed = doc.get("passed").and_then(Value::as_bool).unwrap_or(true);
            Ok(Outcome {
                text,
                out: out.clone(),
                passed,
            })
        }
    }
}

/// Runs a command and writes its report to `--out` or stdout.
pub fn run(cli: &Cli) -> Result<i32, CliError> {
    let outcome = execute(cli)?;
    match &outcome.out {
        Some(path) => fs::write(path, &outcome.text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?,
        None => print!("{}", outcome.text),
    }
    Ok(outcome.exit_code())
}

pub fn identities(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let imm = cfg.immersion.build()?;
    let opts = SuiteOptions {
        samples: cfg.samples,
        seed: cfg.seed,
        tol_scale: cfg.tol_scale,
        simons_points: cfg.simons_points,
    };
    let report = run_identity_suite(&imm, &opts)?;
    let doc = versioned("identities", &report)?;
    let text = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => render::json(&doc),
        Format::Csv => render::identities_csv(&doc),
        Format::Table => render::identities_table(&doc),
    };
    Ok(Outcome {
        text,
        out: cfg.out.clone(),
        passed: report.passed,
    })
}

fn energy_of(spec: &ImmersionSpec, degree: Option<usize>) -> Result<EnergyReport, CliError> {
    let imm = spec.build()?;
    let rule = QuadratureRule::for_immersion(&imm, degree)?;
    Ok(energy_report(&imm, &rule)?)
}

pub fn energy(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let report = energy_of(&cfg.immersion, cfg.quadrature_degree)?;
    let doc = versioned("energy", &report)?;
    let text = match cfg.format.unwrap_or(Format::Json) {
        Format::Json => render::json(&doc),
        Format::Csv => report.to_csv(),
        Format::Table => render::energy_table(&doc),
    };
    Ok(Outcome {
        text,
        out: cfg.out.clone(),
        passed: true,
    })
}

pub fn scan(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sweep = cfg
        .scan
        .as_ref()
        .ok_or_else(|| CliError::Config("scan needs a `scan` section".into()))?;
    let mut values = sweep.values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut rows = Vec::with_capacity(values.len());
    for &v in &values {
        let spec = cfg.spec_with(&sweep.parameter, v)?;
        let report = energy_of(&spec, cfg.quadrature_degree)?;
        let mut row = serde_json::Map::new();
        row.insert("value".into(), json!(v));
        for (name, x) in report.entries() {
            row.insert(name.into(), json!(x));
        }
        row.insert("degree".into(), json!(report.degree));
        row.insert("nodes".into(), json!(report.nodes));
        rows.push(Value::Object(row));
    }
    let doc = json!({
        "schema": SCHEMA_VERSION,
        "report": "scan",
        "immersion": serde_json::to_value(&cfg.immersion).map_err(|e| CliError::Config(e.to_string()))?,
        "parameter": sweep.parameter,
        "rows": rows,
    });
    let text = match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => render::json(&doc),
        Format::Csv => render::scan_csv(&doc),
        Format::Table => render::scan_table(&doc),
    };
    Ok(Outcome {
        text,
        out: cfg.out.clone(),
        passed: true,
    })
}

fn versioned<T: serde::Serialize>(kind: &str, report: &T) -> Result<Value, CliError> {
    let mut doc = serde_json::to_value(report).map_err(|e| CliError::Config(e.to_string()))?;
    let obj = doc.as_object_mut().expect("reports serialize as objects");
    obj.insert("schema".into(), json!(SCHEMA_VERSION));
    obj.insert("report".into(), json!(kind));
    Ok(doc)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
