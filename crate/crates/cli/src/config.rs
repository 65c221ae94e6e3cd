//! Run configuration: one JSON document, or `key=value` lines with dotted keys.
//!
//! ```text
//! # whitney sphere in C^3
//! immersion.family = whitney_cn
//! immersion.n = 3
//! immersion.r = 1
//! samples = 50
//! ```
//!
//! Values are read as JSON when they parse as JSON (`2`, `[1, 2]`, `true`)
//! and as bare strings otherwise.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use whitney::immersion::ImmersionSpec;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Dotted path into the immersion spec, e.g. `eps` or `radii.1`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub immersion: ImmersionSpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol_scale")]
    pub tol_scale: f64,
    /// Points at which the finite-difference Laplacian checks run.
    #[serde(default = "default_simons_points")]
    pub simons_points: usize,
    /// Nodes per axis; the rule's default when absent.
    #[serde(default)]
    pub quadrature_degree: Option<usize>,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

fn default_samples() -> usize {
    20
}

fn default_tol_scale() -> f64 {
    1.0
}

fn default_simons_points() -> usize {
    5
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
        } else {
            key_value_document(text)?
        };
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.tol_scale.is_finite() && self.tol_scale > 0.0) {
            return Err(CliError::Config("tol_scale must be a positive number".into()));
        }
        if self.quadrature_degree == Some(0) {
            return Err(CliError::Config("quadrature_degree must be at least 1".into()));
        }
        if let Some(scan) = &self.scan {
            if scan.values.is_empty() {
                return Err(CliError::Config("scan needs at least one value".into()));
            }
            if scan.values.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config("scan values must be finite".into()));
            }
        }
        Ok(())
    }

    /// The immersion spec with `path` set to `value`.
    pub fn spec_with(&self, path: &str, value: f64) -> Result<ImmersionSpec, CliError> {
        let mut doc = serde_json::to_value(&self.immersion).map_err(|e| CliError::Config(e.to_string()))?;
        let slot = path
            .split('.')
            .try_fold(&mut doc, |node, key| match node {
                Value::Object(map) => map.get_mut(key),
                Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            })
            .ok_or_else(|| CliError::Config(format!("scan parameter `{path}` not found in the immersion spec")))?;
        *slot = serde_json::json!(value);
        serde_json::from_value(doc).map_err(|e| CliError::Config(format!("scan parameter `{path}`: {e}")))
    }
}

fn key_value_document(text: &str) -> Result<Value, CliError> {
    let mut root = Map::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, raw) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key=value", lineno + 1)))?;
        let raw = raw.trim();
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let keys: Vec<&str> = key.trim().split('.').map(str::trim).collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(CliError::Config(format!("line {}: empty key segment", lineno + 1)));
        }
        insert(&mut root, &keys, value).map_err(|msg| CliError::Config(format!("line {}: {msg}", lineno + 1)))?;
    }
    Ok(Value::Object(root))
}

fn insert(map: &mut Map<String, Value>, keys: &[&str], value: Value) -> Result<(), String> {
    let (head, rest) = keys.split_first().expect("non-empty key");
    if rest.is_empty() {
        if map.insert(head.to_string(), value).is_some() {
            return Err(format!("duplicate key `{head}`"));
        }
        return Ok(());
    }
    match map.entry(head.to_string()).or_insert_with(|| Value::Object(Map::new())) {
        Value::Object(child) => insert(child, rest, value),
        _ => Err(format!("`{head}` is both a value and a table")),
    }
}
