//! Text renderings of report documents.
//!
//! Renderers work on the JSON form so that `report` can re-render files
//! written by earlier runs.

use serde_json::Value;

use crate::{CliError, Format};

const ENERGY_KEYS: [&str; 6] = ["hhat_n", "hhat_2", "h_2", "mean_2", "volume", "growth_limit"];

/// Pretty JSON with sorted keys and a trailing newline.
pub fn json(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("JSON values serialize");
    s.push('\n');
    s
}

pub fn rerender(doc: &Value, format: Format) -> Result<String, CliError> {
    let kind = doc.get("report").and_then(Value::as_str).unwrap_or("");
    Ok(match (kind, format) {
        (_, Format::Json) => json(doc),
        ("identities", Format::Table) => identities_table(doc),
        ("identities", Format::Csv) => identities_csv(doc),
        ("energy", Format::Table) => energy_table(doc),
        ("energy", Format::Csv) => energy_csv(doc),
        ("scan", Format::Table) => scan_table(doc),
        ("scan", Format::Csv) => scan_csv(doc),
        _ => return Err(CliError::Config(format!("unknown report kind `{kind}`"))),
    })
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn sci(v: &Value) -> String {
    v.as_f64().map_or_else(|| text(v), |x| format!("{x:.3e}"))
}

fn full(v: &Value) -> String {
    v.as_f64().map_or_else(|| text(v), |x| format!("{x:e}"))
}

fn rows(doc: &Value, key: &str) -> Vec<Value> {
    doc.get(key).and_then(Value::as_array).cloned().unwrap_or_default()
}

pub fn identities_table(doc: &Value) -> String {
    let mut s = format!(
        "{} {} ({}), seed {}, tol scale {}\n",
        text(&doc["immersion"]),
        doc["params"],
        text(&doc["ambient"]),
        doc["seed"],
        doc["tol_scale"],
    );
    s.push_str(&format!(
        "{:<34} {:<11} {:<10} {:>12} {:>10} {:>7}  {}\n",
        "check", "kind", "rung", "residual", "tolerance", "points", "status"
    ));
    for c in rows(doc, "checks") {
        let status = match (c["samples"].as_u64(), c["passed"].as_bool()) {
            (Some(0), _) => "n/a",
            (_, Some(true)) => "ok",
            _ => "FAIL",
        };
        s.push_str(&format!(
            "{:<34} {:<11} {:<10} {:>12} {:>10} {:>7}  {}\n",
            text(&c["name"]),
            text(&c["kind"]),
            text(&c["rung"]),
            sci(&c["max_residual"]),
            sci(&c["tolerance"]),
            text(&c["samples"]),
            status,
        ));
    }
    let conv = &doc["commutator_convention"];
    s.push_str(&format!(
        "commutator term: {} (residual {}, alternative {})\n",
        text(&conv["used"]),
        sci(&conv["residual_used"]),
        sci(&conv["residual_alternative"]),
    ));
    let verdict = if doc["passed"].as_bool() == Some(true) { "PASS" } else { "FAIL" };
    s.push_str(&format!("overall: {verdict}\n"));
    s
}

pub fn identities_csv(doc: &Value) -> String {
    let mut s = String::from("name,kind,rung,max_residual,tolerance,samples,passed\n");
    for c in rows(doc, "checks") {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            text(&c["name"]),
            text(&c["kind"]),
            text(&c["rung"]),
            full(&c["max_residual"]),
            full(&c["tolerance"]),
            c["samples"],
            c["passed"],
        ));
    }
    s
}

pub fn energy_table(doc: &Value) -> String {
    let mut s = format!(
        "{} {}, n = {}, degree {}, {} nodes\n",
        text(&doc["immersion"]),
        doc["params"],
        doc["n"],
        doc["degree"],
        doc["nodes"],
    );
    for key in ENERGY_KEYS {
        s.push_str(&format!("{:<14} {:>24}\n", key, full(&doc[key])));
    }
    s
}

fn energy_csv(doc: &Value) -> String {
    let mut s = String::from("name,value,degree,nodes\n");
    for key in ENERGY_KEYS {
        s.push_str(&format!("{key},{},{},{}\n", full(&doc[key]), doc["degree"], doc["nodes"]));
    }
    s
}

pub fn scan_csv(doc: &Value) -> String {
    let mut s = format!("{},{},degree,nodes\n", text(&doc["parameter"]), ENERGY_KEYS.join(","));
    for row in rows(doc, "rows") {
        let mut cells = vec![full(&row["value"])];
        cells.extend(ENERGY_KEYS.iter().map(|k| full(&row[*k])));
        cells.push(text(&row["degree"]));
        cells.push(text(&row["nodes"]));
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn scan_table(doc: &Value) -> String {
    let mut s = format!("{:>12}", text(&doc["parameter"]));
    for k in ENERGY_KEYS {
        s.push_str(&format!(" {k:>12}"));
    }
    s.push('\n');
    for row in rows(doc, "rows") {
        s.push_str(&format!("{:>12}", text(&row["value"])));
        for k in ENERGY_KEYS {
            s.push_str(&format!(" {:>12}", sci(&row[k])));
        }
        s.push('\n');
    }
    s
}
