use std::f64::consts::PI;
use std::fs;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use whitney_cli::{RunConfig, EXIT_CHECKS_FAILED, EXIT_CONFIG, EXIT_IMMERSION};

fn whitney(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_whitney")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn csv_column(text: &str, column: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn keys_sorted(v: &Value) -> bool {
    match v {
        Value::Object(map) => {
            let keys: Vec<&String> = map.keys().collect();
            keys.windows(2).all(|w| w[0] < w[1]) && map.values().all(keys_sorted)
        }
        Value::Array(items) => items.iter().all(keys_sorted),
        _ => true,
    }
}

#[test]
fn key_value_and_json_configs_agree() {
    let kv = RunConfig::parse("# comment\nimmersion.family = whitney_cn\nimmersion.n = 3\nimmersion.r = 1\nsamples = 50\n").unwrap();
    let js = RunConfig::parse(r#"{"immersion": {"family": "whitney_cn", "n": 3, "r": 1.0}, "samples": 50}"#).unwrap();
    assert_eq!(kv, js);
    assert_eq!(kv.seed, 0);
    assert!(RunConfig::parse("samples = 3\n").is_err());
    assert!(RunConfig::parse("immersion.family = torus\n").is_err());
    assert!(RunConfig::parse(r#"{"immersion": {"family": "rpn", "n": 2}, "tol_scale": -1}"#).is_err());
    assert!(RunConfig::parse(r#"{"immersion": {"family": "rpn", "n": 2}, "typo": 1}"#).is_err());
}

#[test]
fn whitney_identities_pass_and_report_is_schema_versioned() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "w.conf", "immersion.family = whitney_cn\nimmersion.n = 3\nimmersion.r = 1\nsamples = 50\n");
    let out = dir.path().join("report.json");
    let run = whitney(&["identities", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.ends_with("}\n"));
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["schema"], 1);
    assert_eq!(doc["report"], "identities");
    assert_eq!(doc["points"].as_array().unwrap().len(), 50);
    assert!(keys_sorted(&doc));

    let table = whitney(&["report", out.to_str().unwrap()]);
    assert_eq!(table.status.code(), Some(0));
    assert!(String::from_utf8(table.stdout).unwrap().contains("overall: PASS"));
}

#[test]
fn report_key_set_is_family_independent() {
    let dir = TempDir::new().unwrap();
    let keys = |spec: &str| {
        let cfg = write(&dir, "c.json", &format!(r#"{{"immersion": {spec}, "samples": 2, "simons_points": 1}}"#));
        let run = whitney(&["identities", "--config", &cfg]);
        let doc: Value = serde_json::from_slice(&run.stdout).unwrap();
        doc.as_object().unwrap().keys().cloned().collect::<Vec<_>>()
    };
    let torus = keys(r#"{"family": "product_torus", "radii": [1, 2]}"#);
    assert_eq!(torus, keys(r#"{"family": "whitney_cpn", "n": 2, "theta": 0.5}"#));
    assert_eq!(torus, keys(r#"{"family": "plane", "n": 2}"#));
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", r#"{"immersion": {"family": "plane", "n": 2, "complexify": 1}}"#);
    let run = whitney(&["identities", "--config", &bad]);
    assert_eq!(run.status.code(), Some(EXIT_IMMERSION));
    assert!(String::from_utf8_lossy(&run.stderr).contains("Lagrangian condition violated"));

    let broken = write(&dir, "broken.json", r#"{"immersion": "#);
    assert_eq!(whitney(&["identities", "--config", &broken]).status.code(), Some(EXIT_CONFIG));

    let strict = write(&dir, "p.json", r#"{"immersion": {"family": "perturbed_whitney", "n": 2, "r": 1, "eps": 0.05}, "samples": 3, "simons_points": 1}"#);
    let run = whitney(&["identities", "--config", &strict, "--tol-scale", "1e-12", "--format", "table"]);
    assert_eq!(run.status.code(), Some(EXIT_CHECKS_FAILED));
    assert!(String::from_utf8(run.stdout).unwrap().contains("FAIL"));
}

#[test]
fn torus_reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "t.json", r#"{"immersion": {"family": "product_torus", "radii": [1, 2]}}"#);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let r = whitney(&["identities", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(0));
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn whitney_radius_scan_has_zero_gap_energy() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "s.json",
        r#"{"immersion": {"family": "whitney_cn", "n": 2, "r": 1}, "quadrature_degree": 20,
            "scan": {"parameter": "r", "values": [2, 0.5, 1]}}"#,
    );
    let run = whitney(&["scan", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(0));
    let text = String::from_utf8(run.stdout).unwrap();
    assert_eq!(csv_column(&text, "r"), vec![0.5, 1.0, 2.0]);
    assert!(csv_column(&text, "hhat_n").iter().all(|v| *v < 1e-7));
}

#[test]
fn perturbation_scan_starts_at_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "s.conf",
        "immersion.family = perturbed_whitney\nimmersion.n = 2\nimmersion.r = 1\nimmersion.eps = 0\n\
         quadrature_degree = 24\nscan.parameter = eps\nscan.values = [0, 0.01, 0.02, 0.03, 0.04, 0.05]\n",
    );
    let run = whitney(&["scan", "--config", &cfg]);
    let text = String::from_utf8(run.stdout).unwrap();
    let gap = csv_column(&text, "hhat_n");
    assert!(gap[0] < 1e-20);
    assert!(gap.iter().all(|v| *v >= -1e-9));
    assert!(gap.windows(2).all(|w| w[1] >= w[0] - 1e-9));
}

#[test]
fn torus_radius_scan_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "s.json",
        r#"{"immersion": {"family": "product_torus", "radii": [1, 1]}, "scan": {"parameter": "radii.1", "values": [1, 2, 4]}}"#,
    );
    let out = dir.path().join("scan.json");
    let run = whitney(&["scan", "--config", &cfg, "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for row in doc["rows"].as_array().unwrap() {
        let t = row["value"].as_f64().unwrap();
        // |ĥ|² = (1 + t⁻²)/4 over area 4π² t
        let expect = 0.25 * (1.0 + t.powi(-2)) * 4.0 * PI * PI * t;
        assert!((row["hhat_2"].as_f64().unwrap() - expect).abs() < 1e-6);
    }
    let csv = whitney(&["report", out.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(String::from_utf8(csv.stdout).unwrap().lines().count(), 4);
}

#[test]
fn energy_formats() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "e.json", r#"{"immersion": {"family": "product_torus", "radii": [1, 1]}}"#);
    let csv = String::from_utf8(whitney(&["energy", "--config", &cfg, "--format", "csv"]).stdout).unwrap();
    assert!(csv.starts_with("name,value,degree,nodes\n"));
    let h2 = csv.lines().find(|l| l.starts_with("h_2,")).unwrap();
    let v: f64 = h2.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 8.0 * PI * PI).abs() < 1e-6);

    let plane = write(&dir, "p.json", r#"{"immersion": {"family": "plane", "n": 2}}"#);
    assert_eq!(whitney(&["energy", "--config", &plane]).status.code(), Some(EXIT_IMMERSION));
}
