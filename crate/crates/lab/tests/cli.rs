use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qvplab(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvplab"))
        .args(args)
        .env("QVPLAB_OUTPUT_ROOT", root)
        .output()
        .expect("spawn qvplab")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SPACING: &str = r#"
experiment = "spacing-overlap"

[physics]
sigma = 1.0
theta = "3pi"
theta_grid = ["2.23pi", "2.5pi", "3pi", "3.5pi"]
n_values = [1, 10, 100, 1000, 10000]

[output]
directory = "DIR"
"#;

fn spacing_config(tmp: &TempDir, dir: &str) -> String {
    write_config(tmp.path(), &format!("{dir}.toml"), &SPACING.replace("DIR", dir))
}

fn digest(report: &Path) -> String {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    v["digest"].as_str().unwrap().to_owned()
}

#[test]
fn passing_run_writes_both_formats() {
    let tmp = TempDir::new().unwrap();
    let out = qvplab(tmp.path(), &["run", &spacing_config(&tmp, "a")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(tmp.path().join("a/summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("experiment,theta,n,sigma,lambda,"));
    assert_eq!(lines.count(), 20);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["experiment"], "spacing-overlap");
}

#[test]
fn reruns_share_a_digest() {
    let (tmp, other) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = spacing_config(&tmp, "same");
    for root in [&tmp, &other] {
        assert_eq!(qvplab(root.path(), &["run", &cfg]).status.code(), Some(0));
    }
    assert_eq!(digest(&tmp.path().join("same/report.json")), digest(&other.path().join("same/report.json")));
    let csv = |root: &TempDir| fs::read_to_string(root.path().join("same/summary.csv")).unwrap();
    assert_eq!(csv(&tmp), csv(&other));
}

#[test]
fn existing_output_is_not_overwritten() {
    let tmp = TempDir::new().unwrap();
    let cfg = spacing_config(&tmp, "taken");
    assert_eq!(qvplab(tmp.path(), &["run", &cfg]).status.code(), Some(0));
    let before = fs::read_to_string(tmp.path().join("taken/report.json")).unwrap();
    let out = qvplab(tmp.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("already exists"));
    assert_eq!(fs::read_to_string(tmp.path().join("taken/report.json")).unwrap(), before);
}

#[test]
fn missing_sigma_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        "experiment = \"spacing-overlap\"\n\n[physics]\ntheta = \"3pi\"\nn_values = [10]\n\n[output]\ndirectory = \"bad\"\n",
    );
    let out = qvplab(tmp.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sigma"), "{err}");
    assert!(!tmp.path().join("bad").exists());
}

#[test]
fn invalid_theta_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let body = SPACING
        .replace("DIR", "t")
        .replace("theta = \"3pi\"", "theta = \"1.5pi\"")
        .replace("theta_grid = [\"2.23pi\", \"2.5pi\", \"3pi\", \"3.5pi\"]\n", "");
    let out = qvplab(tmp.path(), &["run", &write_config(tmp.path(), "t.toml", &body)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("physics.theta"));
}

#[test]
fn tightened_tolerance_fails_the_run() {
    // Lobe positions agree with the clock-time law to round-off, so only a
    // tolerance below round-off forces a failure.
    let tmp = TempDir::new().unwrap();
    let body = r#"
experiment = "tviolation-peaks"

[physics]
sigma = 1.0
theta = "2.23pi"
n_values = [144]

[analysis.tolerances]
position = 1e-17

[output]
directory = "tight"
"#;
    let out = qvplab(tmp.path(), &["run", &write_config(tmp.path(), "tight.toml", body)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL position_"));
    assert!(tmp.path().join("tight/report.json").exists());
}

#[test]
fn boundary_breach_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let body = r#"
experiment = "commuting-limit"

[grid]
dim = 64
extent = 4.0

[physics]
sigma = 1.0
lambda = 0.0
n_values = [16]

[output]
directory = "cramped"
"#;
    let out = qvplab(tmp.path(), &["run", &write_config(tmp.path(), "cramped.toml", body)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn emit_density_writes_normalised_probabilities() {
    let tmp = TempDir::new().unwrap();
    let body = r#"
experiment = "model-match"

[physics]
sigma = 1.0
theta = "2.23pi"
n_values = [144]

[output]
directory = "dens"
"#;
    let out = qvplab(tmp.path(), &["emit-density", &write_config(tmp.path(), "dens.toml", body), "--n", "144"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("dens/density_N144.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,probability"));
    let mut mass = 0.0;
    let mut axis = Vec::new();
    for line in text.lines().skip(1) {
        let (t, p) = line.split_once(',').unwrap();
        axis.push(t.parse::<f64>().unwrap());
        mass += p.parse::<f64>().unwrap();
    }
    // Probabilities are per grid point.
    assert!((mass - 1.0).abs() < 1e-12, "total probability {mass}");
    assert!(axis.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn version_prints_engine() {
    let tmp = TempDir::new().unwrap();
    let out = qvplab(tmp.path(), &["version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("qvp-lab "));
}
