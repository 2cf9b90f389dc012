use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn qgraph(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qgraph"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(out: &Path, command: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{command}.json"))).unwrap()).unwrap()
}

#[test]
fn spectrum_csv_lists_squares() {
    let dir = tempfile::tempdir().unwrap();
    let o = qgraph(&["spectrum", "--format", "both"], &config("interval_dirichlet_spectrum.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lambda,multiplicity,residual"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    for (row, n) in rows.iter().zip([1.0, 2.0, 3.0]) {
        assert!((row[0] - n * n).abs() < 1e-8);
        assert_eq!(row[1], 1.0);
        assert!(row[2] < 1e-8);
    }
}

#[test]
fn robin_box_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = qgraph(&["box"], &config("robin_box.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "box");
    for key in ["config", "command", "result", "pass", "crossings", "certificates"] {
        assert!(r.get(key).is_some(), "missing key {key}");
    }
    assert_eq!(r["command"], "box");
    assert_eq!(r["pass"], true);
    assert_eq!(r["result"]["spectral_flow"]["flow"], 1);
    assert_eq!(r["result"]["mas_upsilon"], 1);
    assert_eq!(r["config"]["numerics"]["tol_eig"], 1e-8);
    assert!(!dir.path().join("box.csv").exists());
}

#[test]
fn rank_deficient_check_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = qgraph(&["check"], &config("rank_deficient_check.json"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rank"));
    assert_eq!(report(dir.path(), "check")["pass"], false);
}

#[test]
fn complex_pair_passes_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = qgraph(&["check", "--format", "csv"], &config("complex_pair_check.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("check.csv")).unwrap();
    assert!(csv.starts_with("quantity,value\nrank,2\n"));
}

#[test]
fn reports_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = qgraph(&["maslov", "--format", "both"], &config("robin_maslov.json"), dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["maslov.json", "maslov.csv"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap());
    }
    assert_eq!(report(a.path(), "maslov")["result"]["index"], -1);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"graph": {"builder": "interval", "length": 1}, "boundary": {"kind": "dirichlet"}, "extra": 1}"#,
    )
    .unwrap();
    assert_eq!(qgraph(&["spectrum"], &bad, dir.path()).status.code(), Some(2));

    let o = qgraph(&["flow"], &config("robin_box.json"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'box'"));

    let o = qgraph(&["spectrum", "--tol-eig", "0.5"], &config("interval_dirichlet_spectrum.json"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tol_eig"));
}

#[test]
fn unstable_count_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coarse.json");
    fs::write(
        &path,
        r#"{"graph": {"builder": "interval", "length": 3.141592653589793},
            "boundary": {"kind": "dirichlet"},
            "parameters": {"window": [-0.5, 10.0]},
            "numerics": {"max_halvings": 0}}"#,
    )
    .unwrap();
    let o = qgraph(&["spectrum"], &path, dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stabilize"));
}

#[test]
fn delta_star_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, file) in [
        ("flow", "delta_star_flow.json"),
        ("hadamard", "delta_star_hadamard.json"),
        ("interlace", "delta_star_interlace.json"),
    ] {
        let o = qgraph(&[cmd, "--format", "both"], &config(file), dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(report(dir.path(), cmd)["pass"], true);
    }
    assert_eq!(report(dir.path(), "flow")["result"]["flow"], 1);
    let h = report(dir.path(), "hadamard");
    assert_eq!(h["result"]["vertex_power_match"], "squared");
    let i = report(dir.path(), "interlace");
    assert_eq!(i["result"]["probes"].as_array().unwrap().len(), 21);
}
