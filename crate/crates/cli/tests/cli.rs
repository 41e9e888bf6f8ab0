use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tbnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbnn")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = tbnn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn sample_sheaf_spectrum_filter_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let points = dir.path().join("torus.csv");
    let sheaf = dir.path().join("sheaf.json");
    let spectrum = dir.path().join("spectrum.csv");
    ok(&["sample", "--manifold", "torus", "--expected-n", "60", "--seed", "3", "--out", s(&points)]);
    let header = std::fs::read_to_string(&points).unwrap();
    assert!(header.starts_with("x1,x2,x3"), "{header}");
    ok(&["sheaf", "--points", s(&points), "--d-hat", "2", "--out", s(&sheaf)]);
    ok(&["spectrum", "--sheaf", s(&sheaf), "--count", "5", "--taps", "0.5,-0.25", "--out", s(&spectrum)]);
    let text = std::fs::read_to_string(&spectrum).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,lambda,response");
    assert_eq!(lines.len(), 6);
    for line in &lines[1..] {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let expected = 0.5 - 0.25 * (-cols[1]).exp();
        assert!((cols[2] - expected).abs() < 1e-12);
    }

    // filter an all-ones signal with the identity tap and read it back unchanged
    let artifact: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sheaf).unwrap()).unwrap();
    let n = artifact["n"].as_u64().unwrap() as usize;
    let mut signal = String::from("node,component,f1\n");
    for i in 0..n {
        for c in 0..2 {
            signal.push_str(&format!("{i},{c},1.0\n"));
        }
    }
    let sig = dir.path().join("signal.csv");
    let filtered = dir.path().join("filtered.csv");
    std::fs::write(&sig, signal).unwrap();
    ok(&["filter", "--sheaf", s(&sheaf), "--signal", s(&sig), "--taps", "1", "--out", s(&filtered)]);
    let out = std::fs::read_to_string(&filtered).unwrap();
    assert!(out.starts_with("node,component,f1"));
    for line in out.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(v, 1.0);
    }
}

#[test]
fn run_converge_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let stdout = ok(&[
        "run",
        "converge",
        "--config",
        s(&configs().join("converge.conf")),
        "--seeds",
        "0..1",
        "--set",
        "converge_ns=60,120",
        "--set",
        "converge_eps=0.5,0.35",
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("median_lambda1_n60"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "converge");
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("mean,")));
    assert!(std::fs::read_to_string(out.join("config.txt")).unwrap().contains("kind = converge"));
}

#[test]
fn bundled_configs_parse() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        tbnn_core::experiments::ExperimentConfig::parse(&text, None)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn unknown_kind_is_rejected_with_the_valid_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = tbnn(&["run", "teleport", "--out", s(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for k in ["denoise-torus", "reconstruct-wind", "forecast-wind", "classify", "converge"] {
        assert!(err.contains(k), "{err}");
    }
}

#[test]
fn wind_run_without_data_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = tbnn(&["run", "reconstruct-wind", "--seeds", "0", "--out", s(dir.path())]);
    assert!(!out.status.success());
}
