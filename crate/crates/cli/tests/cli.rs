use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"{
    "model": {
        "claims": [{"type": "pareto", "alpha": 1.0}, {"type": "pareto", "alpha": 1.0}],
        "inter_arrival": {"type": "exponential", "rate": 1.0},
        "dependence": {"type": "frank_tri", "gamma": 1.0},
        "r": 0.05, "horizon": 2.0, "seed": 11, "n_samples": 20000
    },
    "grids": {"t": [1.0, 2.0], "x": [1.0, 4.0]},
    "window": [2.0, 2.0]
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn risklab(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risklab")).args(args).arg("--config").arg(config).output().unwrap()
}

#[test]
fn simulate_writes_csv_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.json", CONFIG);
    let out = risklab(&["simulate"], &config);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("t,x1,x2,d1,d2,r,target,estimate"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn reruns_are_byte_identical_and_seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.json", CONFIG);
    let a = risklab(&["simulate"], &config).stdout;
    let b = risklab(&["simulate"], &config).stdout;
    assert_eq!(a, b);
    let c = risklab(&["simulate", "--seed", "12"], &config).stdout;
    assert_ne!(a, c);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.json", CONFIG);
    let target = dir.path().join("r.csv");
    let out = risklab(&["renewal", "--out", target.to_str().unwrap()], &config);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(target).unwrap();
    assert!(text.starts_with("t,lambda,tilted_h1,tilted_h2,tilted_g"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        CONFIG.replace("\"alpha\": 1.0}, {", "\"alpha\": -1.0}, {"),
        CONFIG.replace("\"seed\": 11", "\"seed\": 11, \"bogus\": 1"),
        CONFIG.replace("\"t\": [1.0, 2.0]", "\"t\": [1.0, 3.0]"),
        "{ not json".to_string(),
    ];
    for (k, text) in cases.iter().enumerate() {
        let config = write(dir.path(), &format!("bad{k}.json"), text);
        let out = risklab(&["simulate"], &config);
        assert_eq!(out.status.code(), Some(2), "case {k}");
        assert!(!out.stderr.is_empty());
    }
    let missing = risklab(&["simulate"], &dir.path().join("absent.json"));
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn missing_grids_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG.replace(r#""grids": {"t": [1.0, 2.0], "x": [1.0, 4.0]},"#, "");
    let config = write(dir.path(), "c.json", &text);
    assert_eq!(risklab(&["compare"], &config).status.code(), Some(2));
    assert_eq!(risklab(&["counterexample"], &config).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.json", CONFIG);
    let target = dir.path().join("missing-dir").join("out.csv");
    let out = risklab(&["renewal", "--out", target.to_str().unwrap()], &config);
    assert_eq!(out.status.code(), Some(3));
}
