use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn covertime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covertime"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const VALID: &str = r#"
scenario_id = "line"
detection_radius = 0.3
n_list = [2, 10]
replicas = 8
seed = 11
[domain]
kind = "torus"
dim = 1
diameter = 1.3
[dynamics]
diffusivity = 1.0
[numerics]
dt = 1e-4
"#;

#[test]
fn empty_config_lists_required_keys_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "empty.toml", "");
    let o = covertime(&["--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for key in [
        "domain",
        "detection_radius",
        "n_list",
        "replicas",
        "seed",
        "dynamics",
    ] {
        assert!(
            err.contains(&format!("`{key}`")),
            "{key} missing from: {err}"
        );
    }
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "c.toml",
        &VALID.replace("[numerics]", "[numerics]\nd_t = 1.0"),
    );
    let o = covertime(&["--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`numerics.d_t`"));
}

#[test]
fn trivial_target_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "c.toml",
        &VALID.replace("detection_radius = 0.3", "detection_radius = 1.5"),
    );
    let out = dir.path().join("out");
    let o = covertime(&["--config", &path, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning:"));
    let moments = fs::read_to_string(out.join("moments.csv")).unwrap();
    assert!(moments.lines().nth(2).unwrap().starts_with("line,2,1,0,0,"));
}

#[test]
fn predict_with_one_searcher_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = covertime(&[
        "--preset",
        "fig2-torus2d",
        "--command",
        "predict",
        "--n-list",
        "1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("N >= 2"));
}

#[test]
fn censoring_aborts_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "c.toml",
        &VALID.replace("dt = 1e-4", "dt = 1e-4\nt_max = 1e-3"),
    );
    let o = covertime(&[
        "--config",
        &path,
        "--out-dir",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("time cap"));
    assert!(!dir.path().join("o/moments.csv").exists());
}

#[test]
fn simulate_writes_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "c.toml", VALID);
    let out = dir.path().join("out");
    let o = covertime(&["--config", &path, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let moments = fs::read_to_string(out.join("moments.csv")).unwrap();
    let mut lines = moments.lines();
    assert!(lines.next().unwrap().contains("master_seed=11"));
    assert_eq!(
        lines.next().unwrap(),
        "scenario_id,N,m,estimate,stderr,prediction,ratio,replicas,seed"
    );
    assert_eq!(lines.count(), 6);
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 2 + 16);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seeds"][0], 11);
    assert_eq!(manifest["scenarios"][0]["detection_radius"], 0.3);
}

#[test]
fn thread_count_does_not_change_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "c.toml", VALID);
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = covertime(&[
            "--config",
            &path,
            "--threads",
            threads,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push((
            fs::read(out.join("moments.csv")).unwrap(),
            fs::read(out.join("samples.csv")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn lemma_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = covertime(&[
        "--command",
        "lemma-check",
        "--cases",
        "200",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS"));
    assert_eq!(
        fs::read_to_string(dir.path().join("lemma.csv"))
            .unwrap()
            .lines()
            .count(),
        202
    );
}

#[test]
fn convergence_study_halves_steps() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "c.toml", VALID);
    let out = dir.path().join("out");
    let o = covertime(&[
        "--config",
        &path,
        "--command",
        "convergence-study",
        "--n-list",
        "10",
        "--levels",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("convergence.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    let dt0: f64 = rows[0][4].parse().unwrap();
    let dt1: f64 = rows[1][4].parse().unwrap();
    assert_eq!(dt0, 2.0 * dt1);
}
