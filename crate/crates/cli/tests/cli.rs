use std::path::Path;
use std::process::{Command, Output};

use lcusim::run::{ResultRecord, RECORD_FILE};

fn lcusim(args: &[&str], config: &Path, env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lcusim"));
    cmd.args(args).arg("--config").arg(config).env_remove("LCUSIM_OUT");
    if let Some(d) = env_out {
        cmd.env("LCUSIM_OUT", d);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn record(dir: &Path) -> ResultRecord {
    serde_json::from_str(&std::fs::read_to_string(dir.join(RECORD_FILE)).unwrap()).unwrap()
}

#[test]
fn invalid_config_exits_2_and_lists_every_issue() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.json", r#"{"parameters": {"cases": [{"alpha": 1.5, "beta": -1}], "steps": "x"}}"#);
    let out = lcusim(&["szegedy"], &cfg, None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for path in ["parameters.cases[0].alpha", "parameters.cases[0].beta", "parameters.steps"] {
        assert!(err.contains(path), "{err}");
    }
}

#[test]
fn missing_config_file_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lcusim(&["qaoa"], &tmp.path().join("nope.json"), None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn command_mismatch_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"command": "qaoa", "parameters": {"csp": 1}}"#);
    let out = lcusim(&["szegedy", "--out", tmp.path().join("o").to_str().unwrap()], &cfg, None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"parameters": {"csp": 2}}"#);
    let blocker = write(tmp.path(), "file", "");
    let out = lcusim(&["qaoa", "--out", blocker.join("sub").to_str().unwrap()], &cfg, None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_dir_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("env");
    let cfg = write(tmp.path(), "c.json", r#"{"parameters": {"csp": 1}}"#);
    assert!(lcusim(&["qaoa"], &cfg, Some(&env_dir)).status.success());
    assert!(env_dir.join("grid.csv").exists());

    let cfg_dir = tmp.path().join("cfg");
    let text = format!(r#"{{"output_dir": {:?}, "parameters": {{"csp": 1}}}}"#, cfg_dir.to_str().unwrap());
    let cfg2 = write(tmp.path(), "c2.json", &text);
    assert!(lcusim(&["qaoa"], &cfg2, Some(&env_dir)).status.success());
    assert!(cfg_dir.join("grid.csv").exists());

    let flag_dir = tmp.path().join("flag");
    assert!(lcusim(&["qaoa", "--out", flag_dir.to_str().unwrap()], &cfg2, Some(&env_dir)).status.success());
    assert!(flag_dir.join("grid.csv").exists());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"seed": 1, "parameters": {"random": 4}}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(lcusim(&["decompose", "--out", a.to_str().unwrap()], &cfg, None).status.success());
    assert!(lcusim(&["decompose", "--out", b.to_str().unwrap(), "--seed", "2"], &cfg, None).status.success());
    let (ra, rb) = (record(&a), record(&b));
    assert_eq!((ra.seed, rb.seed), (1, 2));
    assert_ne!(ra.config_hash, rb.config_hash);
    assert_ne!(std::fs::read(a.join("decompose.csv")).unwrap(), std::fs::read(b.join("decompose.csv")).unwrap());
}

#[test]
fn outputs_carry_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"parameters": {"gate": "CZ", "resamples": 3}}"#);
    let out = tmp.path().join("o");
    assert!(lcusim(&["qpt", "--out", out.to_str().unwrap(), "--parallel", "4"], &cfg, None).status.success());
    let rec = record(&out);
    for name in rec.files.iter().filter(|f| *f != RECORD_FILE) {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        assert!(text.contains(&rec.config_hash), "{name}");
    }
    assert!(rec.metrics["process_fidelity"].as_f64().unwrap() > 0.999);
    assert!(rec.task_seeds.contains_key("qpt/mc"));
}
