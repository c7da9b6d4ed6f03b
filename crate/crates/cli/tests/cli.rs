use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn qftscat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qftscat")).args(args).env("QFTSCAT_LOG", "error").output().unwrap()
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, Value) {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = qftscat(&args);
    let code = o.status.code().unwrap();
    let v = fs::read(out.join("result.json")).map(|b| serde_json::from_slice(&b).unwrap()).unwrap_or(Value::Null);
    (code, v)
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn three_leg_amplitude_has_no_real_part() {
    let out = scratch("amp3");
    let (code, v) = run("amplitude", &configs().join("amplitude_n3.json"), &out, &[]);
    assert_eq!(code, 0);
    assert_eq!(v["command"], "amplitude");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64);
    let z = &v["result"]["value"];
    assert!(z[0].as_f64().unwrap().abs() < 1e-12);
    assert!(out.join("amplitude.csv").exists());
}

#[test]
fn two_to_two_amplitude_is_imaginary_and_self_consistent() {
    let out = scratch("amp4");
    let (code, v) = run("amplitude", &configs().join("amplitude_2to2.json"), &out, &[]);
    assert_eq!(code, 0);
    let r = &v["result"];
    let (re, im) = (r["value"][0].as_f64().unwrap(), r["value"][1].as_f64().unwrap());
    assert!(im > 0.0 && re.abs() < 1e-10 * im);
    assert!(r["refinement_rel_diff"].as_f64().unwrap() < 5e-3);
    assert!(r["two_path_rel_diff"].as_f64().unwrap() < 5e-3);
    let csv = fs::read_to_string(out.join("amplitude.csv")).unwrap();
    assert!(csv.starts_with("path,resolution,value_re,value_im,est_error\n"));
}

#[test]
fn malformed_config_exits_with_one() {
    let dir = scratch("bad");
    let p = write(&dir, "bad.json", "{\n  \"model\": {\"d\": 2, \"m\": 1.0,\n}\n");
    let o = qftscat(&["amplitude", "--config", p.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));

    let p = write(&dir, "unknown.json", r#"{"model": {"d": 2, "m": 1.0, "m0": 1.0, "eps_phi": 0.5}, "colour": 1}"#);
    let o = qftscat(&["amplitude", "--config", p.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let p = write(&dir, "physics.json", r#"{"model": {"d": 2, "m": 1.0, "m0": 1.0, "eps_phi": 2.0}}"#);
    assert_eq!(run("amplitude", &p, &dir, &[]).0, 1);

    let p = write(&dir, "nosection.json", r#"{"model": {"d": 2, "m": 1.0, "m0": 1.0, "eps_phi": 0.5}}"#);
    let o = qftscat(&["gram", "--config", p.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gram"));
    assert!(!dir.join("result.json").exists());
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(qftscat(&["--help"]).status.code(), Some(0));
    assert_eq!(qftscat(&["--version"]).status.code(), Some(0));
    assert_eq!(qftscat(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qftscat(&["fit", "--threads", "x"]).status.code(), Some(1));
    assert_eq!(qftscat(&["fit"]).status.code(), Some(1));
}

#[test]
fn short_convergence_window_fails_with_two() {
    let out = scratch("short");
    let (code, v) = run("converge", &configs().join("converge_short.json"), &out, &[]);
    assert_eq!(code, 2);
    assert_eq!(v["pass"], false);
    assert!(v["result"]["final_relative_error"].as_f64().unwrap() > 1e-2);
    let csv = fs::read_to_string(out.join("converge.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn three_leg_fit_reports_an_empty_region() {
    let out = scratch("fit3");
    let (code, v) = run("fit", &configs().join("fit_exp_q3.json"), &out, &[]);
    assert_eq!(code, 2);
    assert_eq!(v["result"]["sample"]["status"]["status"], "empty");
    assert_eq!(v["result"]["report"], Value::Null);
}

#[test]
fn tabulated_fit_recovers_the_polynomial() {
    let out = scratch("table");
    let (code, v) = run("fit", &configs().join("fit_table.json"), &out, &[]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["report"]["degree_used"], 2);
    let p: Value = serde_json::from_slice(&fs::read(out.join("polynomial.json")).unwrap()).unwrap();
    assert_eq!(p["n"], 3);
}

#[test]
fn demos_pass() {
    for (cmd, cfg) in [("truncate-demo", "truncate_demo.json"), ("pvdemo", "pvdemo.json"), ("gram", "gram_in.json"), ("gram", "gram_loc.json")] {
        let out = scratch(&format!("demo_{cfg}"));
        let (code, v) = run(cmd, &configs().join(cfg), &out, &[]);
        assert_eq!(code, 0, "{cmd} {cfg}");
        assert_eq!(v["pass"], true);
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap()).map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())).collect();
    v.sort();
    v
}

#[test]
fn outputs_are_byte_identical() {
    let cfg = configs().join("fit_exp_q4.json");
    let (a, b, c) = (scratch("rep_a"), scratch("rep_b"), scratch("rep_c"));
    assert_eq!(run("fit", &cfg, &a, &[]).0, 0);
    assert_eq!(run("fit", &cfg, &b, &["--threads", "2"]).0, 0);
    let fa = files(&a);
    assert_eq!(fa.len(), 3);
    assert_eq!(fa, files(&b));
    let (_, v) = run("fit", &cfg, &c, &["--seed", "7"]);
    assert_eq!(v["seed"], 7);
    assert_ne!(fa[2].1, files(&c)[2].1);
}
