use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dp-submax"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

struct Fixture {
    dir: tempfile::TempDir,
    cov: PathBuf,
    kinst: PathBuf,
    uniform: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let cov = write(dir.path(), "cov.txt", "coverage 4 4\nv1: u1 u2\nv2: u2\nv3: u3\nv4: u4 u1\n");
    let kinst = write(dir.path(), "k.txt", "ktopics 2 4 3\nv1 t1: u1\nv1 t2: u2 u3\nv2 t1: u4\nv3 t2: u1 u4\n");
    let uniform = write(dir.path(), "m.txt", "uniform 2\n");
    Fixture { dir, cov, kinst, uniform }
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn brute_force_reports_ratio_one() {
    let f = fixture();
    let v = json(&run(&["brute-force", "--instance", s(&f.cov), "--matroid", s(&f.uniform)]));
    assert_eq!(v["ratio"], 1.0);
    // {u1, u2} and {u1, u3} both reach three of four right vertices
    assert_eq!(v["opt"], 0.75);
}

#[test]
fn cont_greedy_is_reproducible_and_writes_files() {
    let f = fixture();
    let out = f.dir.path().join("r.json");
    let args = [
        "cont-greedy", "--instance", s(&f.cov), "--matroid", s(&f.uniform), "--eps", "1", "--repeat", "3", "--seed", "7",
        "--with-opt",
    ];
    let a = json(&run(&args));
    let b = json(&run(&args));
    assert_eq!(a["runs"], b["runs"]);
    assert_eq!(a["runs"][1]["seed"], 8);
    assert!(a["privacy_basic"][0].as_f64().unwrap() > 0.0);
    let mut with_out = args.to_vec();
    with_out.extend(["--out", s(&out)]);
    assert!(run(&with_out).status.success());
    let c: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(c["runs"], a["runs"]);
}

#[test]
fn layered_and_mc_modes_run() {
    let f = fixture();
    for extra in [&["--layered", "--mu", "0.5"][..], &["--mode", "mc", "--samples", "50"][..]] {
        let mut args = vec!["cont-greedy", "--instance", s(&f.cov), "--matroid", s(&f.uniform), "--eps", "2"];
        args.extend_from_slice(extra);
        let v = json(&run(&args));
        assert_eq!(v["runs"].as_array().unwrap().len(), 1);
    }
    let v = json(&run(&["layered", "--instance", s(&f.cov), "--matroid", s(&f.uniform), "--argmax"]));
    assert_eq!(v["algorithm"], "layered");
}

#[test]
fn ksub_csv_output() {
    let f = fixture();
    let o = run(&[
        "ksub", "--instance", s(&f.kinst), "--matroid", s(&f.uniform), "--k", "2", "--eps", "1", "--sampled", "--gamma",
        "0.2", "--repeat", "5", "--format", "csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("index,seed,value"));
}

#[test]
fn exit_codes() {
    let f = fixture();
    // input error: topic count mismatch
    let o = run(&["ksub", "--instance", s(&f.kinst), "--matroid", s(&f.uniform), "--k", "3", "--eps", "1"]);
    assert_eq!(o.status.code(), Some(3));
    // parse error carries the path and line
    let bad = write(f.dir.path(), "bad.txt", "uniform 2\nbogus\n");
    let o = run(&["brute-force", "--instance", s(&f.cov), "--matroid", s(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.txt:2"));
    // usage errors are input errors
    assert_eq!(run(&["cont-greedy", "--instance", s(&f.cov)]).status.code(), Some(3));
    // capability error: grid too fine
    let o = run(&["cont-greedy", "--instance", s(&f.cov), "--matroid", s(&f.uniform), "--eps", "1", "--rho", "0.01"]);
    assert_eq!(o.status.code(), Some(2));
    // evaluation budget
    let o = run(&["cont-greedy", "--instance", s(&f.cov), "--matroid", s(&f.uniform), "--eps", "1", "--eval-budget", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn audit_passes_on_small_instances() {
    let f = fixture();
    for (alg, inst) in [("cont-greedy", &f.cov), ("layered", &f.cov), ("ksub", &f.kinst), ("ksub-sampled", &f.kinst)] {
        let v = json(&run(&[
            "audit", "--instance", s(inst), "--matroid", s(&f.uniform), "--algorithm", alg, "--eps", "0.5", "--trials", "3",
            "--index", "1",
        ]));
        assert_eq!(v["passed"], true, "{alg}");
        let per: f64 = v["per_step"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((v["composed"].as_f64().unwrap() - per).abs() < 1e-12);
    }
}

#[test]
fn covering_round_trip() {
    let f = fixture();
    let csv = f.dir.path().join("c.csv");
    let o = run(&["covering", "build", "--instance", s(&f.cov), "--matroid", s(&f.uniform), "--rho", "0.8", "--out", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&run(&[
        "covering", "verify", "--instance", s(&f.cov), "--matroid", s(&f.uniform), "--covering", s(&csv), "--samples", "500",
    ]));
    assert_eq!(v["check"]["passed"], true);
    let e = json(&run(&["covering", "export", "--instance", s(&f.cov), "--covering", s(&csv)]));
    assert_eq!(e["points"].as_array().unwrap().len(), v["points"].as_u64().unwrap() as usize);
    let r = json(&run(&[
        "cont-greedy", "--instance", s(&f.cov), "--matroid", s(&f.uniform), "--argmax", "--covering", s(&csv),
    ]));
    assert_eq!(r["covering_size"], v["points"]);
}

#[test]
fn check_reports_properties() {
    let f = fixture();
    let v = json(&run(&["check", "--instance", s(&f.cov)]));
    assert_eq!(v["monotone"], true);
    assert_eq!(v["submodular"], true);
    let v = json(&run(&["check", "--instance", s(&f.kinst)]));
    assert_eq!(v["k_submodular"], true);
}

#[test]
fn run_accepts_json_configs() {
    let f = fixture();
    let cfg = serde_json::json!({
        "instance": f.kinst, "matroid": f.uniform, "algorithm": "ksub", "epsilon": 1.0, "repeat": 2, "seed": 3
    });
    let path = write(f.dir.path(), "cfg.json", &cfg.to_string());
    let v = json(&run(&["run", "--config", s(&path)]));
    assert_eq!(v["repeat"], 2);
    assert_eq!(v["runs"][0]["seed"], 3);
}

#[test]
fn understated_sensitivity_fails_the_audit() {
    let f = fixture();
    let o = run(&[
        "audit", "--instance", s(&f.kinst), "--matroid", s(&f.uniform), "--algorithm", "ksub", "--eps", "0.5",
        "--sensitivity", "0.001", "--trials", "20",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], false);
}
