use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hamreduce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamreduce"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = hamreduce(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

/// Deterministic 3-CNF with `m` clauses on `n` variables.
fn three_cnf(n: usize, m: usize) -> String {
    let mut s = format!("p cnf {n} {m}\n");
    for i in 0..m {
        let a = i % n + 1;
        let b = (i + 1) % n + 1;
        let c = (i + 3) % n + 1;
        let sign = |v: usize, k: usize| if (i >> k) & 1 == 1 { -(v as i64) } else { v as i64 };
        s += &format!("{} {} {} 0\n", sign(a, 0), sign(b, 1), sign(c, 2));
    }
    s
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn qpf_ideal_on_zero_hamiltonian_is_exactly_half() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "zero.json", r#"{"total_qubits":4,"locality":1,"terms":[]}"#);
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"seed":1,"dense_cap":12,"iterative_cap":24,"a_const":2.0,"b_const":0.125,
            "qpf":{"c":1,"num_bins":null,"eps_bin_fraction":0.125,"eta_ee":0.0001,"ell_ee":null,
                   "reps_ee":null,"ell_count":null,"reps_count":9,"perturb":false}}"#,
    );
    let v = ok_json(&["--config", &cfg, "qpf", "--spec", &spec, "--beta", "1", "--delta", "0.9", "--backend", "ideal"]);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["result"]["ratio"].as_f64(), Some(0.5));
    assert_eq!(v["result"]["exact_Z"].as_f64(), Some(16.0));
    assert_eq!(v["config"]["seed"], 1);
}

#[test]
fn clock_path_n4_lists_six_subsets() {
    let v = ok_json(&["clock-path", "--n", "4", "--d", "2", "--two-step"]);
    let path = v["result"]["path"].as_array().unwrap();
    assert_eq!(path.len(), 6);
    assert_eq!(v["result"]["valid"], true);
    let mut seen: Vec<Vec<u64>> = path
        .iter()
        .map(|s| s.as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect())
        .collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 6);
}

#[test]
fn gatecount_within_certificate() {
    let dir = TempDir::new().unwrap();
    let cnf = write(&dir, "f.cnf", &three_cnf(6, 10));
    let v = ok_json(&["gatecount", "--input", &cnf]);
    let r = &v["result"];
    assert_eq!(r["num_vars"], 6);
    assert_eq!(r["num_clauses"], 10);
    assert!(r["elementary"].as_u64().unwrap() <= r["certificate"].as_u64().unwrap());
    assert_eq!(r["within_certificate"], true);
}

#[test]
fn reduce_trivial_then_spectrum() {
    let dir = TempDir::new().unwrap();
    // x1 ∧ ¬x1 as two unit clauses: exactly one is always violated
    let cnf = write(&dir, "f.cnf", "p cnf 2 3\n1 0\n-1 0\n1 2 0\n");
    let out = dir.path().join("spec.json");
    let v = ok_json(&["reduce", "--input", &cnf, "--flavor", "trivial", "--out", path_str(&out)]);
    assert_eq!(v["result"]["locality"], 2);
    assert_eq!(v["result"]["qubits"], 2);
    let s = ok_json(&["spectrum", "--spec", path_str(&out), "--beta", "1"]);
    assert_eq!(s["result"]["lambda"].as_f64(), Some(1.0));
    assert_eq!(s["input_sha256"], {
        let art: Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
        assert_eq!(art["schema_version"], 1);
        s["input_sha256"].clone()
    });

    let csv = hamreduce(&["spectrum", "--spec", path_str(&out), "--csv"]);
    assert!(csv.status.success());
    let text = String::from_utf8(csv.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "index,eigenvalue");
    assert_eq!(rows.len(), 1 + 4);
}

#[test]
fn reduce_five_and_three_local_localities() {
    let dir = TempDir::new().unwrap();
    let cnf = write(&dir, "f.cnf", "p cnf 2 1\n1 2 0\n");
    for (flavor, loc) in [("five_local", 5), ("three_local", 3)] {
        let out = dir.path().join(format!("{flavor}.json"));
        let v = ok_json(&["reduce", "--input", &cnf, "--flavor", flavor, "--out", path_str(&out)]);
        let r = &v["result"];
        assert_eq!(r["locality"], loc, "{flavor}");
        let n_anc = r["gate_counts"]["qubits"].as_u64().unwrap();
        assert_eq!(r["qubits"].as_u64().unwrap(), n_anc + r["clock_qubits"].as_u64().unwrap());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        &dir,
        "h.json",
        r#"{"total_qubits":4,"locality":1,"terms":[]}"#,
    );
    let args = ["qpf", "--spec", &spec, "--beta", "2", "--delta", "0.8", "--seed", "7"];
    let a = hamreduce(&args);
    let b = hamreduce(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let cnf = write(&dir, "f.cnf", "p cnf 3 2\n1 -2 0\n2 3 0\n");
    let o1 = dir.path().join("a.json");
    let o2 = dir.path().join("b.json");
    ok_json(&["reduce", "--input", &cnf, "--flavor", "five_local", "--out", path_str(&o1)]);
    ok_json(&["reduce", "--input", &cnf, "--flavor", "five_local", "--out", path_str(&o2)]);
    assert_eq!(fs::read(&o1).unwrap(), fs::read(&o2).unwrap());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.cnf", "p cnf 2 1\n1 5 0\n");
    let out = dir.path().join("x.json");
    assert_eq!(hamreduce(&["reduce", "--input", &bad, "--flavor", "trivial", "--out", path_str(&out)]).status.code(), Some(2));

    let big = write(&dir, "big.json", r#"{"total_qubits":30,"locality":1,"terms":[]}"#);
    assert_eq!(hamreduce(&["spectrum", "--spec", &big]).status.code(), Some(3));
    let wide = write(&dir, "wide.cnf", &three_cnf(4, 5));
    assert_eq!(
        hamreduce(&["reduce", "--input", &wide, "--flavor", "five_local", "--out", path_str(&out)]).status.code(),
        Some(3)
    );

    // ‖H‖ = 1 breaks the [0, 1) normalization the estimator assumes
    let cnf = write(&dir, "f.cnf", "p cnf 3 1\n1 0\n");
    let spec = dir.path().join("s.json");
    ok_json(&["reduce", "--input", &cnf, "--flavor", "trivial", "--out", path_str(&spec)]);
    assert_eq!(
        hamreduce(&["qpf", "--spec", path_str(&spec), "--beta", "1", "--delta", "0.9"]).status.code(),
        Some(4)
    );
    // δ below ½ + 1/n
    let zero = write(&dir, "z.json", r#"{"total_qubits":4,"locality":1,"terms":[]}"#);
    assert_eq!(hamreduce(&["qpf", "--spec", &zero, "--beta", "1", "--delta", "0.6"]).status.code(), Some(4));
}
