use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lbb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbb")).current_dir(dir).args(args).output().expect("spawn lbb")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = lbb(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn err_json(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = lbb(dir, args);
    let code = out.status.code().unwrap();
    (code, serde_json::from_slice(&out.stderr).unwrap_or(Value::Null))
}

fn fixture(dim: usize, items: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dim.to_string();
    let n = items.to_string();
    ok_json(dir.path(), &["make-toy", "--kind", "byte", "--dim", &d, "--output", "m.lbbw"]);
    ok_json(dir.path(), &["make-toy", "--kind", "dequant", "--dim", &d, "--couplings", "2", "--output", "q.lbbw"]);
    ok_json(dir.path(), &["make-data", "--dim", &d, "--items", &n, "--seed", "3", "--output", "d.lbbt"]);
    dir
}

#[test]
fn round_trip_is_byte_identical() {
    let dir = fixture(16, 40);
    let p = dir.path();
    for extra in [&[][..], &["--dequant", "q.lbbw"][..]] {
        let mut c = vec!["compress", "--model", "m.lbbw", "--input", "d.lbbt", "--output", "a.lbba", "--kx", "24", "--sigma", "2^-12"];
        c.extend_from_slice(extra);
        ok_json(p, &c);
        let mut d = vec!["decompress", "--model", "m.lbbw", "--input", "a.lbba", "--output", "r.lbbt"];
        d.extend_from_slice(extra);
        let r = ok_json(p, &d);
        assert_eq!(r["reservoir_verified"], true);
        assert_eq!(std::fs::read(p.join("d.lbbt")).unwrap(), std::fs::read(p.join("r.lbbt")).unwrap());
    }
}

#[test]
fn defaults_are_reported() {
    let dir = fixture(8, 5);
    let r = ok_json(dir.path(), &["compress", "--model", "m.lbbw", "--input", "d.lbbt", "--output", "a.lbba"]);
    assert_eq!(r["params"]["kx"], 32);
    assert_eq!(r["params"]["kz"], 32);
    assert_eq!(r["params"]["sigma_log2"], -14.0);
    assert_eq!(r["params"]["table_bits"], 24);
    assert_eq!(r["net_bits_per_dim"].as_array().unwrap().len(), 5);
}

#[test]
fn mean_net_bits_track_the_bound() {
    let dir = fixture(16, 60);
    let p = dir.path();
    let c = ok_json(p, &["compress", "--model", "m.lbbw", "--input", "d.lbbt", "--output", "a.lbba", "--kx", "24", "--sigma", "2^-12"]);
    let e = ok_json(p, &["eval", "--model", "m.lbbw", "--input", "d.lbbt", "--samples", "200"]);
    let net = c["mean_net_bits_per_dim"].as_f64().unwrap();
    let bound = e["bits_per_dim"].as_f64().unwrap();
    assert!((net - bound).abs() < 0.05, "net {net} bound {bound}");
}

#[test]
fn archives_are_deterministic_across_threads() {
    let dir = fixture(8, 30);
    let p = dir.path();
    let base = ["compress", "--model", "m.lbbw", "--input", "d.lbbt", "--kx", "20", "--sigma", "2^-10", "--seed", "9"];
    let mut outs = Vec::new();
    for (i, t) in ["1", "3", "8"].iter().enumerate() {
        let name = format!("a{i}.lbba");
        let mut args = base.to_vec();
        args.extend_from_slice(&["--batch-threads", t, "--output", &name]);
        ok_json(p, &args);
        outs.push(std::fs::read(p.join(&name)).unwrap());
    }
    assert!(outs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn wrong_model_is_rejected() {
    let dir = fixture(8, 4);
    let p = dir.path();
    ok_json(p, &["compress", "--model", "m.lbbw", "--input", "d.lbbt", "--output", "a.lbba"]);
    ok_json(p, &["make-toy", "--kind", "byte", "--dim", "8", "--seed", "1", "--output", "o.lbbw"]);
    let (code, e) = err_json(p, &["decompress", "--model", "o.lbbw", "--input", "a.lbba", "--output", "r.lbbt"]);
    assert_eq!(code, 2);
    assert_eq!(e["error"], "HashMismatch");
}

#[test]
fn tampered_archive_is_rejected() {
    let dir = fixture(8, 6);
    let p = dir.path();
    ok_json(p, &["compress", "--model", "m.lbbw", "--input", "d.lbbt", "--output", "a.lbba", "--kx", "16", "--sigma", "2^-8"]);
    let mut bytes = std::fs::read(p.join("a.lbba")).unwrap();
    let at = bytes.len() - 9;
    bytes[at] ^= 0x10;
    std::fs::write(p.join("t.lbba"), &bytes).unwrap();
    let (code, e) = err_json(p, &["decompress", "--model", "m.lbbw", "--input", "t.lbba", "--output", "r.lbbt"]);
    assert_eq!(code, 2);
    assert_eq!(e["error"], "CorruptArchive");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lbb(dir.path(), &["compress", "--bogus"]).status.code(), Some(1));
    assert_eq!(lbb(dir.path(), &["bench", "--sigma", "2^x"]).status.code(), Some(1));
    assert_eq!(lbb(dir.path(), &["bench", "--sigma", "-1"]).status.code(), Some(1));
    assert_eq!(lbb(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn flag_matrix_round_trips() {
    let dir = fixture(8, 6);
    let p = dir.path();
    let cases: &[&[&str]] = &[
        &["--kx", "12", "--sigma", "2^-6"],
        &["--kx", "20", "--kz", "20", "--sigma", "0.001"],
        &["--kx", "28", "--sigma", "2^-16", "--table-bits", "20"],
        &["--kx", "24", "--sigma", "2^-12", "--support", "10", "--aux-words", "64", "--seed", "5"],
    ];
    for case in cases {
        let mut c = vec!["compress", "--model", "m.lbbw", "--input", "d.lbbt", "--output", "a.lbba"];
        c.extend_from_slice(case);
        ok_json(p, &c);
        ok_json(p, &["decompress", "--model", "m.lbbw", "--input", "a.lbba", "--output", "r.lbbt"]);
        assert_eq!(std::fs::read(p.join("d.lbbt")).unwrap(), std::fs::read(p.join("r.lbbt")).unwrap(), "{case:?}");
    }
    let (code, e) = err_json(p, &["compress", "--model", "m.lbbw", "--input", "d.lbbt", "--output", "a.lbba", "--kx", "24", "--kz", "20"]);
    assert_eq!(code, 2);
    assert_eq!(e["error"], "InvalidParams");
}

#[test]
fn sweep_writes_csv() {
    let dir = fixture(8, 10);
    let p = dir.path();
    let r = ok_json(p, &[
        "sweep", "--model", "m.lbbw", "--input", "d.lbbt", "--output", "s.csv",
        "--ks", "12,20", "--sigmas", "2^-8,2^-12", "--seeds", "2", "--items", "3",
    ]);
    assert_eq!(r["cells"], 4);
    let csv = std::fs::read_to_string(p.join("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,sigma,net_bits_per_dim,net_std,aux_bits_per_dim,aux_std,status");
    assert_eq!(lines.len(), 5);
}

#[test]
fn bench_and_selftest_report() {
    let dir = tempfile::tempdir().unwrap();
    let b = ok_json(dir.path(), &["bench", "--dims", "4,8", "--reps", "2"]);
    assert_eq!(b["rows"].as_array().unwrap().len(), 4);
    let s = ok_json(dir.path(), &["selftest"]);
    assert_eq!(s["ok"], true);
}
