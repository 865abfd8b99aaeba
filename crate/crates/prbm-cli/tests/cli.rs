use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn prbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prbm")).args(args).output().expect("spawn prbm")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("prbm-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn manifest(path: &std::path::Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn absorption_probability_prints_the_bare_value() {
    let o = prbm(&["halfspace", "--prob", "--d", "2", "--ratio", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    let v: f64 = text.trim().parse().unwrap();
    assert!((v - 0.4521).abs() < 5e-4, "{v}");
    // manifest on stderr without --out
    let m: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["halfspace"]["ratio"], 0.5);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = prbm(&["simulate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--no-such-flag") && err.contains("Usage"), "{err}");
    assert_eq!(prbm(&["spectrum", "--domain", "torus"]).status.code(), Some(2));
    assert_eq!(prbm(&[]).status.code(), Some(2));
}

#[test]
fn domain_error_exits_one_and_still_writes_the_manifest() {
    let dir = scratch("domain");
    let out = dir.join("p.csv");
    let o = prbm(&["halfspace", "--prob", "--ratio=-1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    let m = manifest(&dir.join("p.csv.manifest.json"));
    assert_eq!(m["status"], "error");
    assert!(m["error"].as_str().unwrap().contains("invalid parameter"));
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn payload_is_byte_identical_across_runs_and_thread_counts() {
    let dir = scratch("determinism");
    let run = |name: &str, threads: &str| {
        let out = dir.join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_prbm"))
            .env("PRBM_THREADS", threads)
            .args(["simulate", "--walkers", "4000", "--seed", "11", "--bins", "4", "--a", "0.05", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(&out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "1");
    let c = run("c.csv", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(String::from_utf8(a).unwrap().starts_with("bin_lo,bin_hi,count,fraction,stderr\n"));
    let m = manifest(&dir.join("c.csv.manifest.json"));
    assert_eq!(m["threads"], 3);
    assert!(m["result"]["partition_holds"].as_bool().unwrap());
    assert!(m["result"]["censored"].is_u64());
    let other = Command::new(env!("CARGO_BIN_EXE_prbm"))
        .args(["simulate", "--walkers", "4000", "--seed", "12", "--bins", "4", "--a", "0.05"])
        .output()
        .unwrap();
    assert_ne!(stdout(&other).into_bytes(), std::fs::read(dir.join("a.csv")).unwrap());
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_prbm")).env("PRBM_THREADS", "zero").args(["validate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_fills_defaults_and_flags_win() {
    let dir = scratch("config");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"halfspace": {"prob": true, "d": 3, "ratio": 1.0}}"#).unwrap();
    let o = prbm(&["halfspace", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 0.4611).abs() < 5e-4, "{v}");
    let o = prbm(&["halfspace", "--config", cfg.to_str().unwrap(), "--d", "2", "--ratio", "0.5"]);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 0.4521).abs() < 5e-4, "{v}");
    std::fs::write(&cfg, "not json").unwrap();
    assert_eq!(prbm(&["halfspace", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn spectrum_tables() {
    let o = prbm(&["spectrum", "--domain", "ball", "--max-index", "2"]);
    assert_eq!(stdout(&o), "index,mu,degeneracy\n0,0,1\n1,1,3\n2,2,5\n");
    let o = prbm(&["spectrum", "--domain", "annulus", "--outer-radius", "2.718281828459045", "--max-index", "0"]);
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let mu: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((mu - 1.0).abs() < 1e-12);
}

#[test]
fn impedance_grid_is_log_spaced_and_exact_at_decades() {
    let o = prbm(&["impedance", "--lambda-min", "0.01", "--lambda-max", "100", "--points", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lambdas: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(lambdas, vec![0.01, 0.1, 1.0, 10.0, 100.0]);
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[3] / v[4] - 1.0).abs() < 1e-9, "{line}");
    }
}

fn lattice_file(dir: &std::path::Path) -> PathBuf {
    let path = dir.join("box16.json");
    std::fs::write(&path, prbm::fixtures::box16().unwrap().to_json().unwrap()).unwrap();
    path
}

#[test]
fn dtn_grid_without_destination_is_a_usage_error() {
    assert_eq!(prbm(&["dtn", "--fixture", "box16", "--lambda-grid", "1"]).status.code(), Some(2));
}

#[test]
fn halfspace_table_has_a_metadata_line() {
    let o = prbm(&["halfspace", "--table", "kernel", "--d", "3", "--points", "3", "--max", "2"]);
    let text = stdout(&o);
    let mut lines = text.lines();
    let meta: Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(meta["table"], "kernel");
    assert_eq!(meta["d"], 3);
    assert_eq!(lines.next(), Some("s,t_lambda"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn dtn_dump_has_sidecar_and_raw_matrices() {
    let dir = scratch("dtn");
    let dump = dir.join("mats");
    let links = dir.join("links.csv");
    let spectrum_out = dir.join("spectrum.csv");
    let o = prbm(&[
        "dtn", "--domain-file", lattice_file(&dir).to_str().unwrap(), "--lambda", "0.5", "--lambda-grid", "0.01,1,100",
        "--dump-dir", dump.to_str().unwrap(), "--links-out", links.to_str().unwrap(), "--out", spectrum_out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let spectrum_csv = std::fs::read_to_string(&spectrum_out).unwrap();
    assert!(spectrum_csv.starts_with("index,mu,weight\n"));
    let imp = std::fs::read_to_string(dir.join("spectrum.csv.impedance.csv")).unwrap();
    assert_eq!(imp.lines().count(), 4);
    for line in imp.lines().skip(1) {
        let mismatch: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(mismatch < 1e-8, "{line}");
    }
    let side = manifest(&dump.join("matrices.json"));
    let n = side["links"].as_array().unwrap().len();
    for m in side["matrices"].as_array().unwrap() {
        let bytes = std::fs::read(dump.join(m["file"].as_str().unwrap())).unwrap();
        assert_eq!(bytes.len(), n * n * 8);
    }
    // Q is symmetric in the dump
    let q = std::fs::read(dump.join("q.f64")).unwrap();
    let at = |i: usize, j: usize| f64::from_le_bytes(q[(i * n + j) * 8..(i * n + j + 1) * 8].try_into().unwrap());
    assert!((at(0, 5) - at(5, 0)).abs() < 1e-12);
    // absorbed mass at Lambda = 0.5 stays below the hitting mass
    let text = std::fs::read_to_string(&links).unwrap();
    let (mut p0, mut pl) = (0.0, 0.0);
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        p0 += f[5].parse::<f64>().unwrap();
        pl += f[6].parse::<f64>().unwrap();
    }
    assert!((p0 - 1.0).abs() < 1e-12 && pl < p0);
}

#[test]
fn lsa_writes_a_json_report() {
    let dir = scratch("lsa");
    let curve = dir.join("line.json");
    std::fs::write(&curve, "[[0,0],[1,0]]").unwrap();
    let out = dir.join("report.json");
    let o = prbm(&[
        "lsa", "--curve", curve.to_str().unwrap(), "--strip-height", "1", "--lambda", "0.01", "--mesh", "0.001", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = manifest(&out);
    assert!(r["relative_error"].as_f64().unwrap() < 0.02, "{r}");
    assert!(dir.join("report.json.manifest.json").exists());
    // mesh coarser than Lambda / 10 is a domain error
    let o = prbm(&["lsa", "--koch", "1", "--lambda", "0.25", "--mesh", "0.05"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_passes() {
    let o = prbm(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS ")));
}
