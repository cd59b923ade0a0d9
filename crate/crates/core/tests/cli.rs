use std::fs;
use std::path::Path;

use vss_core::cli::main_with;
use vss_core::io::{sha256_hex, Manifest, Table};

fn run(args: &[&str]) -> i32 {
    main_with(std::iter::once("vss").chain(args.iter().copied()))
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn critical_writes_table_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("crit");
    assert_eq!(run(&["critical", "--alpha", "1", "--lmax", "3", "--out", out.to_str().unwrap()]), 0);
    let t = Table::parse_csv(&fs::read_to_string(out.join("critical.csv")).unwrap()).unwrap();
    let p = t.column("p_l").unwrap();
    assert_eq!(p, vec![9.0, 5.0, 11.0 / 3.0, 3.0]);
    let m = manifest(&out);
    assert_eq!(m.command, "critical");
    assert_eq!(m.outputs.len(), 1);
    let bytes = fs::read(out.join("critical.csv")).unwrap();
    assert_eq!(m.outputs[0].sha256, sha256_hex(&bytes));
}

#[test]
fn missing_parameters_exit_3() {
    assert_eq!(run(&["critical"]), 3);
    assert_eq!(run(&["profile", "-p", "3"]), 3);
    assert_eq!(run(&["no-such-command"]), 3);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn config_file_is_read_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.ini");
    let out = tmp.path().join("from_ini");
    fs::write(&good, format!("# comment\n[params]\nm = 2\nalpha = 0\n[output]\ndir = {}\n", out.display())).unwrap();
    assert_eq!(run(&["critical", "--config", good.to_str().unwrap(), "--lmax", "1"]), 0);
    let t = Table::parse_csv(&fs::read_to_string(out.join("critical.csv")).unwrap()).unwrap();
    assert_eq!(t.column("p_l").unwrap(), vec![5.0, 3.0]);

    let bad = tmp.path().join("bad.ini");
    fs::write(&bad, "[params]\nm = 2\nbogus = 1\n").unwrap();
    assert_eq!(run(&["critical", "--config", bad.to_str().unwrap(), "--alpha", "0"]), 3);
    fs::write(&bad, "[nowhere]\nx = 1\n").unwrap();
    assert_eq!(run(&["critical", "--config", bad.to_str().unwrap(), "--alpha", "0"]), 3);
}

#[test]
fn profile_near_bifurcation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("prof");
    let code = run(&["profile", "-p", "4.8", "--alpha", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let t = Table::parse_csv(&fs::read_to_string(out.join("profile.csv")).unwrap()).unwrap();
    let v = t.column("V").unwrap();
    assert!(v[0] > 0.0);
    assert!(v.last().unwrap().abs() < 1e-3 * v[0]);
    let names: Vec<_> = manifest(&out).outputs.iter().map(|o| o.path.clone()).collect();
    assert!(names.iter().any(|n| n.ends_with("profile.json")));
}

#[test]
fn blowup_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bu");
    assert_eq!(run(&["blowup", "-p", "3", "--alpha", "0", "--out", out.to_str().unwrap()]), 0);
    assert!(out.join("manifest.json").exists());
}
