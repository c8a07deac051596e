use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use afem_core::driver::CSV_HEADER;
use afem_core::{Partition, SplineFunction};

fn afem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afem")).args(args).output().unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn end_to_end_conforming_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(&dir.path().join("run1"));
    let o = afem(&[
        "--problem", "sin2", "--mode", "conforming", "--degree", "2", "--theta", "0.5", "--max-dofs", "20000",
        "--out", &out, "--dump-mesh", "--dump-indicators", "--save-solution",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run1");
    let csv = fs::read_to_string(run.join("convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows = lines.count();
    assert!(rows >= 5);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["problem"], "sin2");
    assert_eq!(manifest["config"]["theta"], 0.5);
    assert_eq!(manifest["config"]["mode"], "conforming");
    assert_eq!(manifest["iterations"], rows);
    assert!(manifest["error_slope"].as_f64().unwrap() < 0.0);
    for name in manifest["outputs"].as_array().unwrap() {
        assert!(run.join(name.as_str().unwrap()).exists(), "{name}");
    }
    assert!(!run.join("manifest.json.tmp").exists());

    let last = rows - 1;
    let mesh = Partition::parse_dump(&fs::read_to_string(run.join(format!("mesh_{last:03}.txt"))).unwrap()).unwrap();
    let u = SplineFunction::from_text(&fs::read_to_string(run.join("solution.txt")).unwrap()).unwrap();
    assert_eq!(u.space().partition().cells(), mesh.cells());
    let ind = fs::read_to_string(run.join(format!("indicators_{last:03}.txt"))).unwrap();
    assert_eq!(ind.lines().count(), mesh.len());
}

#[test]
fn help_exits_cleanly() {
    let o = afem(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let cases: [(&[&str], &str); 5] = [
        (&["--theta", "1.5"], "theta"),
        (&["--initial-levels", "0"], "--initial-levels"),
        (&["--problem", "nope"], "problem"),
        (&["--degree", "9"], "degree"),
        (&["--problem", "custom-file"], "--source-file"),
    ];
    for (args, needle) in cases {
        let mut all = args.to_vec();
        all.extend(["--out", &out]);
        let o = afem(&all);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }
    assert!(!dir.path().join("convergence.csv").exists());
}

#[test]
fn weak_stabilization_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = afem(&["--mode", "nitsche", "--gamma1", "1e-4", "--gamma2", "1e-4", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
}

#[test]
fn custom_source_and_zero_problem() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("f.json");
    fs::write(&src, r#"{"name":"ramp","terms":[{"coeff":100.0,"x":1}]}"#).unwrap();
    let out = out_arg(&dir.path().join("custom"));
    let o = afem(&[
        "--problem", "custom-file", "--source-file", src.to_str().unwrap(), "--max-dofs", "500", "--out", &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("custom/convergence.csv")).unwrap();
    // No exact solution: error columns are empty.
    assert!(csv.lines().nth(1).unwrap().starts_with("0,16,4,,,"));

    let out = out_arg(&dir.path().join("zero"));
    let o = afem(&["--problem", "zero", "--out", &out]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("zero/convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn nitsche_with_cg() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = afem(&["--mode", "nitsche", "--solver", "cg", "--max-dofs", "400", "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["solver"]["method"], "cg");
}
