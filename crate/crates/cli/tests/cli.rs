//! End-to-end checks of the command-line interface.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cutfem"))
}

#[test]
fn dump_config_parses_back() {
    let out = bin().arg("dump-config").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("problem = kite"));
    assert!(text.contains("c_gamma"));
}

#[test]
fn solve_single_run_writes_csv() {
    let dir = std::env::temp_dir().join(format!("cutfem_cli_solve_{}", std::process::id()));
    let out = bin()
        .args([
            "solve",
            "--set",
            "problem=circle-static",
            "--set",
            "r=1",
            "--set",
            "lx=0",
            "--set",
            "lt=2",
            "--set",
            "validate_source=false",
            "--set",
            "write_vtk=true",
        ])
        .arg("--set")
        .arg(format!("out_dir={}", dir.display()))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "stdout: {stdout}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("final norms"));
    assert!(dir.join("steps.csv").exists());
    assert!(dir.join("step_0004.vtk").exists());
    let csv = std::fs::read_to_string(dir.join("steps.csv")).unwrap();
    assert!(csv.starts_with("n,t,dofs,K,gamma"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn converge_small_grid_writes_tables() {
    let dir = std::env::temp_dir().join(format!("cutfem_cli_conv_{}", std::process::id()));
    let out = bin()
        .args([
            "converge",
            "--set",
            "problem=circle-static",
            "--set",
            "r=1",
            "--set",
            "lx=0..1",
            "--set",
            "lt=0..1",
            "--set",
            "validate_source=false",
        ])
        .arg("--set")
        .arg(format!("out_dir={}", dir.display()))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "stdout: {stdout}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("linf_l2.csv").exists());
    assert!(dir.join("l2h1.csv").exists());
    let table = std::fs::read_to_string(dir.join("linf_l2.csv")).unwrap();
    assert!(table.contains("# EOC in space"));
    assert!(table.contains("# EOC in time"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn geomcheck_passes_for_q2() {
    let out = bin()
        .args(["geomcheck", "--orders", "2", "--nx0", "8", "--levels", "3"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "stdout: {stdout}");
    assert!(stdout.contains("PASS"));
}

#[test]
fn unknown_config_key_fails() {
    let out = bin().args(["solve", "--set", "bogus=1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}
