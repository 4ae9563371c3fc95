use std::fs;
use std::path::Path;
use std::process::Command;

fn varopt() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_varopt"));
    c.env_remove("VAROPT_SEED");
    c
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let out = dir.join("out");
    let text = format!(
        "mesh.steps = 30\nmodel.m = 5\nseeds = 0..3\noutput = {}\n{extra}\n\
         [problem]\nkind = quadratic\nd = 2\nn = 20\n\n[schedule]\nfamily = constant\nparams = 0.5, 0, 0\n",
        out.display()
    );
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let st = varopt().arg("run").arg(&cfg).status().unwrap();
    assert!(st.success());
    let out = dir.path().join("out");
    for f in ["trajectory_seed0.csv", "trajectory_seed2.csv", "phi.csv", "diagnostics.csv", "summary.txt"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("t,mean_energy,se_energy,mean_gap,bound_value,ratio\n"));
    assert_eq!(diag.lines().count(), 31);
}

#[test]
fn seed_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let st = varopt().arg("run").arg(&cfg).env("VAROPT_SEED", "7").status().unwrap();
    assert!(st.success());
    assert!(dir.path().join("out/trajectory_seed7.csv").exists());
    assert!(!dir.path().join("out/trajectory_seed0.csv").exists());
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "problem.colour = blue\n").unwrap();
    assert_eq!(varopt().arg("run").arg(&bad).status().unwrap().code(), Some(2));
    assert_eq!(varopt().arg("run").arg(dir.path().join("missing.cfg")).status().unwrap().code(), Some(2));
    let cfg = write_config(dir.path(), "");
    let st = varopt().args(["compare"]).arg(&cfg).args(["--optimizers", "adam"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert_eq!(varopt().arg("frobnicate").status().unwrap().code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // A learning rate of about 3 makes the quadratic iteration diverge.
    let cfg = write_config(dir.path(), "schedule.delta_T = 300");
    let text = fs::read_to_string(&cfg).unwrap().replace("params = 0.5, 0, 0", "params = -4, 4, 0");
    fs::write(&cfg, text).unwrap();
    let out = varopt().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn sweep_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let st = varopt().arg("sweep").arg(&cfg).args(["--grid", "model.m=5,20;model.sigma=0,0.5"]).status().unwrap();
    assert!(st.success());
    let table = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    let st = varopt().arg("compare").arg(&cfg).args(["--optimizers", "mirror_sgd,fosp_continuous"]).status().unwrap();
    assert!(st.success());
    let table = fs::read_to_string(dir.path().join("out/compare.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn selftest_passes() {
    let out = varopt().arg("selftest").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS legendre identity"));
}
