//! End-to-end tests of the command-line interface and its exit-code
//! contract: 0 success, 1 usage/IO, 2 non-convergence, 3 certificate failure.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qtensor-lab"))
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    bin()
        .args([
            cmd,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--deterministic",
        ])
        .output()
        .unwrap()
}

#[test]
fn solve_constant_vacuum_produces_zero_energy_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("solve.cfg");
    write(
        &cfg,
        "grid.n = 16\nmaterial.a = 1\nmaterial.b = 1\nmaterial.c = 1\n\
         epsilon = 0.4\nboundary.mode = constant-vacuum\n",
    );
    let out = dir.path().join("out");
    let res = run("solve", &cfg, &out);
    assert_eq!(res.status.code(), Some(0), "{res:?}");

    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["iterations"], 0);
    assert_eq!(stats["final_energy"], 0.0);

    let field = qtensor_core::load_field(&out.join("field.qtf")).unwrap();
    assert_eq!(field.grid().n(), 16);
    assert_eq!(field.epsilon(), 0.4);
}

#[test]
fn solve_hedgehog_round_trips_through_the_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("solve.cfg");
    write(
        &cfg,
        "grid.n = 20\nmaterial.a = 1\nmaterial.b = 1\nmaterial.c = 1\n\
         epsilon = 0.4\nboundary.mode = hedgehog\n",
    );
    let out1 = dir.path().join("out1");
    let res = run("solve", &cfg, &out1);
    assert_eq!(res.status.code(), Some(0), "{res:?}");

    // Re-running from the effective config reproduces the field bit for bit.
    let echo = out1.join("effective_config.txt");
    let out2 = dir.path().join("out2");
    let res = run("solve", &echo, &out2);
    assert_eq!(res.status.code(), Some(0), "{res:?}");
    let f1 = std::fs::read(out1.join("field.qtf")).unwrap();
    let f2 = std::fs::read(out2.join("field.qtf")).unwrap();
    assert_eq!(f1, f2);
}

#[test]
fn unknown_config_key_is_named_and_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("solve.cfg");
    write(
        &cfg,
        "grid.n = 16\nmaterial.a = 1\nmaterial.b = 1\nmaterial.c = 1\n\
         epsilon = 0.4\nboundary.mode = hedgehog\nmaterial.d = 7\n",
    );
    let res = run("solve", &cfg, &dir.path().join("out"));
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("material.d"), "stderr: {stderr}");
}

#[test]
fn missing_physics_key_is_named_and_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("solve.cfg");
    write(
        &cfg,
        "grid.n = 16\nmaterial.a = 1\nmaterial.b = 1\nmaterial.c = 1\n\
         boundary.mode = hedgehog\n",
    );
    let res = run("solve", &cfg, &dir.path().join("out"));
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("epsilon"), "stderr: {stderr}");
}

#[test]
fn sweep_emits_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    write(
        &cfg,
        "grid.n = 16\nmaterial.a = 1\nmaterial.b = 1\nmaterial.c = 1\n\
         sweep.epsilons = 0.55, 0.42\n",
    );
    let out1 = dir.path().join("out1");
    let res = run("sweep", &cfg, &out1);
    // A two-point desk sweep at n = 16 is far from the asymptotic regime;
    // only the exit-code contract and the artifacts are checked here.
    let code = res.status.code().unwrap();
    assert!([0, 2, 3].contains(&code), "unexpected exit {code}");
    for name in ["report.csv", "report.json", "plotdata.txt", "effective_config.txt"] {
        assert!(out1.join(name).exists(), "missing {name}");
    }
    assert!(out1.join("field_000.qtf").exists());
    assert!(out1.join("field_001.qtf").exists());

    let plot = std::fs::read_to_string(out1.join("plotdata.txt")).unwrap();
    assert!(plot.starts_with("# eps int_f_b34 fit\n"));
    assert_eq!(plot.lines().count(), 3);
    for line in plot.lines().skip(1) {
        assert_eq!(line.split_whitespace().count(), 3);
    }

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out1.join("report.json")).unwrap()).unwrap();
    assert!(json["certificates"].is_array());
    assert!(json["fits"]["int_f_fit_region"]["slope"].is_number());

    let out2 = dir.path().join("out2");
    let res2 = run("sweep", &out1.join("effective_config.txt"), &out2);
    assert_eq!(res2.status.code(), Some(code));
    assert_eq!(
        std::fs::read(out1.join("report.csv")).unwrap(),
        std::fs::read(out2.join("report.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(out1.join("field_001.qtf")).unwrap(),
        std::fs::read(out2.join("field_001.qtf")).unwrap()
    );
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    write(
        &cfg,
        "grid.n = 16\nmaterial.a = 1\nmaterial.b = 1\nmaterial.c = 1\n\
         sweep.epsilons = 0.55, 0.42\n",
    );
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("out{threads}"));
        let res = bin()
            .args([
                "sweep",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
            ])
            .output()
            .unwrap();
        assert!(res.status.code().is_some(), "{res:?}");
        reports.push(std::fs::read(out.join("report.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1], "reports differ across thread counts");
}

#[test]
fn sweep_with_one_iteration_budget_flags_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    write(
        &cfg,
        "grid.n = 16\nmaterial.a = 1\nmaterial.b = 1\nmaterial.c = 1\n\
         sweep.epsilons = 0.55, 0.42\nsolve.max_iters = 1\n",
    );
    let res = run("sweep", &cfg, &dir.path().join("out"));
    let code = res.status.code().unwrap();
    assert!(code == 2 || code == 3, "expected 2 or 3, got {code}");
}

#[test]
fn diagnose_truncated_field_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    // Produce a valid field, then truncate it.
    let cfg = dir.path().join("solve.cfg");
    write(
        &cfg,
        "grid.n = 16\nmaterial.a = 1\nmaterial.b = 1\nmaterial.c = 1\n\
         epsilon = 0.4\nboundary.mode = constant-vacuum\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run("solve", &cfg, &out).status.code(), Some(0));
    let field_path = out.join("field.qtf");
    let bytes = std::fs::read(&field_path).unwrap();
    std::fs::write(&field_path, &bytes[..bytes.len() / 3]).unwrap();

    let dcfg = dir.path().join("diag.cfg");
    write(
        &dcfg,
        &format!("field.path = {}\n", field_path.display()),
    );
    let res = run("diagnose", &dcfg, &dir.path().join("dout"));
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("truncated"), "stderr: {stderr}");
}

#[test]
fn diagnose_writes_requested_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("solve.cfg");
    write(
        &cfg,
        "grid.n = 24\nmaterial.a = 1\nmaterial.b = 1\nmaterial.c = 1\n\
         epsilon = 0.4\nboundary.mode = hedgehog\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run("solve", &cfg, &out).status.code(), Some(0));

    let dcfg = dir.path().join("diag.cfg");
    write(
        &dcfg,
        &format!(
            "field.path = {}\ntheta.centers = 0,0,0; 0.2,0,0\n\
             badset.r = {}\nbadset.delta = 0.15\n",
            out.join("field.qtf").display(),
            5.0 * 2.0 / 23.0,
        ),
    );
    let dout = dir.path().join("dout");
    let res = run("diagnose", &dcfg, &dout);
    assert_eq!(res.status.code(), Some(0), "{res:?}");
    for name in [
        "summary.json",
        "theta_profiles.csv",
        "badset_mask.qtnm",
        "cover.json",
    ] {
        assert!(dout.join(name).exists(), "missing {name}");
    }
    let csv = std::fs::read_to_string(dout.join("theta_profiles.csv")).unwrap();
    assert!(csv.starts_with("cx,cy,cz,r,theta\n"));
    assert!(csv.lines().count() > 2);
}

#[test]
fn verify_passes_on_sane_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("verify.cfg");
    write(
        &cfg,
        "grid.n = 24\nmaterial.a = 1\nmaterial.b = 1\nmaterial.c = 1\nepsilon = 0.4\n",
    );
    let out = dir.path().join("out");
    let res = run("verify", &cfg, &out);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(res.status.code(), Some(0), "stdout: {stdout}");
    assert_eq!(stdout.matches("PASS").count(), 4);
    assert!(out.join("verify.txt").exists());
}
