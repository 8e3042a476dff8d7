use std::path::Path;
use std::process::Command;

fn run(cmd: &str, config: &str, dir: &Path) -> std::process::Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_pdmp-harvest"))
        .args([
            cmd,
            cfg.to_str().unwrap(),
            "--output-dir",
            dir.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_sha256="));
    lines
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

const ONE_D: &str = r#"
[rates]
lambda_x = 0.1

[kernels.biomass]
kind = "uniform-multiplicative"
z_lo = 0.8
z_hi = 1.2

[solver]
nodes = 401
"#;

#[test]
fn solve_writes_grid_and_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("solve", ONE_D, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(rows(&dir.path().join("out/value.csv")).len(), 401);
    let xs = rows(&dir.path().join("out/xstar.csv"));
    assert_eq!(xs.len(), 1);
    let x: f64 = xs[0][0].parse().unwrap();
    assert!((x - 0.7422).abs() < 1e-3, "{x}");
}

#[test]
fn growth_jumps_give_a_curve() {
    let cfg = r#"
[rates]
lambda_x = 0.0
lambda_r = 0.1

[kernels.growth]
kind = "growth-multiplicative"
xi = 0.1
law = { support = [-1.0, 1.0], weights = [0.5, 0.5] }

[solver]
nodes = 201

[r_grid]
nodes = 11
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run("solve", cfg, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let curve = rows(&dir.path().join("out/xstar_curve.csv"));
    assert_eq!(curve.len(), 11);
    assert_eq!(rows(&dir.path().join("out/value2d.csv")).len(), 11 * 201);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run("solve", "[model]\nr = 1.0\n", dir.path()).status.code(),
        Some(4)
    );
    assert_eq!(
        run("solve", "[rates]\nlambda_x = -1.0\n", dir.path())
            .status
            .code(),
        Some(4)
    );
    let capped = format!("{ONE_D}max_iter = 3\n");
    let out = run("solve", &capped, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("converge"));
    let loose = format!("{ONE_D}tol = 1e-3\n\n[verify]\ndual = false\n");
    let out = run("verify", &loose, dir.path());
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = rows(&dir.path().join("out/verify_report.csv"));
    assert!(report
        .iter()
        .any(|r| r[0] == "fixed-point" && r[1] == "FAIL"));
}

#[test]
fn trajectories_mark_jumps_and_settle_without_them() {
    let cfg = r#"
[rates]
lambda_x = 0.5

[kernels.biomass]
kind = "uniform-multiplicative"
z_lo = 0.8
z_hi = 1.2

[solver]
nodes = 401

[simulate]
x0 = 0.3
horizon = 40.0
replicates = 20
trajectories = 2
seed = 3
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run("simulate", cfg, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let t = rows(&dir.path().join("out/trajectory_0.csv"));
    assert!(t.iter().any(|r| r[4] == "1"));
    assert_eq!(rows(&dir.path().join("out/mc_summary.csv")).len(), 1);

    let calm = cfg.replace("lambda_x = 0.5", "lambda_x = 0.0");
    let dir = tempfile::tempdir().unwrap();
    assert!(run("simulate", &calm, dir.path()).status.success());
    let t = rows(&dir.path().join("out/trajectory_1.csv"));
    let xs: Vec<f64> = t.iter().map(|r| r[1].parse().unwrap()).collect();
    let level: f64 = t[0][5].parse().unwrap();
    assert!(t.iter().all(|r| r[4] == "0"));
    assert!(xs.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!((xs.last().unwrap() - level).abs() < 1e-9);
}
