use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gkpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gkpinn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn small<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "run", "--iters", "4", "--n-interior", "30", "--n-boundary", "6", "--n-initial", "6",
        "--hidden", "5,5", "--history-stride", "2", "--eval-stride", "2", "--n-test", "16",
        "--grid-resolution", "7", "--fd-n", "16", "--out-dir", out,
    ];
    v.extend_from_slice(extra);
    v
}

fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
}

#[test]
fn run_writes_history_report_and_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r").display().to_string();
    let o = gkpinn(&small(&out, &["--example", "1", "--mode", "gkpinn", "--epsilon", "1e-3"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(Path::new(&out).join("report.toml")).unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout), report);
    assert_eq!(field(&report, "mode"), Some("\"gkpinn\""));
    assert!(field(&report, "l2_test").is_some());
    let hist = fs::read_to_string(Path::new(&out).join("history.csv")).unwrap();
    let lines: Vec<&str> = hist.lines().collect();
    assert_eq!(lines[0], "iter,loss_ic,loss_bc,loss_r,loss_total,l2_test");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].split(',').nth(5).is_some_and(|v| !v.is_empty()));
    let grid = fs::read_to_string(Path::new(&out).join("grid.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("x,u_model,u_ref,abs_err"));
    assert_eq!(grid.lines().count(), 8);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "example = 2\nepsilon = 0.5\nseed = 9\n[network]\nhidden = [3]\n").unwrap();
    let out = dir.path().join("r").display().to_string();
    let cfg_s = cfg.display().to_string();
    let o = gkpinn(&small(&out, &["--config", &cfg_s, "--epsilon", "0.25", "--mode", "pinn"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8_lossy(&o.stdout).to_string();
    assert_eq!(field(&report, "epsilon"), Some("0.25"));
    assert_eq!(field(&report, "example"), Some("2"));
    assert_eq!(field(&report, "seed"), Some("9"));
    assert_eq!(field(&report, "mode"), Some("\"pinn\""));
    assert_eq!(field(&report, "hidden"), Some("[5, 5]"));
}

#[test]
fn time_example_with_fd_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r").display().to_string();
    let o = gkpinn(&small(&out, &["--example", "8", "--reference", "fd", "--norm", "exact"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8_lossy(&o.stdout).to_string();
    assert_eq!(field(&report, "reference"), Some("\"fd:16\""));
    assert_eq!(field(&report, "norm"), Some("\"exact\""));
    let grid = fs::read_to_string(Path::new(&out).join("grid.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("x,t,u_model,u_ref,abs_err"));
    assert_eq!(grid.lines().count(), 50);
}

#[test]
fn absent_reference_is_omitted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r").display().to_string();
    let o = gkpinn(&small(&out, &["--example", "5", "--epsilon", "1e-38", "--rba", "off"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8_lossy(&o.stdout).to_string();
    assert_eq!(field(&report, "l2_test"), None);
    assert_eq!(field(&report, "reference"), Some("\"none\""));
    assert_eq!(field(&report, "enabled"), Some("false"));
}

#[test]
fn custom_problem_file() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("p.toml");
    fs::write(
        &prob,
        r#"
name = "ramp"
kind = "steady1d"
diffusion_sign = -1
convection = ["1"]
reaction = "0"
forcing = "1"
analytic = "x"
[boundary]
left = "0"
right = "1"
"#,
    )
    .unwrap();
    let out = dir.path().join("r").display().to_string();
    let p = prob.display().to_string();
    let o = gkpinn(&small(&out, &["--problem-file", &p, "--reference", "analytic"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8_lossy(&o.stdout).to_string();
    assert_eq!(field(&report, "problem"), Some("\"ramp\""));
}

#[test]
fn usage_errors_and_divergence_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r").display().to_string();
    let o = gkpinn(&small(&out, &["--example", "9"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("example"));
    let o = gkpinn(&small(&out, &["--lr", "0"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lr"));
    let o = gkpinn(&["run", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));

    let o = gkpinn(&small(&out, &["--example", "1", "--lr", "1e300", "--mode", "pinn"]));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn matrix_summary_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = gkpinn(&[
        "matrix", "--examples", "1,6", "--modes", "pinn,gkpinn", "--epsilons", "1e-38", "--iters", "1",
        "--n-interior", "20", "--n-boundary", "4", "--hidden", "4", "--n-test", "9", "--grid-resolution", "3",
        "--out-dir", &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], "example,mode,epsilon,loss,l2_test,status");
    assert!(lines[3].starts_with("6,pinn,1e-38,") && lines[3].ends_with(",x,ok"));
    assert!(lines[4].starts_with("6,gkpinn,1e-38,") && lines[4].ends_with(",x,ok"));
    assert!(!lines[1].ends_with(",x,ok"));
}

#[test]
fn reference_subcommand_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ref.csv").display().to_string();
    let o = gkpinn(&["reference", "--example", "4", "--epsilon", "0.01", "--fd-n", "16", "--out", &path]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("x,y,u_ref"));
    assert_eq!(text.lines().count(), 17 * 17 + 1);
}
