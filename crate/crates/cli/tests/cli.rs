use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_MESH: &str = "[mesh]\ncells_per_period = 8\nny = 16\n";

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_roughwall"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `name,value` lookup in a two-column CSV.
fn csv_value(text: &str, name: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{name},")))
        .unwrap_or_else(|| panic!("{name} missing"))
        .parse()
        .unwrap()
}

fn summary_alpha(text: &str) -> f64 {
    text.lines().find_map(|l| l.strip_prefix("# alpha1: ")).unwrap().parse().unwrap()
}

#[test]
fn check_accepts_defaults() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "", &["check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let shown = String::from_utf8_lossy(&o.stdout);
    assert!(shown.contains("[unsteady]"));
}

#[test]
fn check_rejects_non_reciprocal_epsilon() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "[flow]\nepsilon = 0.3\n", &["check"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("reciprocal of a positive integer"), "{}", stderr(&o));
}

#[test]
fn check_rejects_profile_below_band() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "[profile]\nkind = \"cosine\"\namplitude = 1.5\n", &["check"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("-1 <= eta <= 0"), "{}", stderr(&o));
}

#[test]
fn unknown_key_reports_location() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "[mesh]\nny = 8\ncells = 3\n", &["check"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("cells") && msg.contains("line 3"), "{msg}");
}

#[test]
fn unknown_flag_is_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_roughwall")).args(["check", "--nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_lists_defaults() {
    let o = Command::new(env!("CARGO_BIN_EXE_roughwall")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("t_end = 30.0") && text.contains("cells_per_period = 16"), "{text}");
}

#[test]
fn sweep_needs_three_epsilons() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "[sweep]\nepsilons = [0.25, 0.125]\n", &["sweep"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("need >=3 for rate fit"), "{}", stderr(&o));
}

#[test]
fn steady_flat_flux() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("[profile]\nkind = \"flat\"\n[flow]\nepsilon = 0.25\n{SMALL_MESH}");
    let o = run(dir.path(), &cfg, &["steady"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("out/steady_summary.csv")).unwrap();
    let flux = csv_value(&summary, "flux");
    assert!((flux - 1.0 / 12.0).abs() <= 1e-10, "flux {flux}");
    assert!(dir.path().join("out/steady_field.txt").exists());
    assert!(dir.path().join("out/mesh.txt").exists());
}

#[test]
fn steady_solver_failure_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "[flow]\nepsilon = 0.25\np1 = -20.0\nmode = \"navier_stokes\"\n[solver]\nmax_iters = 1\ntol = 1e-14\n{SMALL_MESH}"
    );
    let o = run(dir.path(), &cfg, &["steady"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn cell_flat_and_shifted() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "[profile]\nkind = \"flat\"\n[cell]\nheight = 4.0\n", &["cell"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("out/cell_summary.csv")).unwrap();
    assert!(summary_alpha(&text).abs() <= 1e-10);
    assert!(dir.path().join("out/cell_decay.svg").exists());

    let o = run(dir.path(), "[profile]\nkind = \"shifted_flat\"\ndepth = 0.5\n[cell]\nheight = 4.0\n", &["cell"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("out/cell_summary.csv")).unwrap();
    assert!((summary_alpha(&text) - 0.5).abs() <= 1e-8);
}

#[test]
fn cell_output_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = "seed = 3\n[profile]\nkind = \"cosine\"\namplitude = 0.25\n[cell]\nheight = 4.0\n";
    let first = run(dir.path(), cfg, &["cell"]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let a = fs::read(dir.path().join("out/cell_summary.csv")).unwrap();
    let second = run(dir.path(), cfg, &["cell", "--workers", "3"]);
    assert_eq!(second.status.code(), Some(0));
    let b = fs::read(dir.path().join("out/cell_summary.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unsteady_from_steady_state_stays_at_rest() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("[flow]\nepsilon = 0.25\n[unsteady]\ninitial = \"steady_exact\"\nt_end = 0.05\n{SMALL_MESH}");
    let o = run(dir.path(), &cfg, &["unsteady"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("out/unsteady_trace.csv")).unwrap();
    let mut lines = trace.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), "t,E,D,smallness_flag,dist_poiseuille,dist_effective");
    let mut n = 0;
    for l in lines {
        let e: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert!(e <= 1e-16, "{l}");
        n += 1;
    }
    assert!(n > 0);
}

#[test]
fn sweep_writes_report_and_plots() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("[sweep]\nepsilons = [0.25, 0.125, 0.0625]\n[cell]\nheight = 4.0\n{SMALL_MESH}");
    let o = run(dir.path(), &cfg, &["sweep", "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("out/sweep_report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("epsilon,alpha1,"));
    assert_eq!(rows.len(), 4);
    let svg = fs::read_to_string(dir.path().join("out/sweep_e_l2_eff.svg")).unwrap();
    assert!(svg.contains("slope 1.5") && svg.contains("slope 2"));
    assert!(dir.path().join("out/sweep_slopes.csv").exists());
}
