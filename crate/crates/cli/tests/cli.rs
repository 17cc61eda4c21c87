use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[model]
n = 20

[integration]
t_final = 1e-10

[optimization]
max_iters = 10

[grad_check]
directions = 6
pairs = 3
"#;

/// Small inversion that descends without diverging for scale 1e48.
const INVERT: &str = r#"
[model]
n = 20

[integration]
t_final = 1e-9

[optimization]
max_iters = 6

[optimization.sweep]
scales = [1.0, 1e48]
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn adjprec(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adjprec"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[model]\ncells = 10\n");
    let o = adjprec(&["forward"], &cfg, &tmp.path().join("out"));
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cells"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn missing_file_and_bad_values_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let o = adjprec(&["forward"], &tmp.path().join("absent.toml"), tmp.path());
    assert_eq!(code(&o), 2);
    let cfg = write_config(tmp.path(), "[integration]\nt_final = 1.3e-12\n");
    assert_eq!(code(&adjprec(&["forward"], &cfg, tmp.path())), 2);
    let cfg = write_config(tmp.path(), "[output]\nsnapshot_times = [1e-3]\n");
    assert_eq!(code(&adjprec(&["forward"], &cfg, tmp.path())), 2);
}

#[test]
fn empty_sweep_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}\n[optimization.sweep]\nscales = []\n"));
    assert_eq!(code(&adjprec(&["sweep"], &cfg, &tmp.path().join("out"))), 2);
}

#[test]
fn forward_without_snapshots_writes_only_the_log_and_summary() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = adjprec(&["forward"], &write_config(tmp.path(), SMALL), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut files: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    files.sort();
    assert_eq!(files, ["newton.csv", "summary.json"]);
    let s = summary(&out);
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["command"], "forward");
    assert_eq!(s["result"]["steps"], 200);
    assert_eq!(s["result"]["snapshots"].as_array().unwrap().len(), 0);
    let (header, rows) = read_table(&out.join("newton.csv"));
    assert_eq!(header, ["step", "iterations", "residual"]);
    assert_eq!(rows.len(), 200);
}

#[test]
fn equilibrium_without_drive_is_stationary() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{SMALL}\n[output]\nsnapshot_times = [0.0, 5e-11, 1e-10]\n").replace("n = 20", "n = 20\nleft_boundary = \"zero-flux\"");
    let out = tmp.path().join("out");
    assert_eq!(code(&adjprec(&["forward"], &write_config(tmp.path(), &text), &out)), 0);
    let (header, first) = read_table(&out.join("snapshot_000.csv"));
    assert_eq!(header, ["x_cm", "E_erg_cm3", "T_eV"]);
    assert_eq!(first.len(), 20);
    for k in 1..3 {
        let (_, later) = read_table(&out.join(format!("snapshot_{k:03}.csv")));
        for (a, b) in first.iter().zip(&later) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() <= 1e-12 * u.abs(), "{u} vs {v}");
            }
        }
    }
    assert_eq!(summary(&out)["result"]["snapshots"][2]["time_s"], 1e-10);
}

#[test]
fn driven_forward_moves_the_front() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{SMALL}\n[output]\nsnapshot_times = [1e-10]\n");
    let out = tmp.path().join("out");
    assert_eq!(code(&adjprec(&["forward", "--perturbed"], &write_config(tmp.path(), &text), &out)), 0);
    let s = summary(&out);
    assert_eq!(s["result"]["perturbed"], true);
    assert!(s["result"]["final_wavefront_cm"].as_f64().unwrap() > 0.0);
    assert_eq!(s["result"]["snapshots"][0]["file"], "snapshot_000.csv");
}

#[test]
fn small_grad_check_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = adjprec(&["grad-check", "--seed", "7"], &write_config(tmp.path(), SMALL), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["config"]["seed"], 7);
    assert_eq!(s["result"]["passed"], true);
    assert!(s["result"]["max_rel_err"].as_f64().unwrap() <= 1e-4);
    assert!(s["result"]["max_induced_drift"].as_f64().unwrap() <= 1e-10);
    assert!(s["result"]["max_naive_drift"].as_f64().unwrap() > 1e-8);
    let (header, rows) = read_table(&out.join("drift.csv"));
    assert_eq!(header, ["step", "t_s", "induced_max_rel_drift", "naive_max_rel_drift"]);
    assert_eq!(rows.len(), 201);
    let grad = fs::read_to_string(out.join("grad_check.csv")).unwrap();
    assert_eq!(grad.lines().count(), 7);
    assert!(grad.starts_with("index,block,x_cm,adjoint,fd,rel_err,rel_err_component\n"));
}

#[test]
fn failed_grad_check_exits_with_four() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL.replace("pairs = 3", "pairs = 3\nmax_mismatch = 1e-300");
    let out = tmp.path().join("out");
    assert_eq!(code(&adjprec(&["grad-check"], &write_config(tmp.path(), &text), &out)), 4);
    assert_eq!(summary(&out)["result"]["passed"], false);
}

#[test]
fn unit_scale_diverges_and_strict_reports_it() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), INVERT);
    let lax = tmp.path().join("lax");
    assert_eq!(code(&adjprec(&["invert", "--scale", "1"], &cfg, &lax)), 0);
    let s = summary(&lax);
    assert_eq!(s["result"]["outcome"]["status"], "diverged");
    assert_eq!(s["result"]["outcome"]["iteration"], 1);
    let strict = tmp.path().join("strict");
    assert_eq!(code(&adjprec(&["invert", "--scale", "1", "--strict"], &cfg, &strict)), 5);
    assert!(strict.join("history.csv").exists());
}

#[test]
fn scaled_inversion_reduces_the_cost() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = adjprec(&["invert", "--scale", "1e48", "--strict"], &write_config(tmp.path(), INVERT), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_ne!(s["result"]["outcome"]["status"], "diverged");
    assert_eq!(s["result"]["scale_y"], 1e48);
    assert!(s["result"]["best_cost"].as_f64() < s["result"]["initial_cost"].as_f64());
    let (header, rows) = read_table(&out.join("history.csv"));
    assert_eq!(header[..3], ["iter", "C_E_erg2_cm5", "C_T_eV2_cm"]);
    assert!(rows.windows(2).all(|w| w[1][1] + w[1][2] <= w[0][1] + w[0][2]));
    let (header, rows) = read_table(&out.join("final_compare.csv"));
    assert_eq!(header.len(), 7);
    assert_eq!(rows.len(), 20);
    let (header, _) = read_table(&out.join("reconstructed_initial.csv"));
    assert_eq!(header[0], "x_cm");
}

#[test]
fn outputs_are_bit_identical_across_runs_and_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), INVERT);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&adjprec(&["sweep"], &cfg, &a)), 0);
    assert_eq!(code(&adjprec(&["sweep", "--workers", "1"], &cfg, &b)), 0);
    for file in ["sweep.csv", "scale_1e48/history.csv", "scale_1e48/final_compare.csv", "scale_1/history.csv"] {
        assert_eq!(fs::read_to_string(a.join(file)).unwrap(), fs::read_to_string(b.join(file)).unwrap(), "{file}");
    }
    // The summaries differ only in the recorded output directory.
    let (mut sa, mut sb) = (summary(&a), summary(&b));
    sa["config"]["output"]["dir"] = serde_json::Value::Null;
    sb["config"]["output"]["dir"] = serde_json::Value::Null;
    assert_eq!(sa, sb);
    let sweep = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,1e-21,1,diverged,"), "{}", lines[1]);
    assert_eq!(summary(&a)["result"].as_array().unwrap().len(), 2);
}

#[test]
fn strict_sweep_fails_when_every_scale_diverges() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = adjprec(&["sweep", "--scale", "1", "--strict"], &write_config(tmp.path(), INVERT), &out);
    assert_eq!(code(&o), 5);
    assert!(out.join("scale_1/history.csv").exists());
    assert!(!out.join("scale_1e48").exists());
}
