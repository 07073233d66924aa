use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use accelfront_cli::artifacts::sha256;
use tempfile::TempDir;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn accelfront(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_accelfront"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_variant(dir: &TempDir, base: &str, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(bundled(base)).unwrap();
    let path = dir.path().join(name);
    fs::write(&path, edit(text)).unwrap();
    path
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn all_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn invalid_exponent_is_rejected_with_field_and_line() {
    let dir = TempDir::new().unwrap();
    let path = write_variant(&dir, "power_c1.toml", "bad.toml", |t| t.replace("q = 3.0", "q = 0.5"));
    let out = dir.path().join("out");
    let o = accelfront(&["simulate", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("kernel.right.q"), "{err}");
    assert!(err.contains("line 15"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_keys_and_missing_tables_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let typo = write_variant(&dir, "power_c1.toml", "typo.toml", |t| {
        t.replace("kappa = 2.0", "kapa = 2.0")
    });
    let o = accelfront(&["simulate", typo.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("kapa"), "{}", stderr(&o));

    let o = accelfront(&["kesten", bundled("power_c1.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("[kesten]"));
}

#[test]
fn reruns_are_byte_identical_and_fully_hashed() {
    let dir = TempDir::new().unwrap();
    let scenario = bundled("power_c2_step.toml");
    let runs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    for r in &runs {
        let o = accelfront(&["simulate", scenario.to_str().unwrap(), "--out", r.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let files = all_files(&runs[0]);
    assert_eq!(files, all_files(&runs[1]));
    for f in &files {
        assert_eq!(
            fs::read(runs[0].join(f)).unwrap(),
            fs::read(runs[1].join(f)).unwrap(),
            "{f:?}"
        );
    }

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(runs[0].join("manifest.json")).unwrap()).unwrap();
    let listed = manifest["files"].as_array().unwrap();
    let on_disk: Vec<_> = files.iter().filter(|f| f.as_os_str() != "manifest.json").collect();
    assert_eq!(listed.len(), on_disk.len());
    for entry in listed {
        let rel = entry["path"].as_str().unwrap();
        let bytes = fs::read(runs[0].join(rel)).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), sha256(&bytes), "{rel}");
    }
    assert_eq!(manifest["status"], "pass");
    assert_eq!(manifest["config"]["name"], "power_c2_step");
    assert!(manifest["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn stretched_exponential_fronts_all_pass() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("se");
    let o = accelfront(&[
        "simulate",
        bundled("stretched_exp_c1.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_csv(&out.join("fronts.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[5] == "pass"), "{rows:?}");
}

#[test]
fn sweep_over_tail_exponent_orders_the_growth_rates() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep");
    let o = accelfront(&[
        "sweep",
        bundled("power_sweep.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_csv(&out.join("summary.csv"));
    assert_eq!(rows.len(), 3);
    let slopes: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(slopes.windows(2).all(|w| w[1] < w[0]), "{slopes:?}");
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    for r in &rows {
        assert!(out.join(&r[0]).join("manifest.json").exists());
    }
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let o = accelfront(&["sweep"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_sweep_member_fails_alone() {
    let dir = TempDir::new().unwrap();
    fs::copy(bundled("power_c1.toml"), dir.path().join("power_c1.toml")).unwrap();
    let generator = dir.path().join("gen.toml");
    fs::write(
        &generator,
        "base = \"power_c1.toml\"\n[vary]\n\"kernel.right.q\" = [0.5, 3.0]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = accelfront(&["sweep", generator.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let rows = read_csv(&out.join("summary.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "invalid");
    assert!(rows[0][4].contains("kernel.right.q"));
    assert_eq!(rows[1][1], "pass");
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], false);
}

#[test]
fn large_grids_dump_binary_snapshots() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("big.toml");
    fs::write(
        &path,
        r#"name = "big"
[model]
kappa = 2.0
m = 1.0
[kernel]
shape = "gaussian"
sigma = 1.0
[grid]
L = 4096.0
N = 1048576
[initial]
type = "indicator"
half_width = 1.0
[run]
T = 0.1
dt = 0.05
snapshot_times = [0.05, 0.1]
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = accelfront(&["simulate", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bin = fs::read(out.join("snapshots/u.bin")).unwrap();
    assert_eq!(bin.len(), 2 * 1048576 * 8);
    let index = read_csv(&out.join("snapshots/index.csv"));
    assert_eq!(index.len(), 2);
    assert_eq!(index[1][2], (1048576 * 8).to_string());
    assert!(!out.join("snapshots/u_0000.csv").exists());
}

#[test]
fn single_diagnostic_commands_skip_the_simulation() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("law");
    let o = accelfront(&[
        "frontlaw",
        bundled("stretched_exp_c1.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_csv(&out.join("frontlaw.csv"));
    assert_eq!(rows.len(), 5);
    assert!(!out.join("trajectory.csv").exists());

    let out = dir.path().join("assume");
    let o = accelfront(&[
        "check-assumptions",
        bundled("subsolution_power.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["command"], "check-assumptions");
    assert!(read_csv(&out.join("assumptions.csv")).iter().all(|r| r[1] == "pass"));
}
