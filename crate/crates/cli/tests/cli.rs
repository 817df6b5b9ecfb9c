use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn glmb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glmb")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("glmb-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "trials = 2\nvariants = [\"tgs+\", \"dgs+fwd\"]\n\
         [scenario]\nduration = 8\nexpected_trajectories = 3.0\nclutter_rate = 10.0\n\
         [truncation]\niterations = 200\n",
    )
    .unwrap();
    path
}

#[test]
fn print_defaults_round_trips() {
    let out = glmb(&["--print-defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("detection_probability = 0.86"));
    let dir = scratch("defaults");
    let path = dir.join("d.toml");
    fs::write(&path, &text).unwrap();
    let out = glmb(&["--config", path.to_str().unwrap(), "--out", dir.to_str().unwrap(), "sample", "--help"]);
    assert!(out.status.success());
}

#[test]
fn simulate_then_filter() {
    let dir = scratch("pipeline");
    let cfg = small_config(&dir);
    let (c, o) = (cfg.to_str().unwrap(), dir.to_str().unwrap());
    assert!(glmb(&["--config", c, "--out", o, "--seed", "5", "simulate"]).status.success());
    let meas = dir.join("measurements.csv");
    let truth = dir.join("truth.csv");
    assert!(fs::read_to_string(&meas).unwrap().starts_with("scan,zx,zy\n"));
    let out = glmb(&[
        "--config",
        c,
        "--out",
        o,
        "filter",
        meas.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--variant",
        "sgs+",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("OSPA(2)"));
    let est = fs::read_to_string(dir.join("estimates.csv")).unwrap();
    assert!(est.starts_with("scan,label_birth,label_index,x,y,vx,vy\n"));
    let diag = fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 9);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sample_and_oracle_check() {
    let dir = scratch("sample");
    let m = dir.join("eta.txt");
    fs::write(&m, "# two labels, one measurement\n2 1\n1 1 1\n1 1 1\n").unwrap();
    let o = dir.to_str().unwrap();
    let out = glmb(&["--out", o, "sample", m.to_str().unwrap(), "--iterations", "2000"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.join("samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
    let out = glmb(&["oracle-check", m.to_str().unwrap(), "--iterations", "20000"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 7);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bench_writes_csv() {
    let dir = scratch("bench");
    let out = glmb(&[
        "--out",
        dir.to_str().unwrap(),
        "bench",
        "--p",
        "4,8",
        "--m",
        "3",
        "--iterations",
        "100",
        "--variants",
        "tgs+,sgs",
    ]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn experiment_is_reproducible() {
    let dir = scratch("experiment");
    let cfg = small_config(&dir);
    for run in ["a", "b"] {
        let out = glmb(&[
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "11",
            "--out",
            dir.join(run).to_str().unwrap(),
            "experiment",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["raw_scans.csv", "raw_trials.csv"] {
        assert_eq!(fs::read(dir.join("a").join(f)).unwrap(), fs::read(dir.join("b").join(f)).unwrap());
    }
    assert!(dir.join("a/aggregate.csv").exists() && dir.join("a/timing.csv").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_config_lists_keys() {
    let dir = scratch("badcfg");
    let path = dir.join("bad.toml");
    fs::write(&path, "trials = 0\n[scenario]\nclutter_rate = -1.0\n").unwrap();
    let out = glmb(&["--config", path.to_str().unwrap(), "experiment"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("trials") && err.contains("scenario.clutter_rate"), "{err}");
    fs::remove_dir_all(&dir).unwrap();
}
