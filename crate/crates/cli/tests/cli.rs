use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlab")).args(args).current_dir(cwd).output().expect("hlab runs")
}

fn config(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    p.canonicalize().unwrap().display().to_string()
}

#[test]
fn shipped_identities_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = hlab(&["run", &config("identities.toml")], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let run = dir.path().join("runs/identities");
    for f in ["report.json", "summary.json", "metadata.json", "curvature.csv"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "pass");
    assert_eq!(summary["failed"], 0);
}

#[test]
fn misspelled_key_exits_with_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[experiment]\nkind = \"penalty\"\n\n[experiment.params]\nmode = \"combined\"\nladdr = [16.0]\n").unwrap();
    let out = hlab(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("laddr"));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn bad_values_and_missing_files_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wave.toml");
    fs::write(&cfg, "[experiment]\nkind = \"wave\"\n\n[experiment.params]\ncfl_fraction = 3.0\n").unwrap();
    assert_eq!(hlab(&["run", cfg.to_str().unwrap()], dir.path()).status.code(), Some(2));
    assert_eq!(hlab(&["run", "nowhere.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(hlab(&["verify-all", "--filter", "nonsense"], dir.path()).status.code(), Some(2));
    assert_eq!(hlab(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn repeated_runs_write_identical_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("point_charge.toml");
    let read = |sub: &str, f: &str| fs::read(dir.path().join(sub).join(f)).unwrap();
    assert_eq!(hlab(&["run", &cfg, "--out", "a"], dir.path()).status.code(), Some(0));
    assert_eq!(hlab(&["run", &cfg, "--out", "b"], dir.path()).status.code(), Some(0));
    let mut compared = 0;
    for entry in fs::read_dir(dir.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name != "metadata.json" {
            assert_eq!(read("a", &name), read("b", &name), "{name} differs");
            compared += 1;
        }
    }
    assert!(compared >= 4);
}

#[test]
fn smoke_suite_runs_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let out = hlab(&["verify-all", "--filter", "smoke", "--out", "v"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("v/metadata.json")).unwrap()).unwrap();
    assert!(meta["wall_seconds"].as_f64().unwrap() < 30.0);
    assert!(dir.path().join("v/summary.json").is_file());
}

#[test]
fn version_prints() {
    let out = hlab(&["version"], Path::new("."));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("hlab "));
}
