use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tram(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tram"))
        .args(args)
        .env_remove("TRAM_OUT_DIR")
        .output()
        .expect("spawn tram")
}

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/smoke.json")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_smoke(dir: &Path) {
    let o = tram(&["run", "--config", smoke_config().to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn missing_config_is_a_usage_error_naming_the_path() {
    let o = tram(&["run", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.json"));
}

#[test]
fn bad_arguments_exit_with_one_and_help_with_zero() {
    assert_eq!(tram(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tram(&["run"]).status.code(), Some(1));
    let cfg = smoke_config();
    let o = tram(&["run", "--config", cfg.to_str().unwrap(), "--stpes=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stpes"));
    assert_eq!(tram(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let out = file.path().join("below_a_file");
    let o = tram(&["run", "--config", smoke_config().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn smoke_run_then_aggregate_gives_one_row_per_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    run_smoke(dir.path());
    for stem in ["adam_0", "adam_1", "tram_x_0", "tram_x_1"] {
        assert!(dir.path().join(format!("{stem}.json")).is_file());
        assert!(dir.path().join(format!("{stem}.ckpt.json")).is_file());
    }
    let pattern = format!("{}/*.json", dir.path().display());
    let o = tram(&["aggregate", &pattern, "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("adam,2,"));
    assert!(rows[1].starts_with("tram_x,2,"));
}

#[test]
fn overrides_and_environment_redirect_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tram"))
        .args(["run", "--config", smoke_config().to_str().unwrap(), "--seeds=[7]", "--algorithms=[\"sgd\"]"])
        .env("TRAM_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let written: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(written.len(), 2);
    assert!(dir.path().join("sgd_7.json").is_file());
}

#[test]
fn suite_checkpoint_inspection_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    run_smoke(dir.path());
    let suite = dir.path().join("suite");
    let o = tram(&["suite", "--out", suite.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["suite", "train_split", "val_split", "train", "corr_1", "anti_2"] {
        assert!(suite.join(format!("{name}.json")).is_file(), "{name}");
    }
    let ck = dir.path().join("adam_0.ckpt.json");
    let data = suite.join("anti_1.json");
    let o = tram(&["sharpness", "--checkpoint", ck.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["sharpness"].as_f64().unwrap() >= 0.0);

    let o = tram(&["cka", "--checkpoint", ck.to_str().unwrap(), "--reference", ck.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["cka"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let svg = dir.path().join("plot.svg");
    let pattern = format!("{}/*_*.json", dir.path().display());
    let o = tram(&["plot", &pattern, "--y", "corr_1,corr_2", "--out", svg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("<metadata>"));

    let missing = dir.path().join("nothing.json");
    let o = tram(&["sharpness", "--checkpoint", missing.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
