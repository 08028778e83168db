use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_timing-games"));
    cmd.env_remove("TIMING_GAMES_OUT").env_remove("TIMING_GAMES_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

const SMALL: &str = r#""params": {"attester_count": 40, "horizon_slots": 12}"#;

fn small_configs() -> Vec<(&'static str, String)> {
    vec![
        ("simulate", format!(r#"{{{SMALL}, "settings": {{"runs": 2}}}}"#)),
        ("sweep", format!("{{{SMALL}}}")),
        (
            "check-equilibrium",
            format!(r#"{{{SMALL}, "settings": {{"delta_star_us": [0, 6000000], "proposer_grid_points": 6}}}}"#),
        ),
        (
            "best-response",
            format!(r#"{{{SMALL}, "settings": {{"start_us": 2000000, "end_us": 4000000, "step_us": 500000, "runs_per_point": 5}}}}"#),
        ),
        (
            "mvot",
            format!(r#"{{{SMALL}, "settings": {{"generator": {{"n_slots": 8, "bids_per_slot": 30}}, "export_bids": true}}}}"#),
        ),
        ("curves", format!(r#"{{{SMALL}, "settings": {{"mode": "laggy", "runs": 3}}}}"#)),
    ]
}

#[test]
fn every_subcommand_is_reproducible_from_its_echo() {
    let tmp = tempfile::tempdir().unwrap();
    for (command, config) in small_configs() {
        let cfg = write(tmp.path(), &format!("{command}.json"), &config);
        let a = tmp.path().join(format!("{command}-a"));
        let b = tmp.path().join(format!("{command}-b"));
        let out = run(&[command, "--config", &cfg, "--out", a.to_str().unwrap()]);
        assert!(out.status.success(), "{command}: {}", String::from_utf8_lossy(&out.stderr));
        let echo = a.join("effective_config.json");
        let out = run(&[command, "--config", echo.to_str().unwrap(), "--out", b.to_str().unwrap()]);
        assert!(out.status.success(), "{command}: {}", String::from_utf8_lossy(&out.stderr));
        let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
        assert!(fa.len() >= 2, "{command}: {fa:?}");
        assert_eq!(fa, fb, "{command}");
    }
}

#[test]
fn preset_and_environment_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("env-out");
    let out = bin()
        .args(["sweep", "--preset", "streamlet"])
        .env("TIMING_GAMES_OUT", &out_dir)
        .env("TIMING_GAMES_SEED", "31")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(echo["preset"], "streamlet");
    assert_eq!(echo["params"]["seed"], 31);
    assert_eq!(echo["params"]["vote_threshold"].as_f64().unwrap(), 2.0 / 3.0);

    // Flags beat the environment.
    let out_dir2 = tmp.path().join("flag-out");
    let out = bin()
        .args(["sweep", "--seed", "5", "--out", out_dir2.to_str().unwrap()])
        .env("TIMING_GAMES_SEED", "31")
        .output()
        .unwrap();
    assert!(out.status.success());
    let echo: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir2.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(echo["params"]["seed"], 5);
}

#[test]
fn ethereum_preset_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "eth.json", r#"{"preset": "ethereum", "params": {"horizon_slots": 3, "attester_count": 10}}"#);
    let out_dir = tmp.path().join("o");
    let out = run(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let echo: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(echo["params"]["slot_length_us"], 12_000_000);
    assert_eq!(echo["params"]["attestation_deadline_us"], 4_000_000);
}

#[test]
fn validation_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("never");
    let cases = [
        (
            "simulate",
            r#"{"params": {"slot_length_us": 1000000, "mean_latency_us": 800000}}"#,
            "at least twice mean_latency_us",
        ),
        ("simulate", r#"{"params": {"gamma": 0.5}, "bogus": 1}"#, "bogus"),
        ("curves", r#"{"settings": {}}"#, "mode"),
        ("sweep", r#"{"command": "mvot"}"#, "mvot"),
        ("sweep", r#"{"settings": {"delta_star_us": [-1]}}"#, "outside"),
    ];
    for (command, config, needle) in cases {
        let cfg = write(tmp.path(), "bad.json", config);
        let out = run(&[command, "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert!(!out.status.success(), "{config}");
        let stderr = String::from_utf8_lossy(&out.stderr).to_lowercase();
        assert!(stderr.contains(needle), "{config}: {stderr}");
    }
    let out = run(&["sweep", "--preset", "casper", "--out", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!out_dir.exists());
}
