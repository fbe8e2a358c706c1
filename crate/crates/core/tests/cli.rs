use std::path::Path;
use std::process::{Command, Output};

fn t2mac(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_t2mac"))
        .args(args)
        .current_dir(cwd)
        .env_remove("T2MAC_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 6] = ["--set", "eval_interval=5", "--set", "eval_episodes=3", "--set", "batch_size=4"];

fn small_run(dir: &Path, variant: &str, seeds: &str) -> Output {
    let mut args = vec!["run", "--env", "hallway_easy", "--variant", variant, "--seeds", seeds, "--episodes", "10", "--output-dir", "out"];
    args.extend(SMALL);
    t2mac(&args, dir)
}

#[test]
fn missing_env_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "variant = \"t2mac\"\n").unwrap();
    let out = t2mac(&["run", "--config", "c.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("env"), "{}", stderr(&out));
    let out = t2mac(&["run"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_values_and_unknown_keys_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--env", "moon"],
        vec!["run", "--env", "hallway_easy", "--variant", "loud"],
        vec!["run", "--env", "hallway_easy", "--set", "learning_rat=0.1"],
        vec!["run", "--env", "hallway_easy", "--set", "gamma=2.0"],
        vec!["frobnicate"],
    ] {
        let out = t2mac(&args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
    }
    assert_eq!(t2mac(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn run_writes_per_seed_curves_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), "t2mac", "1,2");
    assert!(out.status.success(), "{}", stderr(&out));
    let root = dir.path().join("out/hallway_easy/t2mac");
    for seed in [1, 2] {
        let metrics = std::fs::read_to_string(root.join(format!("seed_{seed}/metrics.csv"))).unwrap();
        let mut lines = metrics.lines();
        assert_eq!(lines.next(), Some("episode,td_loss,bce_loss,eval_success,comm_rate,mean_uncertainty"));
        let episodes: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(episodes, ["5", "10"]);
        assert!(root.join(format!("seed_{seed}/checkpoint.bin")).is_file());
    }
    let summary = std::fs::read_to_string(root.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with("env,variant,seed,episodes,updates,final_success,comm_rate,mean_uncertainty"));
    // the echoed config replays
    let echo = root.join("config.toml");
    let replay = t2mac(&["eval", "--config", echo.to_str().unwrap(), "--checkpoint", root.join("seed_1/checkpoint.bin").to_str().unwrap(), "--seed", "1"], dir.path());
    assert!(replay.status.success(), "{}", stderr(&replay));
}

#[test]
fn eval_rejects_a_checkpoint_of_another_shape() {
    let dir = tempfile::tempdir().unwrap();
    assert!(small_run(dir.path(), "baseline", "0").status.success());
    assert!(small_run(dir.path(), "t2mac", "0").status.success());
    let out = t2mac(
        &["eval", "--config", "out/hallway_easy/t2mac/config.toml", "--checkpoint", "out/hallway_easy/baseline/seed_0/checkpoint.bin"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn report_and_curve_export() {
    let dir = tempfile::tempdir().unwrap();
    assert!(small_run(dir.path(), "fullcomm", "0,1").status.success());
    assert!(small_run(dir.path(), "nocomm", "0,1").status.success());
    let out = t2mac(
        &["report", "--comm", "out/hallway_easy/fullcomm/summary.csv", "--nocomm", "out/hallway_easy/nocomm/summary.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("env,method,comm_success,nocomm_success,improvement,comm_rate,efficiency,zero_baseline"), "{text}");
    assert!(text.contains("hallway_easy,fullcomm"), "{text}");

    let out = t2mac(&["export-curves", "out", "--out", "curves"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let long = std::fs::read_to_string(dir.path().join("curves/curves_long.csv")).unwrap();
    // 2 variants x 2 seeds x 2 eval points
    assert_eq!(long.lines().count(), 1 + 8);
    let bands = std::fs::read_to_string(dir.path().join("curves/curves_bands.csv")).unwrap();
    assert_eq!(bands.lines().count(), 1 + 4);
    assert!(bands.lines().skip(1).all(|l| l.split(',').nth(3) == Some("2")), "{bands}");

    // unreadable inputs are reported like bad configuration
    let out = t2mac(&["report", "--comm", "missing.csv", "--nocomm", "missing.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
