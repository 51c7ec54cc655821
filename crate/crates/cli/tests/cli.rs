//! End-to-end checks of the `dqm` binary and its exit-code contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dqm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqm"))
        .args(args)
        .output()
        .expect("spawn dqm")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, profile: &str, duration: &str, seed: &str) -> PathBuf {
    let path = dir.join(name);
    let out = dqm(&[
        "synth",
        "--profile",
        profile,
        "--duration-s",
        duration,
        "--rate-hz",
        "200",
        "--out",
        p(&path),
        "--seed",
        seed,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

#[test]
fn synth_writes_duration_times_rate_rows_that_reparse() {
    let dir = tempfile::tempdir().unwrap();
    let path = synth(dir.path(), "still.csv", "stationary", "10", "0");
    let text = std::fs::read_to_string(&path).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 2000);

    let traj = dqm_core::imu_io::parse_imu_str(&text).unwrap();
    let again = dqm_core::imu_io::synth_trajectory(
        dqm_core::imu_io::Profile::Stationary,
        10.0,
        200.0,
        39.975_172,
        30.0,
        0,
    )
    .unwrap();
    assert_eq!(traj, again);
}

#[test]
fn synth_rejects_unknown_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = dqm(&[
        "synth",
        "--profile",
        "hover",
        "--duration-s",
        "1",
        "--rate-hz",
        "1",
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("hover"));
}

#[test]
fn synth_rejects_non_positive_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dqm(&[
        "synth",
        "--profile",
        "stationary",
        "--duration-s",
        "1",
        "--rate-hz",
        "0",
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn train_without_imu_prints_usage() {
    let out = dqm(&["train", "--out-model", "m.ckpt"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("Usage"));
}

#[test]
fn unknown_reward_lists_all_seven_names() {
    let dir = tempfile::tempdir().unwrap();
    let imu = synth(dir.path(), "w.csv", "random_walk", "1", "0");
    let out = dqm(&[
        "train",
        "--imu",
        p(&imu),
        "--out-model",
        p(&dir.path().join("m")),
        "--reward",
        "cubic",
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    for name in [
        "inverse_proportion",
        "sigmoid",
        "inverse_log",
        "inverse_quadratic",
        "inverse_sin",
        "inverse_cos",
        "inverse_tan",
    ] {
        assert!(err.contains(name), "missing {name} in {err}");
    }
}

#[test]
fn train_writes_checkpoint_and_one_curve_row_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let imu = synth(dir.path(), "w.csv", "random_walk", "1", "3");
    let model = dir.path().join("m.ckpt");
    let curves = dir.path().join("curves");
    let out = dqm(&[
        "train",
        "--imu",
        p(&imu),
        "--out-model",
        p(&model),
        "--curves",
        p(&curves),
        "--episodes",
        "4",
        "--svg",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(model.exists());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 4);
    let reward = std::fs::read_to_string(curves.join("reward_curve.csv")).unwrap();
    assert_eq!(reward.lines().count(), 1 + 4);
    assert!(curves.join("reward_curve.svg").exists());
    assert!(curves.join("loss_curve.svg").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let imu = synth(dir.path(), "w.csv", "random_walk", "0.5", "0");
    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"BATCH_SIZE": 16, "LR": 0.01, "episodes": 3}"#).unwrap();
    let dump = dir.path().join("effective.json");
    let out = dqm(&[
        "train",
        "--imu",
        p(&imu),
        "--out-model",
        p(&dir.path().join("m")),
        "--config",
        p(&config),
        "--lr",
        "0.005",
        "--dump-config",
        p(&dump),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let eff = dqm_core::Hyperparams::from_file(&dump).unwrap();
    assert_eq!(eff.batch_size, 16);
    assert_eq!(eff.lr, 0.005);
    assert_eq!(eff.episodes, 3);
    assert_eq!(eff.gamma, 0.9);
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let imu = synth(dir.path(), "w.csv", "stationary", "0.1", "0");
    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"warp_factor": 9}"#).unwrap();
    let out = dqm(&[
        "train",
        "--imu",
        p(&imu),
        "--out-model",
        p(&dir.path().join("m")),
        "--config",
        p(&config),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn malformed_imu_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let imu = dir.path().join("bad.csv");
    std::fs::write(&imu, "#ts\n1,0,0,0,9.8,0\n").unwrap();
    let out = dqm(&[
        "train",
        "--imu",
        p(&imu),
        "--out-model",
        p(&dir.path().join("m")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line"));
}

#[test]
fn eval_warns_only_on_foreign_data() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.csv", "random_walk", "0.5", "1");
    let b = synth(dir.path(), "b.csv", "random_walk", "0.5", "2");
    let model = dir.path().join("m.ckpt");
    let out = dqm(&[
        "train",
        "--imu",
        p(&a),
        "--out-model",
        p(&model),
        "--episodes",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let same = dqm(&[
        "eval",
        "--imu",
        p(&a),
        "--model",
        p(&model),
        "--episodes",
        "2",
    ]);
    assert_eq!(code(&same), 0);
    assert!(!stderr(&same).contains("warning"));

    let curves = dir.path().join("val");
    let other = dqm(&[
        "eval",
        "--imu",
        p(&b),
        "--model",
        p(&model),
        "--episodes",
        "3",
        "--curves",
        p(&curves),
    ]);
    assert_eq!(code(&other), 0);
    assert!(stderr(&other).contains("warning"));
    assert_eq!(String::from_utf8(other.stdout).unwrap().lines().count(), 3);
    assert!(curves.join("loss_curve.csv").exists());
}

#[test]
fn eval_with_invalid_model_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let imu = synth(dir.path(), "a.csv", "stationary", "0.1", "0");
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(
        code(&dqm(&["eval", "--imu", p(&imu), "--model", p(&junk)])),
        2
    );
    assert_eq!(
        code(&dqm(&[
            "eval",
            "--imu",
            p(&imu),
            "--model",
            p(&dir.path().join("absent"))
        ])),
        2
    );
}

#[test]
fn stationary_propagation_stays_at_default_position() {
    let dir = tempfile::tempdir().unwrap();
    let imu = synth(dir.path(), "s.csv", "stationary", "10", "0");
    let nav = dir.path().join("nav.csv");
    let out = dqm(&["propagate", "--imu", p(&imu), "--out", p(&nav)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&nav).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t_ns,lat_deg,lon_deg,alt_m,vn_mps,ve_mps,vd_mps,roll_deg,pitch_deg,yaw_deg"
    );
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((last[1] - 39.975172).abs() <= 1e-9);
    assert!((last[2] - 116.344695283).abs() <= 1e-9);
    assert!((last[3] - 30.0).abs() <= 1e-9);
}

#[test]
fn propagate_honours_init_file() {
    let dir = tempfile::tempdir().unwrap();
    let imu = synth(dir.path(), "s.csv", "stationary", "1", "0");
    let init = dir.path().join("init.json");
    std::fs::write(
        &init,
        r#"{"lat_deg": 10.0, "lon_deg": -20.0, "alt_m": 5.0, "yaw_deg": 45.0}"#,
    )
    .unwrap();
    let nav = dir.path().join("nav.csv");
    let out = dqm(&[
        "propagate",
        "--imu",
        p(&imu),
        "--out",
        p(&nav),
        "--init",
        p(&init),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&nav).unwrap();
    let first: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((first[2] + 20.0).abs() < 1e-9);
    assert!((first[9] - 45.0).abs() < 1e-9);
}

#[test]
fn pitch_ninety_is_a_numeric_failure_naming_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let imu = synth(dir.path(), "s.csv", "stationary", "1", "0");
    let init = dir.path().join("init.json");
    std::fs::write(&init, r#"{"pitch_deg": 90.0}"#).unwrap();
    let out = dqm(&[
        "propagate",
        "--imu",
        p(&imu),
        "--out",
        p(&dir.path().join("n")),
        "--init",
        p(&init),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("sample 1"), "{}", stderr(&out));
}

#[test]
fn help_lists_table_defaults() {
    let out = dqm(&["train", "--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in [
        "BATCH_SIZE 32",
        "LR 0.001",
        "GAMMA 0.9",
        "TARGET_REPLACE_ITER 100",
        "MEMORY_CAPACITY 2000",
        "kd 0.2",
    ] {
        assert!(text.contains(needle), "help lacks {needle}");
    }
}

#[test]
fn synth_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.csv", "random_walk", "2", "7");
    let b = synth(dir.path(), "b.csv", "random_walk", "2", "7");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}
