//! End-to-end tests of the `spinkick` binary: exit codes, determinism,
//! file formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinkick"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spinkick-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn version_flag_prints_semver() {
    let out = run(&["--version"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("spinkick 0.1.0"), "{text}");
}

#[test]
fn trajectory_output_is_deterministic_across_thread_counts() {
    let dir = tmpdir("det");
    let out1 = dir.join("a.csv");
    let out2 = dir.join("b.csv");
    let args = |path: &Path| {
        vec![
            "trajectory".to_string(),
            "--R".into(),
            "0.106".into(),
            "--v".into(),
            "2.0".into(),
            "--z0".into(),
            "0.70710678,0.70710678".into(),
            "--steps".into(),
            "8".into(),
            "--seed".into(),
            "42".into(),
            "--output".into(),
            path.display().to_string(),
        ]
    };
    let o1 = {
        let mut cmd = bin();
        cmd.args(args(&out1)).env("RAYON_NUM_THREADS", "1");
        cmd.output().unwrap()
    };
    let o2 = {
        let mut cmd = bin();
        cmd.args(args(&out2)).env("RAYON_NUM_THREADS", "4");
        cmd.output().unwrap()
    };
    assert!(o1.status.success() && o2.status.success());
    let c1 = read(&out1);
    assert_eq!(c1, read(&out2), "outputs differ across thread counts");
    assert!(c1.starts_with("step,outcome,cond_prob,cum_prob,energy\n"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn replay_reproduces_sampled_rows() {
    let dir = tmpdir("replay");
    let sampled = dir.join("sampled.csv");
    let out = run(
        &[
            "trajectory",
            "--R",
            "0.37",
            "--v",
            "1.5",
            "--z0",
            "0.4,-0.6",
            "--steps",
            "6",
            "--seed",
            "11",
            "--output",
            sampled.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    // summary line ends with "record <+-...>"
    let record = stdout.trim().rsplit(' ').next().unwrap().trim_end_matches(')');
    assert_eq!(record.len(), 6, "unexpected summary: {stdout}");

    let replayed = dir.join("replayed.csv");
    let out = run(
        &[
            "replay",
            "--R",
            "0.37",
            "--v",
            "1.5",
            "--z0",
            "0.4,-0.6",
            "--outcomes",
            record,
            "--output",
            replayed.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success());
    assert_eq!(read(&sampled), read(&replayed));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn csv_numbers_round_trip() {
    let dir = tmpdir("roundtrip");
    let path = dir.join("t.csv");
    let out = run(
        &[
            "trajectory",
            "--R",
            "0.106",
            "--v",
            "2.0",
            "--z0",
            "0.70710678,0.70710678",
            "--steps",
            "6",
            "--seed",
            "1",
            "--output",
            path.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success());
    let text = read(&path);
    assert!(text.ends_with('\n'));
    assert!(!text.contains('\r'));
    for line in text.lines().skip(1) {
        for field in line.split(',').skip(2) {
            let value: f64 = field.parse().unwrap();
            // shortest round-trip formatting: parse then re-print identically
            assert_eq!(format!("{value}"), field);
        }
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes_follow_error_categories() {
    let dir = tmpdir("codes");
    // 2: missing required field
    let out = run(&["ensemble", "--v", "1.0"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error[config]"), "{err}");

    // 2: malformed flag value
    let out = run(
        &["ensemble", "--R", "0.2", "--v", "1.0", "--z0", "oops", "--steps", "2"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));

    // 3: capacity (steps beyond max_steps)
    let out = run(
        &[
            "ensemble", "--R", "0.2", "--v", "1.0", "--z0", "0,0", "--steps", "25",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error[capacity]"), "{err}");

    // 3: energy cap on trajectory
    let out = run(
        &[
            "trajectory", "--R", "0.2", "--v", "1.0", "--z0", "0,0", "--steps", "16",
            "--seed", "1",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));

    // 4: impossible outcome (v = 0 cannot flip the spin)
    let traj = dir.join("t.csv");
    let out = run(
        &[
            "replay", "--R", "0.2", "--v", "0.0", "--z0", "0.5,0.5", "--outcomes", "+-",
            "--output", traj.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error[impossible-outcome]"), "{err}");

    // 5: truncation (validate with a hopeless n_max)
    let out = run(
        &[
            "validate", "--R", "0.3", "--v", "2.0", "--z0", "1.0,1.0", "--steps", "3",
            "--seed", "1", "--n-max", "8", "--draws", "2", "--output",
            dir.join("v.csv").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(5));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn echo_csv_starts_at_unity() {
    let dir = tmpdir("echo");
    let path = dir.join("echo.csv");
    let out = run(
        &[
            "echo",
            "--R",
            "0.3710",
            "--v",
            "2.0",
            "--z0",
            "0.70710678,0.70710678",
            "--delta-R",
            "0.01",
            "--steps",
            "5",
            "--seed",
            "9",
            "--output",
            path.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success());
    let text = read(&path);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,L"));
    assert_eq!(lines.next(), Some("0,1"));
    assert_eq!(text.lines().count(), 7);
    for line in text.lines().skip(1) {
        let l: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&l));
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn resonance_prints_paper_ratio() {
    let out = run(&["resonance"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("R*=0.3710"), "{text}");
    assert!(text.contains("P(R*)=14.30"), "{text}");
}

#[test]
fn default_seed_warns_on_stderr() {
    let dir = tmpdir("warn");
    let path = dir.join("t.csv");
    let out = run(
        &[
            "trajectory", "--R", "0.2", "--v", "1.0", "--z0", "0,0", "--steps", "2",
            "--output", path.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("deterministic default seed 0"), "{err}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn husimi_respects_explicit_grid() {
    let dir = tmpdir("husimi");
    let path = dir.join("h.csv");
    let out = run(
        &[
            "husimi", "--R", "0.25", "--v", "1.0", "--z0", "0,0", "--steps", "3",
            "--q-grid", "-1:1:1", "--p-grid", "0:2:1", "--output", path.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success());
    let text = read(&path);
    assert_eq!(text.lines().next(), Some("q,p,h"));
    assert_eq!(text.lines().count(), 1 + 3 * 3);
    assert!(text.lines().nth(1).unwrap().starts_with("-1,0,"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_drives_a_run() {
    let dir = tmpdir("config");
    let cfg = dir.join("run.json");
    let out_path = dir.join("moments.csv");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"subcommand": "ensemble", "r": 0.106, "v": 2.0, "z0": [0.70710678, 0.70710678],
                "steps": 4, "output": "{}"}}"#,
            out_path.display()
        ),
    )
    .unwrap();
    let out = run(&["ensemble", "--config", cfg.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{:?}", out);
    let text = read(&out_path);
    assert_eq!(text.lines().count(), 6);
    // flag overrides the file
    let out = run(
        &["ensemble", "--config", cfg.to_str().unwrap(), "--steps", "2"],
        &[],
    );
    assert!(out.status.success());
    assert_eq!(read(&out_path).lines().count(), 4);
    std::fs::remove_dir_all(&dir).ok();
}
