use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delayswitch")).args(args).output().expect("spawn")
}

fn out_dir(tmp: &Path, name: &str) -> PathBuf {
    tmp.join(name)
}

const SIM: &[&str] = &["simulate", "--rule", "1", "--g", "cos", "--a", "2.5", "--b", "2", "--tau", "0.25", "--s", "-0.3"];

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let mut args = SIM.to_vec();
    args.extend_from_slice(&["--theta0", "0.5", "--phi0", "-0.15", "--out", out.to_str().unwrap()]);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn simulate_writes_trajectory_and_events() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "sim");
    let r = simulate(&out, &["--tmax", "5"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let traj = fs::read_to_string(out.join("trajectory_0.csv")).unwrap();
    assert!(traj.starts_with("t,theta,phi,control_on,H\n"));
    assert!(traj.lines().count() > 400);
    assert!(out.join("events_0.csv").exists());
}

#[test]
fn zero_duration_gives_start_row_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "zero");
    let r = simulate(&out, &["--tmax", "0"]);
    assert!(r.status.success());
    let traj = fs::read_to_string(out.join("trajectory_0.csv")).unwrap();
    assert!(traj.lines().count() <= 2, "{traj}");
}

#[test]
fn runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (u, v) = (out_dir(tmp.path(), "u"), out_dir(tmp.path(), "v"));
    assert!(simulate(&u, &["--tmax", "10"]).status.success());
    assert!(simulate(&v, &["--tmax", "10"]).status.success());
    for f in ["trajectory_0.csv", "events_0.csv"] {
        assert_eq!(fs::read(u.join(f)).unwrap(), fs::read(v.join(f)).unwrap());
    }
}

#[test]
fn config_file_matches_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.conf");
    let via_cfg = out_dir(tmp.path(), "cfg");
    fs::write(
        &cfg,
        format!(
            "# comment\ncommand = simulate\nrule = 1\ng = cos\na = 2.5\nb = 2\ntau = 0.25\ns = -0.3\n\
             theta0 = 0.5\nphi0 = -0.15\ntmax = 4\nout = {}\n",
            via_cfg.display()
        ),
    )
    .unwrap();
    assert!(run(&["run", "--config", cfg.to_str().unwrap()]).status.success());
    let via_flags = out_dir(tmp.path(), "flags");
    assert!(simulate(&via_flags, &["--tmax", "4"]).status.success());
    let f = "trajectory_0.csv";
    assert_eq!(fs::read(via_cfg.join(f)).unwrap(), fs::read(via_flags.join(f)).unwrap());
}

#[test]
fn set_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "set");
    assert!(simulate(&out, &["--tmax", "5", "--set", "tmax=1"]).status.success());
    let traj = fs::read_to_string(out.join("trajectory_0.csv")).unwrap();
    let last: f64 = traj.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((last - 1.0).abs() < 1e-9, "{last}");
}

#[test]
fn command_mismatch_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("x.conf");
    fs::write(&cfg, "command = scan\n").unwrap();
    let r = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn empty_grid_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "g");
    let r = run(&[
        "asymptote", "--set", "curve=dib", "--b", "2", "--s", "-0.01", "--set", "a_min=1.1", "--set", "a_max=1.5",
        "--set", "a_n=0", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("empty grid"));
}

#[test]
fn singular_asymptote_rows_are_marked() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "asym");
    let r = run(&[
        "asymptote", "--set", "curve=dib", "--b", "2", "--s", "-0.01", "--set", "a_min=1.1", "--set", "a_max=2.0",
        "--set", "a_n=10", "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(out.join("asymptote.csv")).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.ends_with("nan,skipped_singular"), "{last}");
    assert_eq!(text.lines().filter(|l| l.ends_with(",ok")).count(), 9, "{text}");
}

#[test]
fn bad_arguments_exit_one_and_help_exits_zero() {
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--a"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--a", "abc"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--set", "nokey"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["simulate", "--help"]).status.code(), Some(0));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let r = run(&["run", "--config", "/nonexistent/x.conf"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let r = simulate(&blocker.join("sub"), &["--tmax", "1"]);
    assert_eq!(r.status.code(), Some(2));
}
