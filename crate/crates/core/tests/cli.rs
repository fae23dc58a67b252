//! The `fscan` binary end to end, on small grids.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fscan::io::{read_scan, read_trajectory, write_scan, SCAN_HEADER_LEN};
use fscan::{MatchConfig, Pose2D};
use tempfile::TempDir;

fn fscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fscan"))
        .args(args)
        .env("FSCAN_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fscan(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(&path, MatchConfig::with_resolution(63, 64).to_toml()).unwrap();
    path
}

fn parse_pose(line: &str) -> Pose2D {
    let v: Vec<f64> = line.trim().split(',').map(|x| x.parse().unwrap()).collect();
    Pose2D::new(v[0], v[1], v[2])
}

fn synth(dir: &Path, cfg: &Path, seed: &str, count: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(format!("seq_{seed}_{count}"));
    let mut args = vec![
        "synth",
        "--out",
        s(&out),
        "--config",
        s(cfg),
        "--seed",
        seed,
        "--count",
        count,
    ];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn match_of_a_scan_with_itself_is_identity() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let seq = synth(tmp.path(), &cfg, "3", "1", &[]);
    let a = seq.join("scan_0000.fscn");
    let p = parse_pose(&ok(&["match", s(&a), s(&a), "--config", s(&cfg)]));
    assert!(p.theta.abs() < 1e-3, "{p}");
    assert!(p.tx.hypot(p.ty) < 0.05, "{p}");
}

#[test]
fn init_config_round_trips() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("default.toml");
    ok(&["init-config", s(&path)]);
    let cfg = MatchConfig::from_toml(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(cfg.n_theta, 733);
    assert_eq!(cfg.delta_xy, 0.4);
    assert_eq!(cfg, MatchConfig::default());
}

#[test]
fn synth_single_frame_writes_identity_ground_truth() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let seq = synth(tmp.path(), &cfg, "5", "1", &[]);
    let scans: Vec<_> = fs::read_dir(&seq)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "fscn"))
        .collect();
    assert_eq!(scans.len(), 1);
    let gt = read_trajectory(&seq.join("gt.csv")).unwrap();
    assert_eq!(gt.len(), 1);
    assert_eq!(gt[0], Pose2D::identity());
    assert!(seq.join("scene.toml").exists());
}

#[test]
fn synth_rejects_zero_frames() {
    let tmp = TempDir::new().unwrap();
    let out = fscan(&["synth", "--out", s(&tmp.path().join("x")), "--count", "0"]);
    assert!(!out.status.success());
}

#[test]
fn synth_pair_is_recovered_by_match() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = tmp.path().join("mid.toml");
    let cfg = MatchConfig::with_resolution(127, 256);
    fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let seq = synth(
        tmp.path(),
        &cfg_path,
        "11",
        "2",
        &["--forward", "3.0", "--yaw-rate", "0.1"],
    );
    let gt = read_trajectory(&seq.join("gt.csv")).unwrap();
    let motion = gt[1];
    let matched = parse_pose(&ok(&[
        "match",
        s(&seq.join("scan_0000.fscn")),
        s(&seq.join("scan_0001.fscn")),
        "--config",
        s(&cfg_path),
    ]));
    // The matcher reports the map from the first scan's frame into the
    // second's, the inverse of the sensor motion.
    let est = matched.inverse();
    assert!(
        (est.theta - motion.theta).abs() <= 2.0 * cfg.delta_theta,
        "{est} vs {motion}"
    );
    assert!(
        (est.tx - motion.tx).hypot(est.ty - motion.ty) <= cfg.delta_xy,
        "{est} vs {motion}"
    );
}

#[test]
fn odometry_of_repeated_scan_is_stationary() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let seq = synth(tmp.path(), &cfg, "2", "1", &[]);
    let scan = read_scan(&seq.join("scan_0000.fscn")).unwrap();
    let dir = tmp.path().join("still");
    fs::create_dir(&dir).unwrap();
    write_scan(&dir.join("scan_0000.fscn"), &scan).unwrap();
    write_scan(&dir.join("scan_0001.fscn"), &scan).unwrap();
    let out = tmp.path().join("odo");
    ok(&["odometry", s(&dir), "--config", s(&cfg), "--out", s(&out)]);
    let traj = read_trajectory(&out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.len(), 2);
    let last = traj[1];
    assert!(
        last.theta.abs() < 1e-3 && last.tx.hypot(last.ty) < 0.05,
        "{last}"
    );
    assert!(!out.join("drift.txt").exists());
}

#[test]
fn odometry_with_ground_truth_reports_drift() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let seq = synth(
        tmp.path(),
        &cfg,
        "8",
        "6",
        &[
            "--forward",
            "1.0",
            "--jitter-translation",
            "0",
            "--jitter-rotation",
            "0",
        ],
    );
    let out = tmp.path().join("odo");
    let text = ok(&[
        "odometry",
        s(&seq),
        "--config",
        s(&cfg),
        "--gt",
        s(&seq.join("gt.csv")),
        "--out",
        s(&out),
    ]);
    assert!(out.join("trajectory.csv").exists());
    assert!(!text.is_empty());
}

#[test]
fn odometry_needs_two_scans() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let seq = synth(tmp.path(), &cfg, "1", "1", &[]);
    let out = fscan(&[
        "odometry",
        s(&seq),
        "--config",
        s(&cfg),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn malformed_scans_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let seq = synth(tmp.path(), &cfg, "4", "1", &[]);
    let good = seq.join("scan_0000.fscn");
    let bytes = fs::read(&good).unwrap();

    let bad_magic = tmp.path().join("magic.fscn");
    let mut b = bytes.clone();
    b[0] = b'X';
    fs::write(&bad_magic, b).unwrap();
    let out = fscan(&["match", s(&bad_magic), s(&good), "--config", s(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed"));

    let nan = tmp.path().join("nan.fscn");
    let mut b = bytes;
    b[SCAN_HEADER_LEN..SCAN_HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&nan, b).unwrap();
    let out = fscan(&["match", s(&nan), s(&good), "--config", s(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn verify_requires_a_known_suite() {
    let out = fscan(&["verify", "--suite", ""]);
    assert_eq!(out.status.code(), Some(2));
    let out = fscan(&["verify", "--suite", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_all_passes() {
    let text = ok(&["verify", "--suite", "all"]);
    assert!(text.contains("0 failed"), "{text}");
}

#[test]
fn bench_prints_csv() {
    let text = ok(&[
        "bench",
        "--n-xy",
        "31",
        "--n-theta",
        "8",
        "--passes",
        "100",
        "--burn-in",
        "10",
    ]);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("workload,n_xy,n_theta,passes,mean_hz,median_ms,p95_ms,host")
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("matcher,31,8,100,"), "{row}");
}

#[test]
fn import_png_produces_a_scan() {
    let tmp = TempDir::new().unwrap();
    let png = tmp.path().join("in.png");
    let img = image::ImageBuffer::from_fn(9, 9, |x, y| image::Luma([(x * 100 + y) as u16]));
    img.save(&png).unwrap();
    let out = tmp.path().join("out.fscn");
    ok(&["import-png", s(&png), s(&out), "--delta", "0.5"]);
    let scan = read_scan(&out).unwrap();
    assert_eq!(scan.spec().n(), 9);
    assert_eq!(scan.values()[[2, 3]], 302.0);
}
