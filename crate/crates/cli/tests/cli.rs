use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drl_cli::*;
use drl_core::race::log::evaluate_log;
use drl_core::seed::{SeedSplitter, Stream};
use drl_core::track::Track;
use tempfile::TempDir;

fn track(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tracks").join(format!("{name}.json"))
}

fn drl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drl"))
        .args(args)
        .env_remove(LOG_LEVEL_VAR)
        .output()
        .unwrap()
}

fn race(tier: u8, opponent: OpponentKind, seed: u64, out: &Path) -> (drl_core::sim::RaceOutcome, String) {
    let mut text = Vec::new();
    let o = cmd_race(&RaceArgs::new(track("circle12"), tier, opponent, seed, out), &mut text).unwrap();
    (o, String::from_utf8(text).unwrap())
}

#[test]
fn race_log_evaluates_to_the_printed_ranking() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("race.log");
    let (outcome, printed) = race(1, OpponentKind::RandomSpline, 7, &log);
    for p in &outcome.progress {
        assert!(p.finish_time.is_some() || p.disqualified);
    }
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let eval = cmd_evaluate(&EvaluateArgs { log }, &mut out, &mut err).unwrap();
    assert_eq!(eval.ranking(), outcome.ranking);
    assert_eq!(String::from_utf8(out).unwrap(), printed);
    assert!(err.is_empty());
    assert!(printed.starts_with(&format!("ranking: {}\n", outcome.ranking.join(","))));
}

#[test]
fn noise_free_tier_two_matches_solo_tier_one() {
    let dir = TempDir::new().unwrap();
    let (solo, _) = race(1, OpponentKind::None, 4, &dir.path().join("a.log"));
    let mut args = RaceArgs::new(track("circle12"), 2, OpponentKind::None, 4, dir.path().join("b.log"));
    args.noise_sigma = Some(0.0);
    let blind = cmd_race(&args, &mut Vec::new()).unwrap();
    let (a, b) = (&solo.progress[0].gate_split_times, &blind.progress[0].gate_split_times);
    assert_eq!(a.len(), 12);
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-6));
}

#[test]
fn repeated_races_write_identical_logs() {
    let dir = TempDir::new().unwrap();
    let p = |n: &str| dir.path().join(n);
    race(3, OpponentKind::RandomSpline, 21, &p("a.log"));
    race(3, OpponentKind::RandomSpline, 21, &p("b.log"));
    race(3, OpponentKind::RandomSpline, 22, &p("c.log"));
    let read = |n: &str| fs::read(p(n)).unwrap();
    assert_eq!(read("a.log"), read("b.log"));
    assert_ne!(read("a.log"), read("c.log"));
}

#[test]
fn metrics_print_the_summary_row() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, out: &str| {
        let mut text = Vec::new();
        let args = MetricsArgs {
            track: track(name),
            out: dir.path().join(out),
            camera: CameraArgs { camera_fov_deg: 90.0 },
        };
        let report = cmd_metrics(&args, &mut text).unwrap();
        (report, String::from_utf8(text).unwrap())
    };
    let (_, text) = run("straight", "s");
    let row = text.lines().nth(1).unwrap();
    assert_eq!(row.split(',').nth(1), Some("0.0000"));
    let (report, _) = run("circle48", "c1");
    assert!((report.curvature_metric / 0.05 - 1.0).abs() < 0.02);
    run("circle48", "c2");
    for f in ["curvature.csv", "visibility.csv", "summary.csv"] {
        assert_eq!(fs::read(dir.path().join("c1").join(f)).unwrap(), fs::read(dir.path().join("c2").join(f)).unwrap());
    }
}

#[test]
fn truncated_log_ranks_the_parseable_prefix() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("race.log");
    race(1, OpponentKind::RandomSpline, 2, &log);
    let text = fs::read_to_string(&log).unwrap();
    let cut = &text[..text.len() - 20];
    let last_nl = cut.rfind('\n').unwrap();
    fs::write(&log, cut).unwrap();
    let prefix = evaluate_log(cut[..=last_nl].as_bytes()).unwrap();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let eval = cmd_evaluate(&EvaluateArgs { log }, &mut out, &mut err).unwrap();
    assert_eq!(eval.ranking(), prefix.ranking());
    assert_eq!(eval.leaderboard(), prefix.leaderboard());
    assert!(String::from_utf8(err).unwrap().starts_with("warning:"));
}

#[test]
fn corrupted_line_exits_four_and_names_it() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("race.log");
    race(1, OpponentKind::RandomSpline, 2, &log);
    let text = fs::read_to_string(&log).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[16] = "0.080 ego 1 2 3 x 0 0 0 -1 0 0";
    fs::write(&log, lines.join("\n") + "\n").unwrap();
    let out = drl(&["evaluate", log.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 17"));
}

fn parse_labels(dir: &Path) -> (Vec<f64>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(dir.join("labels.csv")).unwrap();
    let mut lines = text.lines();
    let intrinsics = lines
        .next()
        .unwrap()
        .trim_start_matches("# ")
        .split(' ')
        .map(|kv| kv.split_once('=').unwrap().1.parse().unwrap())
        .collect();
    assert_eq!(lines.next(), Some(LABELS_HEADER));
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (intrinsics, rows)
}

fn rotate(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    let [w, x, y, z] = q;
    let u = [x, y, z];
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let t = cross(u, v).map(|c| 2.0 * c);
    let ut = cross(u, t);
    [0, 1, 2].map(|i| v[i] + w * t[i] + ut[i])
}

#[test]
fn dataset_labels_reproject_and_count() {
    let dir = TempDir::new().unwrap();
    let args = DatasetArgs {
        track: track("circle12"),
        frames: 10,
        seed: 3,
        out: dir.path().to_path_buf(),
        camera: CameraArgs { camera_fov_deg: 90.0 },
        dt: 0.005,
    };
    let labels = cmd_dataset(&args, &mut Vec::new()).unwrap();
    assert_eq!(labels.len(), 10);
    for k in 0..10 {
        for suffix in [".ppm", "_seg.pgm", "_depth.pfm"] {
            assert!(dir.path().join(format!("frame_{k:05}{suffix}")).is_file());
        }
    }
    let (c, rows) = parse_labels(dir.path());
    let (fx, fy, cx, cy) = (c[2], c[3], c[4], c[5]);
    assert_eq!(rows.len(), 10);
    let mut projected = 0;
    for r in &rows {
        let (w, h) = (r[4], r[5]);
        let (gp, gq) = ([r[6], r[7], r[8]], [r[9], r[10], r[11], r[12]]);
        let (cp, cq) = ([r[13], r[14], r[15]], [r[16], -r[17], -r[18], -r[19]]);
        let local = [[0.0, w / 2.0, h / 2.0], [0.0, w / 2.0, -h / 2.0], [0.0, -w / 2.0, -h / 2.0], [0.0, -w / 2.0, h / 2.0]];
        for (k, l) in local.iter().enumerate() {
            let g = rotate(gq, *l);
            let world = [0, 1, 2].map(|i| g[i] + gp[i]);
            let body = rotate(cq, [0, 1, 2].map(|i| world[i] - cp[i]));
            let (u, v) = (r[20 + 2 * k], r[21 + 2 * k]);
            if body[0] <= 1e-6 {
                assert!(u.is_nan() && v.is_nan());
                continue;
            }
            let (eu, ev) = (cx + fx * (-body[1] / body[0]), cy + fy * (-body[2] / body[0]));
            assert!((eu - u).abs() < 1.0 && (ev - v).abs() < 1.0, "frame {} corner {k}", r[0]);
            projected += 1;
        }
    }
    assert!(projected >= 20);
    let again = cmd_dataset(&args, &mut Vec::new()).unwrap();
    assert_eq!(labels, again);
}

#[test]
fn scale_jitter_stays_in_range() {
    let t = Track::load(track("circle12")).unwrap();
    let mut rng = SeedSplitter::new(9).rng(Stream::Dataset);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut shift2 = 0.0;
    let n = 1000;
    for k in 0..n {
        let g = &t.gates[k % t.gates.len()];
        let (j, s) = jitter_gate(g, &mut rng);
        assert!((SCALE_JITTER.0..=SCALE_JITTER.1).contains(&s));
        assert!((j.outer_width - g.outer_width * s).abs() < 1e-12);
        assert!((j.inner_height - g.inner_height * s).abs() < 1e-12);
        assert_eq!(j.pose.orientation, g.pose.orientation);
        lo = lo.min(s);
        hi = hi.max(s);
        shift2 += (j.pose.position - g.pose.position).norm_squared();
    }
    assert!(lo < 0.81 && hi > 1.19);
    let sigma = (shift2 / (3 * n) as f64).sqrt();
    assert!((sigma / POSITION_JITTER - 1.0).abs() < 0.08, "{sigma}");
}

#[test]
fn voxelize_writes_both_dumps() {
    let dir = TempDir::new().unwrap();
    let args = VoxelizeArgs {
        track: track("straight"),
        resolution: 0.5,
        out: dir.path().to_path_buf(),
    };
    let grid = cmd_voxelize(&args, &mut Vec::new()).unwrap();
    assert!(grid.occupied_count() > 0);
    let vox = fs::read(dir.path().join("voxels.bin")).unwrap();
    let sdf = fs::read(dir.path().join("sdf.bin")).unwrap();
    assert!(vox.starts_with(b"voxgrid v1 "));
    assert!(sdf.starts_with(b"sdf v1 "));
    let header = sdf.iter().position(|&b| b == b'\n').unwrap() + 1;
    assert_eq!(sdf.len() - header, 4 * grid.len());
}

#[test]
fn perceive_eval_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |sub: &str| {
        let args = PerceiveEvalArgs {
            track: track("circle12"),
            seed: 5,
            out: dir.path().join(sub),
            measurements: 60,
            corner_noise_px: 1.0,
            camera: CameraArgs { camera_fov_deg: 90.0 },
            dt: 0.005,
        };
        cmd_perceive_eval(&args, &mut Vec::new()).unwrap()
    };
    let a = run("a");
    run("b");
    assert_eq!(a.n_detected, 60);
    for f in ["perception.csv", "summary.json"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn unknown_flags_are_rejected_and_help_lists_flags() {
    let subcommands: [(&str, &[&str]); 6] = [
        ("race", &["--track", "--tier", "--opponent", "--seed", "--out", "--noise-sigma", "--camera-fov-deg", "--dt"]),
        ("metrics", &["--track", "--out", "--camera-fov-deg"]),
        ("evaluate", &["LOG"]),
        ("dataset", &["--track", "--frames", "--seed", "--out", "--camera-fov-deg", "--dt"]),
        ("voxelize", &["--track", "--resolution", "--out"]),
        ("perceive-eval", &["--track", "--seed", "--out", "--measurements", "--corner-noise-px", "--camera-fov-deg", "--dt"]),
    ];
    for (sub, flags) in subcommands {
        let help = drl(&[sub, "--help"]);
        assert_eq!(help.status.code(), Some(0));
        let text = String::from_utf8(help.stdout).unwrap();
        for f in flags {
            assert!(text.contains(f), "{sub} help lacks {f}");
        }
        assert_eq!(drl(&[sub, "--no-such-flag"]).status.code(), Some(2), "{sub}");
    }
    assert_eq!(drl(&["fly"]).status.code(), Some(2));
}

#[test]
fn exit_codes_separate_config_and_io_failures() {
    let dir = TempDir::new().unwrap();
    let t = track("circle12");
    let t = t.to_str().unwrap();
    let log = dir.path().join("r.log");
    let log = log.to_str().unwrap();
    let code = |args: &[&str]| drl(args).status.code();
    assert_eq!(code(&["race", "--track", t, "--out", log, "--tier", "4"]), Some(2));
    assert_eq!(code(&["race", "--track", t, "--out", log, "--tier", "2", "--opponent", "random_spline"]), Some(2));
    assert_eq!(code(&["race", "--track", t, "--out", log, "--camera-fov-deg", "200"]), Some(2));
    assert_eq!(code(&["race", "--track", t, "--out", log, "--dt", "0.5"]), Some(2));
    assert_eq!(code(&["race", "--track", t, "--out", log, "--opponent", "kamikaze"]), Some(2));
    assert_eq!(code(&["race", "--track", t, "--out", log, "--noise-sigma", "-1"]), Some(2));
    assert_eq!(code(&["race", "--track", "/no/such/track.json", "--out", log]), Some(3));
    assert_eq!(code(&["race", "--track", t, "--out", "/no/such/dir/r.log"]), Some(3));
    assert_eq!(code(&["evaluate", "/no/such/log"]), Some(3));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"name\": 3}").unwrap();
    assert_eq!(code(&["metrics", "--track", bad.to_str().unwrap(), "--out", log]), Some(2));
    assert_eq!(code(&["race", "--track", t, "--out", log, "--seed", "5"]), Some(0));
}

#[test]
fn log_level_variable_is_validated() {
    let dir = TempDir::new().unwrap();
    let t = track("straight");
    let out = dir.path().join("m");
    let run = |level: &str| {
        Command::new(env!("CARGO_BIN_EXE_drl"))
            .args(["metrics", "--track", t.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env(LOG_LEVEL_VAR, level)
            .output()
            .unwrap()
            .status
            .code()
    };
    for level in LOG_LEVELS {
        assert_eq!(run(level), Some(0));
    }
    assert_eq!(run("verbose"), Some(2));
}
