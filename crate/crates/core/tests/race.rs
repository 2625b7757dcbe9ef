use drl_core::geometry::{Aabb, Gate, Pose, RigidState, Vec3};
use drl_core::race::log::{evaluate_log, LogError, LogHeader, LogWriter};
use drl_core::race::{
    compare_standings, detect_gate_pass, noisy_gate_poses, rank, start_race, EventKind, GateNoise,
    Race, RaceConfig, RaceError, RaceEvent, Standing,
};
use drl_core::seed::{SeedSplitter, Stream};
use drl_core::track::Track;
use proptest::prelude::*;

const DT: f64 = 0.01;

fn identity_gate() -> Gate {
    Gate::new("g", 0, Pose::identity(), (2.0, 2.0), (3.0, 3.0)).unwrap()
}

fn line_track(n: usize) -> Track {
    Track::straight("line", n, 10.0, 0.0, (2.0, 2.0), (3.0, 3.0)).unwrap()
}

fn at(p: Vec3) -> RigidState {
    RigidState::at_rest(p, 0.0)
}

fn race(track: Track, ids: &[&str]) -> Race {
    let mut r = start_race(RaceConfig::new(track, 1, ids.iter().map(|s| s.to_string()).collect(), 0)).unwrap();
    let start: Vec<RigidState> = ids.iter().map(|_| at(Vec3::new(-5.0, 0.0, 0.0))).collect();
    r.place(&start).unwrap();
    r
}

fn kinds(events: &[RaceEvent]) -> Vec<&EventKind> {
    events.iter().map(|e| &e.kind).collect()
}

#[test]
fn gate_pass_examples() {
    let g = identity_gate();
    assert_eq!(detect_gate_pass(&Vec3::new(-1.0, 0.0, 0.0), &Vec3::new(1.0, 0.0, 0.0), &g), Some(Vec3::zeros()));
    assert_eq!(detect_gate_pass(&Vec3::new(-1.0, 1.5, 0.0), &Vec3::new(1.0, 1.5, 0.0), &g), None);
    assert_eq!(detect_gate_pass(&Vec3::new(1.0, 0.0, 0.0), &Vec3::new(-1.0, 0.0, 0.0), &g), None);
    // Edge of the opening is not inside.
    assert_eq!(detect_gate_pass(&Vec3::new(-1.0, 1.0, 0.0), &Vec3::new(1.0, 1.0, 0.0), &g), None);
    let p = detect_gate_pass(&Vec3::new(-1.0, 0.2, -0.4), &Vec3::new(3.0, 0.2, 0.4), &g).unwrap();
    assert!((p - Vec3::new(0.0, 0.2, -0.2)).norm() < 1e-12);
}

#[test]
fn nominal_run_passes_all_gates_then_finishes() {
    let mut r = race(line_track(3), &["a"]);
    let mut events = Vec::new();
    for k in 1..=400 {
        let x = -5.0 + 0.1 * k as f64;
        events.extend(r.tick(&[at(Vec3::new(x, 0.0, 0.0))], DT).unwrap());
        if r.is_ended() {
            break;
        }
    }
    let passes: Vec<usize> = events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::GatePass { gate, .. } => Some(gate),
            _ => None,
        })
        .collect();
    assert_eq!(passes, vec![0, 1, 2]);
    assert_eq!(events.last().unwrap().kind, EventKind::Finish);
    let p = &r.progress()[0];
    assert_eq!(p.penalty_seconds, 0.0);
    assert_eq!(p.gate_split_times.len(), 3);
    assert_eq!(p.finish_time, Some(p.gate_split_times[2]));
    assert!(r.is_ended());
    assert_eq!(r.tick(&[at(Vec3::zeros())], DT), Err(RaceError::RaceEnded));
}

#[test]
fn out_of_order_and_reverse_crossings_are_ignored() {
    let mut r = race(line_track(3), &["a"]);
    // Fly through gate 1 (x = 10) first: nothing.
    r.place(&[at(Vec3::new(9.0, 0.0, 0.0))]).unwrap();
    assert!(r.tick(&[at(Vec3::new(11.0, 0.0, 0.0))], DT).unwrap().is_empty());
    // Reverse through gate 0: nothing.
    r.place(&[at(Vec3::new(1.0, 0.0, 0.0))]).unwrap();
    assert!(r.tick(&[at(Vec3::new(-1.0, 0.0, 0.0))], DT).unwrap().is_empty());
    assert_eq!(r.progress()[0].gates_passed, 0);
    // Forward through gate 0: counted.
    let ev = r.tick(&[at(Vec3::new(1.0, 0.0, 0.0))], DT).unwrap();
    assert!(matches!(ev[0].kind, EventKind::GatePass { gate: 0, .. }));
    assert_eq!(r.progress()[0].last_gate_passed, Some(0));
}

#[test]
fn not_started_race_rejects_ticks() {
    let mut r = Race::new(RaceConfig::new(line_track(2), 1, vec!["a".into()], 0)).unwrap();
    assert_eq!(r.tick(&[at(Vec3::zeros())], DT), Err(RaceError::RaceNotStarted));
}

#[test]
fn frame_contact_is_debounced() {
    let mut r = race(line_track(2), &["a"]);
    // On the top bar of gate 0 (inner half-height 1, outer 1.5).
    let bar = at(Vec3::new(0.05, 0.0, 1.2));
    // Beyond the band on the same side, so moving back and forth never crosses the plane.
    let free = at(Vec3::new(0.5, 0.0, 1.2));
    let mut n = 0;
    for _ in 0..3 {
        n += r.tick(&[bar], DT).unwrap().len();
    }
    assert_eq!(n, 1);
    assert_eq!(r.progress()[0].penalty_seconds, 10.0);
    // 0.3 s clear is not enough to re-arm.
    for _ in 0..30 {
        r.tick(&[free], DT).unwrap();
    }
    assert!(r.tick(&[bar], DT).unwrap().is_empty());
    // 0.5 s clear re-arms.
    for _ in 0..50 {
        r.tick(&[free], DT).unwrap();
    }
    let ev = r.tick(&[bar], DT).unwrap();
    assert!(matches!(kinds(&ev)[..], [EventKind::EnvCollision { .. }]));
    assert_eq!(r.progress()[0].penalty_seconds, 20.0);
}

#[test]
fn fast_crossing_through_frame_is_caught() {
    let mut r = race(line_track(2), &["a"]);
    r.place(&[at(Vec3::new(-0.5, 0.0, 1.2))]).unwrap();
    let ev = r.tick(&[at(Vec3::new(0.5, 0.0, 1.2))], DT).unwrap();
    assert!(matches!(kinds(&ev)[..], [EventKind::EnvCollision { .. }]));
}

#[test]
fn leaving_world_bounds_is_a_collision() {
    let mut r = race(line_track(2), &["a"]);
    let ev = r.tick(&[at(Vec3::new(-5.0, 0.0, -50.0))], DT).unwrap();
    assert!(matches!(kinds(&ev)[..], [EventKind::EnvCollision { .. }]));
}

#[test]
fn trailing_drone_is_disqualified() {
    let mut r = race(line_track(3), &["a", "b"]);
    // a passes gate 0, b does not.
    r.tick(&[at(Vec3::new(0.5, 0.0, 0.0)), at(Vec3::new(-3.0, 0.0, 0.0))], DT).unwrap();
    r.tick(&[at(Vec3::new(3.0, 0.0, 0.0)), at(Vec3::new(-0.5, 0.0, 0.0))], DT).unwrap();
    assert_eq!(r.progress()[0].gates_passed, 1);
    // Contact 0.2 m apart while b is still short of gate 0.
    let ev = r.tick(&[at(Vec3::new(-0.3, 0.5, 0.0)), at(Vec3::new(-0.3, 0.3, 0.0))], DT).unwrap();
    assert!(r.progress()[1].disqualified);
    assert!(!r.progress()[0].disqualified);
    assert!(ev.iter().any(|e| e.racer_id == "b" && matches!(e.kind, EventKind::Disqualified { .. })));
    // b can no longer pass gates.
    let ev = r.tick(&[at(Vec3::new(-2.0, 0.0, 0.0)), at(Vec3::new(0.5, 0.0, 0.0))], DT).unwrap();
    assert!(!ev.iter().any(|e| e.racer_id == "b" && matches!(e.kind, EventKind::GatePass { .. })));
    assert_eq!(r.progress()[1].gates_passed, 0);
}

#[test]
fn equal_gates_trailing_is_farther_from_next_gate() {
    let mut r = race(line_track(3), &["a", "b"]);
    let ev = r.tick(&[at(Vec3::new(-2.0, 0.0, 0.0)), at(Vec3::new(-2.2, 0.0, 0.0))], DT).unwrap();
    assert!(r.progress()[1].disqualified && !r.progress()[0].disqualified);
    assert!(ev.iter().any(|e| matches!(e.kind, EventKind::NearMiss { .. })));
}

#[test]
fn near_miss_carries_no_penalty() {
    let mut r = race(line_track(3), &["a", "b"]);
    let ev = r.tick(&[at(Vec3::new(-2.0, 0.4, 0.0)), at(Vec3::new(-2.0, -0.4, 0.0))], DT).unwrap();
    assert_eq!(ev.len(), 2);
    assert!(ev.iter().all(|e| matches!(e.kind, EventKind::NearMiss { .. })));
    assert!(r.progress().iter().all(|p| p.penalty_seconds == 0.0 && !p.disqualified));
    // Same episode: no repeat.
    assert!(r.tick(&[at(Vec3::new(-2.0, 0.4, 0.0)), at(Vec3::new(-2.0, -0.4, 0.0))], DT).unwrap().is_empty());
}

fn st(id: &str, gates: usize, finish: Option<f64>, penalty: f64, dq: bool) -> Standing {
    Standing {
        racer_id: id.into(),
        gates_passed: gates,
        finish_time: finish,
        penalty_seconds: penalty,
        disqualified: dq,
    }
}

#[test]
fn ranking_examples() {
    assert_eq!(rank(&[st("B", 9, Some(50.0), 0.0, false), st("A", 10, Some(60.0), 0.0, false)], 100.0), ["A", "B"]);
    assert_eq!(rank(&[st("A", 10, Some(60.0), 10.0, false), st("B", 10, Some(65.0), 0.0, false)], 100.0), ["B", "A"]);
    assert_eq!(rank(&[st("B", 10, Some(1.0), 0.0, true), st("A", 0, None, 0.0, false)], 100.0), ["A", "B"]);
    assert_eq!(rank(&[st("b", 3, None, 0.0, false), st("a", 3, None, 0.0, false)], 100.0), ["a", "b"]);
}

fn standing_strategy() -> impl Strategy<Value = Standing> {
    (0u8..4, 0usize..5, proptest::option::of(0u32..6), 0u32..3, any::<bool>()).prop_map(|(id, g, f, p, dq)| {
        st(&format!("r{id}"), g, f.map(|x| x as f64 * 10.0), p as f64 * 10.0, dq)
    })
}

proptest! {
    #[test]
    fn ranking_is_a_total_order(a in standing_strategy(), b in standing_strategy(), c in standing_strategy()) {
        use std::cmp::Ordering::*;
        let cmp = |x: &Standing, y: &Standing| compare_standings(x, y, 100.0);
        prop_assert_eq!(cmp(&a, &b), cmp(&b, &a).reverse());
        if cmp(&a, &b) != Greater && cmp(&b, &c) != Greater {
            prop_assert_ne!(cmp(&a, &c), Greater);
        }
        if cmp(&a, &b) == Equal {
            prop_assert_eq!(&a, &b);
        }
    }
}

#[test]
fn tier_one_and_zero_sigma_are_ground_truth() {
    let track = line_track(5);
    let truth: Vec<Pose> = track.gates.iter().map(|g| g.pose).collect();
    let mut rng = SeedSplitter::new(1).rng(Stream::GateNoise);
    assert_eq!(noisy_gate_poses(&track, 1, &GateNoise::default(), &mut rng), truth);
    assert_eq!(noisy_gate_poses(&track, 2, &GateNoise::none(), &mut rng), truth);
}

#[test]
fn noise_is_seeded() {
    let track = line_track(5);
    let cfg = |seed| {
        let mut c = RaceConfig::new(track.clone(), 2, vec!["a".into()], seed);
        c.noise = GateNoise::default();
        Race::new(c).unwrap().api_gate_poses().to_vec()
    };
    assert_eq!(cfg(9), cfg(9));
    let base = cfg(0);
    for seed in 1..100 {
        assert_ne!(cfg(seed), base);
    }
    let mut r = Race::new(RaceConfig::new(track, 2, vec!["a".into()], 5)).unwrap();
    let before = r.api_gate_poses().to_vec();
    r.start();
    r.reset();
    assert_eq!(r.api_gate_poses(), &before[..]);
    assert!(!r.is_started());
}

#[test]
fn noise_statistics() {
    let track = Track::straight("many", 10_000, 1.0, 0.0, (2.0, 2.0), (3.0, 3.0)).unwrap();
    let mut rng = SeedSplitter::new(3).rng(Stream::GateNoise);
    let noisy = noisy_gate_poses(&track, 3, &GateNoise { sigma_pos: 1.0, sigma_yaw: 0.0 }, &mut rng);
    for axis in 0..3 {
        let d: Vec<f64> = noisy.iter().zip(&track.gates).map(|(p, g)| p.position[axis] - g.pose.position[axis]).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((var.sqrt() - 1.0).abs() < 0.05, "axis {axis} std {}", var.sqrt());
    }
}

#[test]
fn config_validation() {
    let mut c = RaceConfig::new(line_track(2), 4, vec!["a".into()], 0);
    assert!(matches!(Race::new(c.clone()), Err(RaceError::InvalidConfig(_))));
    c.tier = 1;
    c.racer_ids = vec!["a".into(), "a".into()];
    assert!(Race::new(c.clone()).is_err());
    c.racer_ids = (0..9).map(|i| format!("r{i}")).collect();
    assert!(Race::new(c.clone()).is_err());
    c.racer_ids = vec!["a b".into()];
    assert!(Race::new(c).is_err());
}

/// Scripted two-racer race: a flies straight down the line, b wobbles into
/// the frame of gate 1 and lags behind.
fn scripted(ticks: usize) -> (Race, Vec<u8>, usize) {
    let track = line_track(3);
    let mut r = race(track.clone(), &["a", "b"]);
    let header = LogHeader { track: track.name.clone(), tier: 1, seed: 0, gates: 3 };
    let mut log = LogWriter::new(Vec::new(), &header).unwrap();
    let mut collisions = 0;
    for k in 1..=ticks {
        let t = k as f64 * DT;
        let a = at(Vec3::new(-5.0 + 12.0 * t, 0.0, 0.0));
        let b = at(Vec3::new(-5.0 + 9.0 * t, 0.0, 1.2 * (t * 2.0).sin().max(0.0)));
        let states = [a, b];
        let ev = r.tick(&states, DT).unwrap();
        collisions += ev.iter().filter(|e| matches!(e.kind, EventKind::EnvCollision { .. })).count();
        log.write_tick(r.time(), &states, r.progress()).unwrap();
        if r.is_ended() {
            break;
        }
    }
    (r, log.into_inner(), collisions)
}

#[test]
fn log_counts_lines() {
    let (_, bytes, _) = scripted(100);
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text.lines().count(), 201);
    assert!(text.starts_with("# drl-log v1 track=line tier=1 seed=0"));
}

#[test]
fn log_round_trip_reproduces_ranking() {
    let (r, bytes, collisions) = scripted(2000);
    let eval = evaluate_log(&bytes[..]).unwrap();
    assert_eq!(eval.ranking(), r.ranking());
    assert_eq!(eval.leaderboard(), r.leaderboard());
    let pen: f64 = r.progress().iter().map(|p| p.penalty_seconds).sum();
    assert_eq!(pen, 10.0 * collisions as f64);
    assert!(eval.warnings.is_empty());
}

#[test]
fn logs_are_deterministic() {
    assert_eq!(scripted(500).1, scripted(500).1);
}

#[test]
fn truncated_log_is_a_parseable_prefix() {
    let (_, bytes, _) = scripted(300);
    for cut in [bytes.len() / 3, bytes.len() / 2 + 7, bytes.len() - 5] {
        let eval = evaluate_log(&bytes[..cut]).unwrap();
        assert_eq!(eval.warnings.len(), 1);
        assert!(eval.records > 0);
    }
}

#[test]
fn corrupted_line_is_named() {
    let (_, bytes, _) = scripted(50);
    let mut lines: Vec<String> = String::from_utf8(bytes).unwrap().lines().map(String::from).collect();
    lines[16] = lines[16].replace(' ', " ?");
    let text = lines.join("\n") + "\n";
    match evaluate_log(text.as_bytes()) {
        Err(LogError::Malformed { line, .. }) => assert_eq!(line, 17),
        other => panic!("{other:?}"),
    }
}

#[test]
fn gates_are_monotone_in_log() {
    let (_, bytes, _) = scripted(2000);
    let text = String::from_utf8(bytes).unwrap();
    let mut last = std::collections::HashMap::new();
    for l in text.lines().skip(1) {
        let f: Vec<&str> = l.split(' ').collect();
        let g: usize = f[8].parse().unwrap();
        let prev = last.insert(f[1].to_string(), g).unwrap_or(0);
        assert!(g == prev || g == prev + 1);
    }
}

#[test]
fn aabb_bounds_used() {
    let t = Track::new("t", line_track(2).gates, Aabb::new(Vec3::new(-10.0, -10.0, -10.0), Vec3::new(30.0, 10.0, 10.0))).unwrap();
    let mut r = race(t, &["a"]);
    assert!(r.tick(&[at(Vec3::new(-5.0, 0.0, 0.0))], DT).unwrap().is_empty());
    assert_eq!(r.tick(&[at(Vec3::new(-5.0, 11.0, 0.0))], DT).unwrap().len(), 1);
}
