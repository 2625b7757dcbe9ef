use std::f64::consts::TAU;

use drl_core::geometry::Vec3;
use drl_core::opponents::{IbrParams, OpponentPolicy};
use drl_core::race::log::evaluate_log;
use drl_core::race::GateNoise;
use drl_core::sim::{run_race, start_state, RaceOutcome, RaceSetup, SimError, EGO_ID, OPPONENT_ID};
use drl_core::track::Track;

fn circle12() -> Track {
    Track::circle("circle12", 20.0, 12, TAU, 2.0, (2.0, 2.0), (3.0, 3.0))
        .unwrap()
        .with_limits(10.0, 10.0)
        .unwrap()
}

fn race(setup: &RaceSetup) -> (RaceOutcome, Vec<u8>) {
    let mut log = Vec::new();
    let outcome = run_race(setup, &mut log).unwrap();
    (outcome, log)
}

#[test]
fn starts_are_mirrored_behind_gate_zero() {
    let t = circle12();
    let (a, b) = (start_state(&t, 0), start_state(&t, 1));
    let g = &t.gates[0];
    let (la, lb) = (g.pose.inverse_transform_point(&a.position()), g.pose.inverse_transform_point(&b.position()));
    assert!((la - Vec3::new(-8.0, 1.5, 0.0)).norm() < 1e-9);
    assert!((lb - Vec3::new(-8.0, -1.5, 0.0)).norm() < 1e-9);
}

#[test]
fn solo_tier_one_race_finishes_cleanly() {
    let (o, log) = race(&RaceSetup::new(circle12(), 1, OpponentPolicy::None, 3));
    let p = &o.progress[0];
    assert_eq!(p.gates_passed, 12);
    assert_eq!(p.penalty_seconds, 0.0);
    assert_eq!(o.ranking, vec![EGO_ID]);
    assert_eq!(p.finish_time, Some(o.duration));
    let lines = String::from_utf8(log).unwrap().lines().count() as u64;
    assert_eq!(lines, 1 + o.ticks);
}

#[test]
fn opponents_finish_or_get_disqualified() {
    for seed in [1, 2, 7] {
        let (o, _) = race(&RaceSetup::new(circle12(), 1, OpponentPolicy::RandomizedSpline, seed));
        assert_eq!(o.progress.len(), 2);
        for p in &o.progress {
            assert!(p.finish_time.is_some() || p.disqualified, "seed {seed}: {p:?}");
        }
        assert!(o.progress.iter().filter(|p| p.disqualified).count() <= 1);
    }
}

#[test]
fn noise_free_tier_two_matches_solo_tier_one() {
    let solo = race(&RaceSetup::new(circle12(), 1, OpponentPolicy::None, 11)).0;
    let mut setup = RaceSetup::new(circle12(), 2, OpponentPolicy::None, 11);
    setup.noise = GateNoise::none();
    let blind = race(&setup).0;
    let (a, b) = (&solo.progress[0].gate_split_times, &blind.progress[0].gate_split_times);
    assert_eq!(a.len(), 12);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= 1e-6);
    }
    assert_eq!(blind.detections, 0);
}

#[test]
fn perception_steers_through_noisy_gates() {
    for seed in [1, 7] {
        let (o, _) = race(&RaceSetup::new(circle12(), 2, OpponentPolicy::None, seed));
        assert!(o.replans > 0 && o.detections > 100);
        assert_eq!(o.progress[0].gates_passed, 12, "seed {seed}");
    }
}

#[test]
fn logs_are_byte_identical_and_seed_dependent() {
    let setup = RaceSetup::new(circle12(), 3, OpponentPolicy::RandomizedSpline, 5);
    let (o1, l1) = race(&setup);
    let (o2, l2) = race(&setup);
    assert_eq!(l1, l2);
    assert_eq!(o1.ranking, o2.ranking);
    let (_, l3) = race(&RaceSetup::new(circle12(), 3, OpponentPolicy::RandomizedSpline, 6));
    assert_ne!(l1, l3);
}

#[test]
fn evaluator_reproduces_the_race_ranking() {
    for seed in [1, 7, 9] {
        let (o, log) = race(&RaceSetup::new(circle12(), 1, OpponentPolicy::RandomizedSpline, seed));
        let eval = evaluate_log(log.as_slice()).unwrap();
        assert_eq!(eval.ranking(), o.ranking, "seed {seed}");
        assert_eq!(eval.leaderboard(), o.leaderboard);
        assert_eq!(eval.header.seed, seed);
    }
}

#[test]
fn game_theoretic_opponent_races() {
    let setup = RaceSetup::new(circle12(), 1, OpponentPolicy::GameTheoretic(IbrParams::default()), 7);
    let (o, l1) = race(&setup);
    let (_, l2) = race(&setup);
    assert_eq!(l1, l2);
    assert!(o.ranking.contains(&OPPONENT_ID.to_string()));
    for p in &o.progress {
        assert!(p.finish_time.is_some() || p.disqualified);
    }
}

#[test]
fn invalid_setups_are_rejected() {
    let bad = |s: RaceSetup| matches!(run_race(&s, Vec::new()), Err(SimError::InvalidSetup(_)));
    assert!(bad(RaceSetup::new(circle12(), 2, OpponentPolicy::RandomizedSpline, 0)));
    assert!(bad(RaceSetup::new(circle12(), 4, OpponentPolicy::None, 0)));
    let mut s = RaceSetup::new(circle12(), 1, OpponentPolicy::None, 0);
    s.dt = 0.05;
    assert!(bad(s));
    let p = IbrParams {
        max_iterations: 0,
        ..IbrParams::default()
    };
    assert!(bad(RaceSetup::new(circle12(), 1, OpponentPolicy::GameTheoretic(p), 0)));
}

#[test]
fn short_time_limit_cuts_the_race() {
    let mut s = RaceSetup::new(circle12(), 1, OpponentPolicy::None, 0);
    s.time_limit = Some(5.0);
    let (o, log) = race(&s);
    assert!((o.duration - 5.0).abs() < 1e-9);
    assert!(o.progress[0].gates_passed < 12);
    let eval = evaluate_log(log.as_slice()).unwrap();
    assert_eq!(eval.ranking(), o.ranking);
}
