//! Race orchestration: progress tracking, events, penalties and ranking.

pub mod log;
mod noise;
mod rules;

use thiserror::Error;

use crate::geometry::{Pose, RigidState, Vec3};
use crate::seed::{SeedSplitter, Stream};
use crate::track::Track;

pub use noise::{noisy_gate_poses, GateNoise};
pub use rules::{
    compare_standings, detect_gate_pass, env_contact, leaderboard, rank, touches_frame, Standing,
    FRAME_CONTACT_DISTANCE,
};

/// Clear time after which a new environment contact counts again, s.
pub const REARM_TIME: f64 = 0.5;
pub const MAX_RACERS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RaceError {
    #[error("invalid race config: {0}")]
    InvalidConfig(String),
    #[error("race has not been started")]
    RaceNotStarted,
    #[error("race has already ended")]
    RaceEnded,
    #[error("expected {expected} racer states, got {got}")]
    StateCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaceConfig {
    pub track: Track,
    pub tier: u8,
    pub racer_ids: Vec<String>,
    pub collision_penalty: f64,
    pub near_miss_radius: f64,
    pub dq_contact_radius: f64,
    pub rng_seed: u64,
    pub noise: GateNoise,
    /// Race stops at this time even if racers are still flying, s.
    pub time_limit: f64,
}

impl RaceConfig {
    pub fn new(track: Track, tier: u8, racer_ids: Vec<String>, rng_seed: u64) -> Self {
        Self {
            track,
            tier,
            racer_ids,
            collision_penalty: 10.0,
            near_miss_radius: 1.0,
            dq_contact_radius: 0.3,
            rng_seed,
            noise: GateNoise::default(),
            time_limit: 300.0,
        }
    }

    pub fn validate(&self) -> Result<(), RaceError> {
        let bad = |m: &str| Err(RaceError::InvalidConfig(m.to_string()));
        if !(1..=3).contains(&self.tier) {
            return bad("tier must be 1, 2 or 3");
        }
        if self.racer_ids.is_empty() || self.racer_ids.len() > MAX_RACERS {
            return bad("need 1 to 8 racers");
        }
        for (i, id) in self.racer_ids.iter().enumerate() {
            if id.is_empty() || id.contains(char::is_whitespace) {
                return bad("racer ids must be non-empty and contain no whitespace");
            }
            if self.racer_ids[..i].contains(id) {
                return bad("duplicate racer id");
            }
        }
        if !(self.collision_penalty.is_finite() && self.collision_penalty >= 0.0) {
            return bad("collision_penalty must be >= 0");
        }
        if !(self.near_miss_radius > 0.0 && self.dq_contact_radius > 0.0) {
            return bad("radii must be positive");
        }
        if !(self.noise.sigma_pos >= 0.0 && self.noise.sigma_yaw >= 0.0) {
            return bad("noise sigmas must be >= 0");
        }
        if !(self.time_limit.is_finite() && self.time_limit > 0.0) {
            return bad("time_limit must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RacerProgress {
    pub racer_id: String,
    pub gates_passed: usize,
    pub last_gate_passed: Option<usize>,
    pub gate_split_times: Vec<f64>,
    pub penalty_seconds: f64,
    pub disqualified: bool,
    pub finish_time: Option<f64>,
}

impl RacerProgress {
    pub fn new(racer_id: impl Into<String>) -> Self {
        Self {
            racer_id: racer_id.into(),
            gates_passed: 0,
            last_gate_passed: None,
            gate_split_times: Vec::new(),
            penalty_seconds: 0.0,
            disqualified: false,
            finish_time: None,
        }
    }

    pub fn standing(&self) -> Standing {
        Standing {
            racer_id: self.racer_id.clone(),
            gates_passed: self.gates_passed,
            finish_time: self.finish_time,
            penalty_seconds: self.penalty_seconds,
            disqualified: self.disqualified,
        }
    }

    /// Still on course: neither finished nor disqualified.
    pub fn is_active(&self) -> bool {
        !self.disqualified && self.finish_time.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    GatePass { gate: usize, point: Vec3 },
    EnvCollision { position: Vec3 },
    DroneDroneCollision { other: String },
    NearMiss { other: String, distance: f64 },
    Finish,
    Disqualified { by: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaceEvent {
    pub time: f64,
    pub racer_id: String,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, Default)]
struct Contact {
    touching: bool,
    clear_for: f64,
    counted: bool,
}

/// One race. Create with [`start_race`] or [`Race::new`] + [`Race::start`].
#[derive(Debug, Clone)]
pub struct Race {
    config: RaceConfig,
    progress: Vec<RacerProgress>,
    api_gate_poses: Vec<Pose>,
    prev: Vec<Option<Vec3>>,
    env: Vec<Contact>,
    near: Vec<Vec<bool>>,
    ticks: u64,
    time: f64,
    started: bool,
    ended: bool,
}

/// Validates the config and returns a started race.
pub fn start_race(config: RaceConfig) -> Result<Race, RaceError> {
    let mut race = Race::new(config)?;
    race.start();
    Ok(race)
}

impl Race {
    pub fn new(config: RaceConfig) -> Result<Self, RaceError> {
        config.validate()?;
        let n = config.racer_ids.len();
        let mut race = Self {
            progress: Vec::new(),
            api_gate_poses: Vec::new(),
            prev: vec![None; n],
            env: vec![Contact::default(); n],
            near: vec![vec![false; n]; n],
            ticks: 0,
            time: 0.0,
            started: false,
            ended: false,
            config,
        };
        race.reset();
        Ok(race)
    }

    pub fn start(&mut self) {
        self.started = true;
    }

    /// Fresh progress for everyone and a fresh noise draw; leaves the race
    /// not started.
    pub fn reset(&mut self) {
        let n = self.config.racer_ids.len();
        self.progress = self.config.racer_ids.iter().map(RacerProgress::new).collect();
        let mut rng = SeedSplitter::new(self.config.rng_seed).rng(Stream::GateNoise);
        self.api_gate_poses = noisy_gate_poses(&self.config.track, self.config.tier, &self.config.noise, &mut rng);
        self.prev = vec![None; n];
        self.env = vec![Contact::default(); n];
        self.near = vec![vec![false; n]; n];
        self.ticks = 0;
        self.time = 0.0;
        self.started = false;
        self.ended = false;
    }

    pub fn set_time_limit(&mut self, limit: f64) -> Result<(), RaceError> {
        if !(limit.is_finite() && limit > 0.0) {
            return Err(RaceError::InvalidConfig("time_limit must be positive".to_string()));
        }
        self.config.time_limit = limit;
        Ok(())
    }

    pub fn config(&self) -> &RaceConfig {
        &self.config
    }

    pub fn progress(&self) -> &[RacerProgress] {
        &self.progress
    }

    /// Gate poses as reported to racers (noisy in tiers 2 and 3).
    pub fn api_gate_poses(&self) -> &[Pose] {
        &self.api_gate_poses
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn is_started(&self) -> bool {
        self.started
    }

    pub fn is_ended(&self) -> bool {
        self.ended
    }

    pub fn standings(&self) -> Vec<Standing> {
        self.progress.iter().map(RacerProgress::standing).collect()
    }

    /// Ranking with the current time as cutoff for non-finishers.
    pub fn ranking(&self) -> Vec<String> {
        rank(&self.standings(), self.time)
    }

    pub fn leaderboard(&self) -> String {
        leaderboard(&self.standings(), self.time)
    }

    /// Seeds the previous positions without advancing time.
    pub fn place(&mut self, states: &[RigidState]) -> Result<(), RaceError> {
        self.check_count(states)?;
        for (p, s) in self.prev.iter_mut().zip(states) {
            *p = Some(s.pose.position);
        }
        Ok(())
    }

    fn check_count(&self, states: &[RigidState]) -> Result<(), RaceError> {
        if states.len() != self.progress.len() {
            return Err(RaceError::StateCount {
                expected: self.progress.len(),
                got: states.len(),
            });
        }
        Ok(())
    }

    /// Advances race time by `dt` and judges the racers at their new states.
    pub fn tick(&mut self, states: &[RigidState], dt: f64) -> Result<Vec<RaceEvent>, RaceError> {
        if !self.started {
            return Err(RaceError::RaceNotStarted);
        }
        if self.ended {
            return Err(RaceError::RaceEnded);
        }
        self.check_count(states)?;
        self.ticks += 1;
        self.time = self.ticks as f64 * dt;
        let t = self.time;
        let mut events = Vec::new();
        let gates = &self.config.track.gates;
        let n_gates = gates.len();

        for (i, s) in states.iter().enumerate() {
            let curr = s.pose.position;
            let prev = self.prev[i].unwrap_or(curr);
            self.prev[i] = Some(curr);
            let p = &mut self.progress[i];
            if !p.is_active() {
                continue;
            }
            if let Some(point) = detect_gate_pass(&prev, &curr, &gates[p.gates_passed]) {
                let gate = p.gates_passed;
                p.gates_passed += 1;
                p.last_gate_passed = Some(gate);
                p.gate_split_times.push(t);
                events.push(RaceEvent { time: t, racer_id: p.racer_id.clone(), kind: EventKind::GatePass { gate, point } });
                if p.gates_passed == n_gates {
                    p.finish_time = Some(t);
                    events.push(RaceEvent { time: t, racer_id: p.racer_id.clone(), kind: EventKind::Finish });
                }
            }
            let c = &mut self.env[i];
            if env_contact(&prev, &curr, gates, &self.config.track.world_bounds) {
                if !c.counted {
                    p.penalty_seconds += self.config.collision_penalty;
                    c.counted = true;
                    events.push(RaceEvent { time: t, racer_id: p.racer_id.clone(), kind: EventKind::EnvCollision { position: curr } });
                }
                c.touching = true;
                c.clear_for = 0.0;
            } else {
                c.touching = false;
                c.clear_for += dt;
                if c.clear_for >= REARM_TIME - 1e-9 {
                    c.counted = false;
                }
            }
        }

        let n = states.len();
        for i in 0..n {
            for j in i + 1..n {
                if !(self.progress[i].is_active() && self.progress[j].is_active()) {
                    self.near[i][j] = false;
                    continue;
                }
                let d = (states[i].pose.position - states[j].pose.position).norm();
                if d < self.config.near_miss_radius {
                    if !self.near[i][j] {
                        self.near[i][j] = true;
                        for (a, b) in [(i, j), (j, i)] {
                            events.push(RaceEvent {
                                time: t,
                                racer_id: self.progress[a].racer_id.clone(),
                                kind: EventKind::NearMiss { other: self.progress[b].racer_id.clone(), distance: d },
                            });
                        }
                    }
                } else {
                    self.near[i][j] = false;
                }
                if d < self.config.dq_contact_radius {
                    for (a, b) in [(i, j), (j, i)] {
                        events.push(RaceEvent {
                            time: t,
                            racer_id: self.progress[a].racer_id.clone(),
                            kind: EventKind::DroneDroneCollision { other: self.progress[b].racer_id.clone() },
                        });
                    }
                    if let Some((loser, winner)) = self.trailing(i, j, states) {
                        self.progress[loser].disqualified = true;
                        events.push(RaceEvent {
                            time: t,
                            racer_id: self.progress[loser].racer_id.clone(),
                            kind: EventKind::Disqualified { by: self.progress[winner].racer_id.clone() },
                        });
                    }
                }
            }
        }

        if t >= self.config.time_limit - 1e-9 || self.progress.iter().all(|p| !p.is_active()) {
            self.ended = true;
        }
        Ok(events)
    }

    /// (trailing, leading) by gates passed, then distance to the next gate.
    /// An exact tie disqualifies nobody.
    fn trailing(&self, i: usize, j: usize, states: &[RigidState]) -> Option<(usize, usize)> {
        let gates = &self.config.track.gates;
        let key = |k: usize| {
            let p = &self.progress[k];
            let d = gates
                .get(p.gates_passed)
                .map_or(0.0, |g| (g.center() - states[k].pose.position).norm());
            (p.gates_passed, d)
        };
        let (gi, di) = key(i);
        let (gj, dj) = key(j);
        match gi.cmp(&gj).then(dj.total_cmp(&di)) {
            std::cmp::Ordering::Less => Some((i, j)),
            std::cmp::Ordering::Greater => Some((j, i)),
            std::cmp::Ordering::Equal => None,
        }
    }
}
