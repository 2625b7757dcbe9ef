//! Full races: the built-in spline racer against an optional opponent,
//! judged by the orchestrator and logged tick by tick.
//!
//! Both racers start [`START_LEAD`](crate::track::START_LEAD) metres behind
//! gate 0, the ego racer [`START_LATERAL`] to the gate's left and the
//! opponent the same distance to its right.
//!
//! In tiers 2 and 3 the ego racer plans through the noisy gate poses the
//! race reports. At [`PERCEPTION_RATE_HZ`] it renders its next gate, runs the
//! homography baseline and fuses the estimate with a Kalman filter whose
//! prior is the reported centre with the configured position noise. When
//! the fused centre moves more than [`REPLAN_THRESHOLD`] from the target it
//! is flying to, the remaining route is replanned from the current state.
//! With zero position noise the prior is exact and perception is skipped.

use std::io::Write;
use std::sync::Arc;

use log::{debug, info};
use nalgebra::Matrix3;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{step, CascadeGains, ControlCommand, DynamicsError, TrackerGains, VehicleParams};
use crate::geometry::{Pose, RigidState, Vec3};
use crate::opponents::{ibr_plan, randomized_waypoints, OpponentPolicy, RacerSnapshot};
use crate::perception::{estimate_center_3d, kf_update, observe_corners, BaselineReference, CornerSource, GateCenterKF};
use crate::perception::eval::REFERENCE_DISTANCE;
use crate::race::log::{LogHeader, LogWriter};
use crate::race::{start_race, GateNoise, RaceConfig, RaceError, RaceEvent, RacerProgress};
use crate::seed::{SeedSplitter, Stream};
use crate::sensor::CameraModel;
use crate::spline::{plan_min_jerk_vel_constraints, PiecewiseSpline, PlanError, SplineRequest};
use crate::track::{Track, EXIT_DISTANCE, START_LEAD};

pub const EGO_ID: &str = "ego";
pub const OPPONENT_ID: &str = "opponent";
/// Lateral start offset from gate 0's axis, m.
pub const START_LATERAL: f64 = 1.5;
pub const PERCEPTION_RATE_HZ: f64 = 30.0;
/// Fused gate centre shift that triggers a replan, m.
pub const REPLAN_THRESHOLD: f64 = 0.25;
/// Gates are only observed between these distances, m.
pub const PERCEPTION_RANGE: (f64, f64) = (2.0, 25.0);
/// Chi-square gate (3 dof, 99.9%) for rejecting perception outliers.
pub const OUTLIER_GATE: f64 = 16.27;
pub const DEFAULT_DT: f64 = 0.005;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid race setup: {0}")]
    InvalidSetup(String),
    #[error(transparent)]
    Race(#[from] RaceError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("log write failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct RaceSetup {
    pub track: Track,
    pub tier: u8,
    pub opponent: OpponentPolicy,
    pub seed: u64,
    pub noise: GateNoise,
    /// Ego camera for tiers 2 and 3.
    pub camera: CameraModel,
    pub dt: f64,
    /// Defaults to three times the ego's nominal plan plus 10 s.
    pub time_limit: Option<f64>,
    pub collision_penalty: f64,
    pub gains: TrackerGains,
    pub vehicle: VehicleParams,
}

impl RaceSetup {
    pub fn new(track: Track, tier: u8, opponent: OpponentPolicy, seed: u64) -> Self {
        Self {
            track,
            tier,
            opponent,
            seed,
            noise: GateNoise::default(),
            camera: CameraModel::from_hfov(320, 240, std::f64::consts::FRAC_PI_2),
            dt: DEFAULT_DT,
            time_limit: None,
            collision_penalty: 10.0,
            gains: TrackerGains::default(),
            vehicle: VehicleParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSetup(m.to_string()));
        if !(1..=3).contains(&self.tier) {
            return bad("tier must be 1, 2 or 3");
        }
        if self.tier == 2 && self.opponent != OpponentPolicy::None {
            return bad("tier 2 races have no opponent");
        }
        if !(self.dt > 0.0 && self.dt <= crate::dynamics::MAX_DT) {
            return bad("dt must lie in (0, 0.02] s");
        }
        if let OpponentPolicy::GameTheoretic(p) = &self.opponent {
            p.validate().map_err(|e| SimError::InvalidSetup(e.to_string()))?;
        }
        Ok(())
    }

    fn has_opponent(&self) -> bool {
        self.opponent != OpponentPolicy::None
    }
}

#[derive(Debug, Clone)]
pub struct RaceOutcome {
    pub ranking: Vec<String>,
    pub leaderboard: String,
    pub progress: Vec<RacerProgress>,
    pub events: Vec<RaceEvent>,
    /// Race time at the last tick, s.
    pub duration: f64,
    pub ticks: u64,
    /// Perception-triggered ego replans.
    pub replans: usize,
    pub detections: usize,
}

/// Start pose for racer slot `slot` (0 ego, 1 opponent).
pub fn start_state(track: &Track, slot: usize) -> RigidState {
    let g = &track.gates[0];
    let lateral = if slot == 0 { START_LATERAL } else { -START_LATERAL };
    let p = g.pose.transform_point(&Vec3::new(-START_LEAD, lateral, 0.0));
    RigidState::at_rest(p, g.pose.yaw())
}

fn exit_point(pose: &Pose) -> Vec3 {
    pose.position + pose.rotate(&Vec3::x()) * EXIT_DISTANCE
}

fn tracking(spline: PiecewiseSpline, gains: TrackerGains, start_time: f64) -> ControlCommand {
    ControlCommand::TrackTrajectory {
        spline: Arc::new(spline),
        gains,
        start_time,
    }
}

/// The built-in racer: min-jerk through its current gate targets.
struct Ego {
    targets: Vec<Vec3>,
    exit: Vec3,
    filters: Vec<Option<GateCenterKF>>,
    references: Vec<BaselineReference>,
    replans: usize,
    detections: usize,
}

impl Ego {
    fn request(&self, state: &RigidState, from_gate: usize, v_max: f64, a_max: f64) -> SplineRequest {
        let mut w = vec![state.pose.position];
        w.extend_from_slice(&self.targets[from_gate..]);
        w.push(self.exit);
        SplineRequest::new(w, v_max.max(state.velocity.norm() * 1.001), a_max).with_start_velocity(state.velocity)
    }
}

enum OpponentPilot {
    Spline,
    Game { rng_index: u32, planned_at: Option<usize> },
}

struct Racer {
    state: RigidState,
    command: ControlCommand,
}

/// Runs one race to completion and writes its telemetry log to `log`.
pub fn run_race<W: Write>(setup: &RaceSetup, log: W) -> Result<RaceOutcome, SimError> {
    setup.validate()?;
    let track = &setup.track;
    let n_gates = track.gates.len();
    let seeds = SeedSplitter::new(setup.seed);

    let mut ids = vec![EGO_ID.to_string()];
    if setup.has_opponent() {
        ids.push(OPPONENT_ID.to_string());
    }
    let mut config = RaceConfig::new(track.clone(), setup.tier, ids, setup.seed);
    config.noise = setup.noise;
    config.collision_penalty = setup.collision_penalty;
    let mut race = start_race(config)?;
    let api: Vec<Pose> = race.api_gate_poses().to_vec();

    // ego plan through the reported gates
    let ego_start = start_state(track, 0);
    let mut ego = Ego {
        targets: api.iter().map(|p| p.position).collect(),
        exit: exit_point(api.last().expect("track has gates")),
        filters: vec![None; n_gates],
        references: track
            .gates
            .iter()
            .map(|g| BaselineReference::canonical(&setup.camera, REFERENCE_DISTANCE, g.outer_width, g.outer_height))
            .collect(),
        replans: 0,
        detections: 0,
    };
    let ego_plan = plan_min_jerk_vel_constraints(&ego.request(&ego_start, 0, track.v_max, track.a_max))?;
    let time_limit = setup.time_limit.unwrap_or(3.0 * ego_plan.total_duration() + 10.0);
    race.set_time_limit(time_limit)?;
    race.start();
    let mut racers = vec![Racer {
        state: ego_start,
        command: tracking(ego_plan, setup.gains, 0.0),
    }];

    let mut opponent = None;
    if setup.has_opponent() {
        let start = start_state(track, 1);
        let (pilot, command) = match setup.opponent {
            OpponentPolicy::RandomizedSpline => {
                let mut rng = seeds.rng(Stream::OpponentWaypoints);
                let mut w = vec![start.pose.position];
                w.extend(randomized_waypoints(track, &mut rng));
                w.push(exit_point(&track.gates[n_gates - 1].pose));
                let plan = plan_min_jerk_vel_constraints(&SplineRequest::new(w, track.v_max, track.a_max))?;
                (OpponentPilot::Spline, tracking(plan, setup.gains, 0.0))
            }
            _ => {
                // replaced by the first game solve below
                let w = vec![start.pose.position, track.gates[0].center()];
                let plan = plan_min_jerk_vel_constraints(&SplineRequest::new(w, track.v_max, track.a_max))?;
                (OpponentPilot::Game { rng_index: 0, planned_at: None }, tracking(plan, setup.gains, 0.0))
            }
        };
        racers.push(Racer { state: start, command });
        opponent = Some(pilot);
    }

    let header = LogHeader {
        track: track.name.clone(),
        tier: setup.tier,
        seed: setup.seed,
        gates: n_gates,
    };
    let mut writer = LogWriter::new(log, &header)?;
    let states: Vec<RigidState> = racers.iter().map(|r| r.state).collect();
    race.place(&states)?;

    let cascade = CascadeGains::default();
    let frame_step = ((1.0 / PERCEPTION_RATE_HZ) / setup.dt).round().max(1.0) as u64;
    let perceive = setup.tier >= 2 && setup.noise.sigma_pos > 0.0;
    let mut perception_rng = seeds.rng(Stream::PerceptionNoise);
    let mut events = Vec::new();
    let mut ticks = 0u64;

    while !race.is_ended() {
        if let (Some(OpponentPilot::Game { rng_index, planned_at }), OpponentPolicy::GameTheoretic(params)) =
            (opponent.as_mut(), setup.opponent)
        {
            let next = race.progress()[1].gates_passed;
            if *planned_at != Some(next) && race.progress()[1].is_active() {
                *planned_at = Some(next);
                let me = RacerSnapshot { state: racers[1].state, next_gate: next };
                let other = race.progress()[0]
                    .is_active()
                    .then(|| RacerSnapshot { state: racers[0].state, next_gate: race.progress()[0].gates_passed });
                let mut p = params;
                p.v_max = track.v_max;
                p.a_max = track.a_max;
                let mut rng: ChaCha8Rng = seeds.rng_indexed(Stream::OpponentPlanner, *rng_index);
                *rng_index += 1;
                match ibr_plan(track, me, other, &p, &mut rng) {
                    Ok(plan) => racers[1].command = tracking(plan.spline, setup.gains, racers[1].state.timestamp),
                    Err(e) => debug!("opponent keeps its plan: {e}"),
                }
            }
        }
        if matches!(opponent, Some(OpponentPilot::Game { .. })) && race.progress()[1].gates_passed == n_gates {
            // past the last gate: head for the exit once
            let s = racers[1].state;
            let exit = exit_point(&track.gates[n_gates - 1].pose);
            if let ControlCommand::TrackTrajectory { spline, .. } = &racers[1].command {
                let end = spline.sample_clamped(spline.total_duration()).position;
                if (end - exit).norm() > 1e-6 {
                    let req = SplineRequest::new(vec![s.pose.position, exit], track.v_max.max(s.velocity.norm() * 1.001), track.a_max)
                        .with_start_velocity(s.velocity);
                    racers[1].command = tracking(plan_min_jerk_vel_constraints(&req)?, setup.gains, s.timestamp);
                }
            }
        }

        for r in racers.iter_mut() {
            r.state = step(&r.state, &r.command, &setup.vehicle, &cascade, setup.dt)?;
        }
        let states: Vec<RigidState> = racers.iter().map(|r| r.state).collect();
        let tick_events = race.tick(&states, setup.dt)?;
        for e in &tick_events {
            debug!("{:.3} {} {:?}", e.time, e.racer_id, e.kind);
        }
        events.extend(tick_events);
        writer.write_tick(race.time(), &states, race.progress())?;
        ticks += 1;

        if perceive && ticks % frame_step == 0 && race.progress()[0].is_active() {
            let next = race.progress()[0].gates_passed;
            if let Some(shift) = observe_and_fuse(&mut ego, setup, next, &racers[0].state, &mut perception_rng) {
                if shift > REPLAN_THRESHOLD {
                    ego.targets[next] = ego.filters[next].as_ref().expect("fused").state;
                    let s = racers[0].state;
                    let plan = plan_min_jerk_vel_constraints(&ego.request(&s, next, track.v_max, track.a_max))?;
                    racers[0].command = tracking(plan, setup.gains, s.timestamp);
                    ego.replans += 1;
                }
            }
        }
    }

    let progress = race.progress().to_vec();
    let outcome = RaceOutcome {
        ranking: race.ranking(),
        leaderboard: race.leaderboard(),
        progress,
        events,
        duration: race.time(),
        ticks,
        replans: ego.replans,
        detections: ego.detections,
    };
    info!("race finished after {:.3} s, ranking {:?}", outcome.duration, outcome.ranking);
    Ok(outcome)
}

/// Observes gate `next` from `state` and fuses the estimate. Returns how far
/// the fused centre lies from the current target.
fn observe_and_fuse(ego: &mut Ego, setup: &RaceSetup, next: usize, state: &RigidState, rng: &mut ChaCha8Rng) -> Option<f64> {
    let gate = &setup.track.gates[next];
    let range = (gate.center() - state.pose.position).norm();
    if range < PERCEPTION_RANGE.0 || range > PERCEPTION_RANGE.1 {
        return None;
    }
    let corners = observe_corners(gate, &setup.camera, &state.pose, CornerSource::Rendered, 0.0, 10, rng).ok()?;
    let z = estimate_center_3d(&corners, &ego.references[next], &setup.camera, &state.pose).ok()?;
    let filter = ego.filters[next].get_or_insert_with(|| {
        let prior = Matrix3::identity() * setup.noise.sigma_pos.powi(2);
        let r = GateCenterKF::from_measurement(z).r;
        GateCenterKF::new(ego.targets[next], prior, crate::perception::kf::DEFAULT_Q, r)
    });
    let s = filter.covariance + filter.r;
    let innovation = z - filter.state;
    let d2 = s.try_inverse().map(|si| (innovation.transpose() * si * innovation)[0])?;
    if d2 > OUTLIER_GATE {
        return None;
    }
    *filter = kf_update(filter, &z).ok()?;
    ego.detections += 1;
    Some((filter.state - ego.targets[next]).norm())
}
