//! Competition opponents: randomized gate-crossing waypoints and a
//! two-player iterated-best-response planner.
//!
//! The game-theoretic planner is a simplified, sensitivity-free iterated best
//! response. Each player picks from a fixed candidate set of per-gate crossing
//! offsets and a speed scale. A profile is scored by the player's track
//! progress at the evaluation horizon minus the opponent's, minus a penalty
//! for every evaluation step spent within the collision radius while trailing.

use rand::Rng;
use thiserror::Error;

use crate::geometry::{Gate, RigidState, Vec3};
use crate::metrics::{MetricSpline, MetricsError};
use crate::spline::{plan_min_jerk_vel_constraints, PiecewiseSpline, PlanError, SplineRequest};
use crate::track::Track;

/// Distance kept from the inner edge by crossing offsets, m.
pub const GATE_MARGIN: f64 = 0.2;
/// Profiles closer than this count as unchanged.
pub const PROFILE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpponentError {
    #[error("every candidate collides at the start")]
    NoFeasibleCandidate,
    #[error("racer has no gate left to plan for")]
    NoGatesLeft,
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Half extents of the crossing region of `gate` after shrinking by `margin`.
pub fn crossing_half_extents(gate: &Gate, margin: f64) -> (f64, f64) {
    (
        (0.5 * gate.inner_width - margin).max(0.0),
        (0.5 * gate.inner_height - margin).max(0.0),
    )
}

fn uniform<R: Rng>(rng: &mut R, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..half)
    } else {
        0.0
    }
}

/// Uniform gate-local `(y, z)` crossing offset within the shrunk inner rectangle.
pub fn sample_offset<R: Rng>(gate: &Gate, margin: f64, rng: &mut R) -> [f64; 2] {
    let (hy, hz) = crossing_half_extents(gate, margin);
    [uniform(rng, hy), uniform(rng, hz)]
}

/// World point where a racer crosses `gate` at gate-local offset `(y, z)`.
pub fn crossing_point(gate: &Gate, offset: [f64; 2]) -> Vec3 {
    gate.pose.transform_point(&Vec3::new(0.0, offset[0], offset[1]))
}

/// One crossing point per gate, offsets drawn uniformly inside each inner
/// rectangle shrunk by [`GATE_MARGIN`]. Draw order: gate by gate, y then z.
pub fn randomized_waypoints<R: Rng>(track: &Track, rng: &mut R) -> Vec<Vec3> {
    track
        .gates
        .iter()
        .map(|g| crossing_point(g, sample_offset(g, GATE_MARGIN, rng)))
        .collect()
}

/// Which opponent races against the ego racer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpponentPolicy {
    None,
    RandomizedSpline,
    GameTheoretic(IbrParams),
}

impl OpponentPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            OpponentPolicy::None => "none",
            OpponentPolicy::RandomizedSpline => "random_spline",
            OpponentPolicy::GameTheoretic(_) => "game_theoretic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbrParams {
    pub n_candidates: usize,
    /// Gates ahead covered by one plan.
    pub horizon_gates: usize,
    pub collision_radius: f64,
    pub penalty: f64,
    pub max_iterations: usize,
    /// Speed scales are drawn uniformly from this range, capped at 1.
    pub speed_range: (f64, f64),
    pub margin: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Sampling step of the scoring rollouts, s.
    pub eval_dt: f64,
    /// Scoring horizon as a fraction of the nominal plan duration.
    pub horizon_fraction: f64,
}

impl Default for IbrParams {
    fn default() -> Self {
        Self {
            n_candidates: 32,
            horizon_gates: 3,
            collision_radius: 1.0,
            penalty: 100.0,
            max_iterations: 10,
            speed_range: (0.7, 1.0),
            margin: GATE_MARGIN,
            v_max: 10.0,
            a_max: 5.0,
            eval_dt: 0.05,
            horizon_fraction: 0.8,
        }
    }
}

impl IbrParams {
    pub fn validate(&self) -> Result<(), OpponentError> {
        let bad = |m: &str| Err(OpponentError::InvalidParams(m.to_string()));
        if self.n_candidates == 0 || self.horizon_gates == 0 || self.max_iterations == 0 {
            return bad("candidate count, horizon and iteration cap must be at least 1");
        }
        let (lo, hi) = self.speed_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad("speed range must satisfy 0 < lo <= hi <= 1");
        }
        if !(self.collision_radius > 0.0 && self.penalty >= 0.0 && self.margin >= 0.0) {
            return bad("radius must be positive, penalty and margin non-negative");
        }
        if !(self.v_max > 0.0 && self.a_max > 0.0 && self.eval_dt > 0.0) {
            return bad("v_max, a_max and eval_dt must be positive");
        }
        if !(self.horizon_fraction > 0.0 && self.horizon_fraction <= 1.0) {
            return bad("horizon fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

/// One player's strategy over its planning horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerStrategy {
    /// Gate-local `(y, z)` crossing offset per horizon gate, m.
    pub offsets: Vec<[f64; 2]>,
    /// Fraction of `v_max` used, in (0, 1].
    pub speed_scale: f64,
}

impl PlayerStrategy {
    pub fn nominal(n: usize) -> Self {
        Self {
            offsets: vec![[0.0; 2]; n],
            speed_scale: 1.0,
        }
    }

    /// Max-norm distance between two strategies.
    pub fn distance(&self, other: &PlayerStrategy) -> f64 {
        let mut d = (self.speed_scale - other.speed_scale).abs();
        for (a, b) in self.offsets.iter().zip(&other.offsets) {
            d = d.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
        if self.offsets.len() != other.offsets.len() {
            d = f64::INFINITY;
        }
        d
    }
}

/// Strategies of both players; index 0 is the planning player.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    pub players: [PlayerStrategy; 2],
}

/// A racer as seen by the planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RacerSnapshot {
    pub state: RigidState,
    /// Index of the next gate to pass.
    pub next_gate: usize,
}

/// Everything needed to score strategies for one planning call.
#[derive(Debug, Clone)]
pub struct IbrGame {
    pub params: IbrParams,
    pub gates: Vec<Gate>,
    pub progress: MetricSpline,
    pub players: Vec<RacerSnapshot>,
    /// Candidate strategies per player; the first one is the nominal strategy.
    pub candidates: Vec<Vec<PlayerStrategy>>,
    /// Time at which progress is compared, s.
    pub horizon_time: f64,
}

/// Planned trajectory of one player, sampled for scoring.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub spline: PiecewiseSpline,
    pub request: SplineRequest,
    pub positions: Vec<Vec3>,
}

#[derive(Debug, Clone)]
pub struct IbrPlan {
    pub profile: StrategyProfile,
    /// The planning player's trajectory, starting at its snapshot time.
    pub spline: PiecewiseSpline,
    pub request: SplineRequest,
    pub score: f64,
    pub iterations: usize,
    /// Score of the moving player after each best-response step.
    pub history: Vec<(usize, f64)>,
}

impl IbrGame {
    /// Sets up the game for `me` against an optional opponent; candidate
    /// sets are drawn from `rng`, planning player first.
    pub fn new<R: Rng>(
        track: &Track,
        me: RacerSnapshot,
        opponent: Option<RacerSnapshot>,
        params: &IbrParams,
        rng: &mut R,
    ) -> Result<Self, OpponentError> {
        params.validate()?;
        let n_gates = track.gates.len();
        let mut players = vec![me];
        players.extend(opponent);
        if players.iter().any(|p| p.next_gate >= n_gates) {
            return Err(OpponentError::NoGatesLeft);
        }
        let progress = MetricSpline::fit(&track.mission_waypoints())?;
        let mut candidates = Vec::new();
        for p in &players {
            let horizon = params.horizon_gates.min(n_gates - p.next_gate);
            let gates = &track.gates[p.next_gate..p.next_gate + horizon];
            let mut set = vec![PlayerStrategy::nominal(horizon)];
            while set.len() < params.n_candidates {
                let offsets = gates.iter().map(|g| sample_offset(g, params.margin, rng)).collect();
                let (lo, hi) = params.speed_range;
                let speed_scale = if hi > lo { rng.random_range(lo..=hi) } else { hi };
                set.push(PlayerStrategy { offsets, speed_scale });
            }
            candidates.push(set);
        }
        let mut game = Self {
            params: *params,
            gates: track.gates.clone(),
            progress,
            players,
            candidates,
            horizon_time: 0.0,
        };
        let nominal = game.plan(0, &game.candidates[0][0].clone())?;
        game.horizon_time = params.horizon_fraction * nominal.spline.total_duration();
        Ok(game)
    }

    fn request(&self, player: usize, strategy: &PlayerStrategy) -> SplineRequest {
        let snap = &self.players[player];
        let start = snap.state.pose.position;
        let mut waypoints = vec![start];
        for (k, off) in strategy.offsets.iter().enumerate() {
            waypoints.push(crossing_point(&self.gates[snap.next_gate + k], *off));
        }
        let v0 = snap.state.velocity;
        let v_max = (self.params.v_max * strategy.speed_scale).max(v0.norm() * 1.001);
        SplineRequest::new(waypoints, v_max, self.params.a_max).with_start_velocity(v0)
    }

    /// Plans and samples `strategy` for `player` over `[0, horizon_time]`.
    pub fn plan(&self, player: usize, strategy: &PlayerStrategy) -> Result<Rollout, OpponentError> {
        let request = self.request(player, strategy);
        let spline = plan_min_jerk_vel_constraints(&request)?;
        let n = (self.horizon_time / self.params.eval_dt).round() as usize;
        let positions = (0..=n).map(|k| spline.sample_clamped(k as f64 * self.params.eval_dt).position).collect();
        Ok(Rollout { spline, request, positions })
    }

    /// Arc length of the point on the progress spline closest to `p`,
    /// searched between the player's previous gate and its last horizon gate.
    pub fn progress_of(&self, player: usize, p: &Vec3) -> f64 {
        let spline = &self.progress;
        let next = self.players[player].next_gate;
        // knot k + 1 of the mission spline is gate k
        let lo_knot = next;
        let hi_knot = (next + 1 + self.params.horizon_gates).min(spline.knots.len() - 1);
        let (t_lo, t_hi) = (spline.knots[lo_knot], spline.knots[hi_knot]);
        let from = spline.arc.partition_point(|a| a.t < t_lo);
        let to = spline.arc.partition_point(|a| a.t <= t_hi);
        spline.arc[from..to.max(from + 1).min(spline.arc.len())]
            .iter()
            .map(|a| (a.s, (spline.position(a.t) - p).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0.0, |(s, _)| s)
    }

    /// Score of `player` flying `mine` while the other player flies `theirs`.
    pub fn score(&self, player: usize, mine: &Rollout, theirs: Option<&Rollout>) -> f64 {
        let end = *mine.positions.last().expect("rollout has samples");
        let my_progress = self.progress_of(player, &end);
        let Some(theirs) = theirs else {
            return my_progress;
        };
        let other = 1 - player;
        let their_progress = self.progress_of(other, theirs.positions.last().expect("rollout has samples"));
        let r2 = self.params.collision_radius.powi(2);
        let mut hits = 0usize;
        for (a, b) in mine.positions.iter().zip(&theirs.positions) {
            if (a - b).norm_squared() < r2 && self.progress_of(player, a) <= self.progress_of(other, b) {
                hits += 1;
            }
        }
        my_progress - their_progress - self.params.penalty * hits as f64
    }

    /// Best candidate for `player` against `theirs`, keeping `current` on ties.
    fn best_response(
        &self,
        player: usize,
        current: usize,
        theirs: Option<&Rollout>,
        rollouts: &[Rollout],
    ) -> (usize, f64) {
        let mut best = (current, self.score(player, &rollouts[current], theirs));
        for (k, r) in rollouts.iter().enumerate() {
            let s = self.score(player, r, theirs);
            if s > best.1 {
                best = (k, s);
            }
        }
        best
    }

    /// Iterated best response: the planning player moves first, then the
    /// opponent, until the cap or until neither changes strategy.
    pub fn solve(&self) -> Result<IbrPlan, OpponentError> {
        let n_players = self.players.len();
        if n_players == 2 {
            let d = (self.players[0].state.pose.position - self.players[1].state.pose.position).norm();
            let s0 = self.progress_of(0, &self.players[0].state.pose.position);
            let s1 = self.progress_of(1, &self.players[1].state.pose.position);
            if d < self.params.collision_radius && s0 <= s1 && self.params.penalty > 0.0 {
                return Err(OpponentError::NoFeasibleCandidate);
            }
        }
        let rollouts: Vec<Vec<Rollout>> = (0..n_players)
            .map(|p| self.candidates[p].iter().map(|c| self.plan(p, c)).collect::<Result<_, _>>())
            .collect::<Result<_, _>>()?;
        let mut choice = vec![0usize; n_players];
        let mut history = Vec::new();
        let mut iterations = 0;
        let mut score = 0.0;
        for _ in 0..self.params.max_iterations {
            iterations += 1;
            let mut changed = false;
            for p in 0..n_players {
                let theirs = (n_players == 2).then(|| &rollouts[1 - p][choice[1 - p]]);
                let before = self.score(p, &rollouts[p][choice[p]], theirs);
                let (k, s) = self.best_response(p, choice[p], theirs, &rollouts[p]);
                assert!(s >= before, "best response lowered the moving player's score");
                if self.candidates[p][k].distance(&self.candidates[p][choice[p]]) >= PROFILE_TOLERANCE {
                    changed = true;
                }
                choice[p] = k;
                history.push((p, s));
            }
            let theirs = (n_players == 2).then(|| &rollouts[1][choice[1]]);
            score = self.score(0, &rollouts[0][choice[0]], theirs);
            if !changed || n_players == 1 {
                break;
            }
        }
        let other = if n_players == 2 {
            self.candidates[1][choice[1]].clone()
        } else {
            PlayerStrategy::nominal(0)
        };
        let mine = &rollouts[0][choice[0]];
        Ok(IbrPlan {
            profile: StrategyProfile {
                players: [self.candidates[0][choice[0]].clone(), other],
            },
            spline: mine.spline.clone(),
            request: mine.request.clone(),
            score,
            iterations,
            history,
        })
    }
}

/// Plans for `me` against `opponent` by iterated best response.
pub fn ibr_plan<R: Rng>(
    track: &Track,
    me: RacerSnapshot,
    opponent: Option<RacerSnapshot>,
    params: &IbrParams,
    rng: &mut R,
) -> Result<IbrPlan, OpponentError> {
    IbrGame::new(track, me, opponent, params, rng)?.solve()
}
