//! Subcommands of the `drl` binary.
//!
//! Every command takes its parsed arguments and a writer for the report it
//! prints, and returns the in-memory result so callers (and tests) can
//! inspect it without scraping text. Exit codes come from [`CliError::exit_code`].

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use drl_core::dynamics::{run_spline_mission, TrackerGains, VehicleParams, MAX_DT};
use drl_core::environment::{build_sdf, build_voxel_grid, VoxelGrid};
use drl_core::geometry::{Gate, Pose, RigidState};
use drl_core::metrics::{complexity_report, ComplexityReport};
use drl_core::opponents::{IbrParams, OpponentPolicy};
use drl_core::perception::{evaluate_perception, PerceptionConfig, PerceptionReport};
use drl_core::race::detect_gate_pass;
use drl_core::race::log::{evaluate_log, Evaluation, LogError};
use drl_core::race::GateNoise;
use drl_core::seed::{SeedSplitter, Stream};
use drl_core::sensor::export::{write_depth_pfm, write_ppm, write_seg_pgm};
use drl_core::sensor::{project, render, CameraModel, Scene};
use drl_core::sim::{run_race, RaceOutcome, RaceSetup, SimError, DEFAULT_DT};
use drl_core::spline::SplineRequest;
use drl_core::track::{Track, TrackError};

/// Environment variable selecting the log level.
pub const LOG_LEVEL_VAR: &str = "DRL_LOG_LEVEL";
pub const LOG_LEVELS: [&str; 4] = ["error", "warn", "info", "debug"];

/// Dataset domain randomization: gate scale range and position jitter, m.
pub const SCALE_JITTER: (f64, f64) = (0.8, 1.2);
pub const POSITION_JITTER: f64 = 0.5;

pub const CAMERA_WIDTH: usize = 320;
pub const CAMERA_HEIGHT: usize = 240;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O failure: {0}")]
    Io(String),
    #[error("malformed log: {0}")]
    MalformedLog(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::MalformedLog(_) => 4,
        }
    }
}

fn io_err(what: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", what.display()))
}

#[derive(Debug, Parser)]
#[command(name = "drl", version, about = "Deterministic drone-racing lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a race and write its telemetry log.
    Race(RaceArgs),
    /// Compute track complexity metrics.
    Metrics(MetricsArgs),
    /// Re-score a telemetry log.
    Evaluate(EvaluateArgs),
    /// Render a domain-randomized gate dataset.
    Dataset(DatasetArgs),
    /// Dump the occupancy grid and signed distance field of a track.
    Voxelize(VoxelizeArgs),
    /// Measure the gate-pose perception baseline along the track.
    PerceiveEval(PerceiveEvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OpponentKind {
    #[value(name = "none")]
    None,
    #[value(name = "random_spline")]
    RandomSpline,
    #[value(name = "game_theoretic")]
    GameTheoretic,
}

impl OpponentKind {
    pub fn policy(self) -> OpponentPolicy {
        match self {
            OpponentKind::None => OpponentPolicy::None,
            OpponentKind::RandomSpline => OpponentPolicy::RandomizedSpline,
            OpponentKind::GameTheoretic => OpponentPolicy::GameTheoretic(IbrParams::default()),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CameraArgs {
    /// Horizontal field of view of the 320x240 camera, degrees.
    #[arg(long = "camera-fov-deg", value_name = "DEG", default_value_t = 90.0)]
    pub camera_fov_deg: f64,
}

impl CameraArgs {
    pub fn camera(&self) -> Result<CameraModel, CliError> {
        let fov = self.camera_fov_deg;
        if !(fov > 0.0 && fov < 180.0) {
            return Err(CliError::Config(format!("camera FOV must lie in (0, 180) degrees, got {fov}")));
        }
        let camera = CameraModel::from_hfov(CAMERA_WIDTH, CAMERA_HEIGHT, fov.to_radians());
        camera.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(camera)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RaceArgs {
    /// Track JSON file.
    #[arg(long, value_name = "PATH")]
    pub track: PathBuf,
    /// 1: true gate poses with an opponent, 2: noisy poses with perception, 3: both.
    #[arg(long, value_name = "1|2|3", default_value_t = 1)]
    pub tier: u8,
    /// Opponent racer. Defaults to random_spline in tiers 1 and 3 and none in tier 2.
    #[arg(long, value_enum)]
    pub opponent: Option<OpponentKind>,
    #[arg(long, value_name = "U64", default_value_t = 0)]
    pub seed: u64,
    /// Telemetry log path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Gate position noise sigma, m; yaw noise is 5 degrees per metre of it.
    /// Defaults to 1 m in tiers 2 and 3.
    #[arg(long = "noise-sigma", value_name = "M")]
    pub noise_sigma: Option<f64>,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Simulation step, s.
    #[arg(long, value_name = "S", default_value_t = DEFAULT_DT)]
    pub dt: f64,
}

impl RaceArgs {
    pub fn new(track: impl Into<PathBuf>, tier: u8, opponent: OpponentKind, seed: u64, out: impl Into<PathBuf>) -> Self {
        Self {
            track: track.into(),
            tier,
            opponent: Some(opponent),
            seed,
            out: out.into(),
            noise_sigma: None,
            camera: CameraArgs { camera_fov_deg: 90.0 },
            dt: DEFAULT_DT,
        }
    }

    pub fn setup(&self) -> Result<RaceSetup, CliError> {
        let track = load_track(&self.track)?;
        let default = if self.tier == 2 { OpponentKind::None } else { OpponentKind::RandomSpline };
        let mut setup = RaceSetup::new(track, self.tier, self.opponent.unwrap_or(default).policy(), self.seed);
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(CliError::Config(format!("noise sigma must be non-negative, got {s}")));
            }
            let base = GateNoise::default();
            setup.noise = GateNoise {
                sigma_pos: s,
                sigma_yaw: base.sigma_yaw * s,
            };
        }
        setup.camera = self.camera.camera()?;
        setup.dt = self.dt;
        setup.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(setup)
    }
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    #[arg(long, value_name = "PATH")]
    pub track: PathBuf,
    /// Output directory for curvature.csv, visibility.csv and summary.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Telemetry log written by `drl race`.
    #[arg(value_name = "LOG")]
    pub log: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    #[arg(long, value_name = "PATH")]
    pub track: PathBuf,
    /// Number of frames to render.
    #[arg(long, value_name = "N", default_value_t = 100)]
    pub frames: usize,
    #[arg(long, value_name = "U64", default_value_t = 0)]
    pub seed: u64,
    /// Output directory for images and labels.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Step of the flight the frames are sampled from, s.
    #[arg(long, value_name = "S", default_value_t = DEFAULT_DT)]
    pub dt: f64,
}

#[derive(Debug, Clone, Args)]
pub struct VoxelizeArgs {
    #[arg(long, value_name = "PATH")]
    pub track: PathBuf,
    /// Voxel edge length, m.
    #[arg(long, value_name = "M", default_value_t = 0.25)]
    pub resolution: f64,
    /// Output directory for voxels.bin and sdf.bin.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PerceiveEvalArgs {
    #[arg(long, value_name = "PATH")]
    pub track: PathBuf,
    #[arg(long, value_name = "U64", default_value_t = 0)]
    pub seed: u64,
    /// Output directory for perception.csv and summary.json.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Detections to collect before stopping.
    #[arg(long, value_name = "N", default_value_t = 1000)]
    pub measurements: usize,
    /// Gaussian noise added to each detected corner, px.
    #[arg(long = "corner-noise-px", value_name = "PX", default_value_t = 0.0)]
    pub corner_noise_px: f64,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[arg(long, value_name = "S", default_value_t = DEFAULT_DT)]
    pub dt: f64,
}

pub fn load_track(path: &Path) -> Result<Track, CliError> {
    Track::load(path).map_err(|e| match e {
        TrackError::Io(io) => io_err(path, io),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn check_dt(dt: f64) -> Result<(), CliError> {
    if dt > 0.0 && dt <= MAX_DT {
        Ok(())
    } else {
        Err(CliError::Config(format!("dt must lie in (0, {MAX_DT}] s, got {dt}")))
    }
}

fn print(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
}

/// Ranking followed by the leaderboard, shared by `race` and `evaluate`.
fn standings_text(ranking: &[String], leaderboard: &str) -> String {
    format!("ranking: {}\n{leaderboard}", ranking.join(","))
}

pub fn cmd_race(args: &RaceArgs, out: &mut dyn Write) -> Result<RaceOutcome, CliError> {
    let setup = args.setup()?;
    info!(
        "race on {} tier {} vs {} seed {}",
        setup.track.name,
        setup.tier,
        setup.opponent.name(),
        setup.seed
    );
    let file = File::create(&args.out).map_err(|e| io_err(&args.out, e))?;
    let outcome = run_race(&setup, BufWriter::new(file)).map_err(|e| match e {
        SimError::Io(io) => io_err(&args.out, io),
        other => CliError::Config(other.to_string()),
    })?;
    print(out, &standings_text(&outcome.ranking, &outcome.leaderboard))?;
    Ok(outcome)
}

pub fn cmd_metrics(args: &MetricsArgs, out: &mut dyn Write) -> Result<ComplexityReport, CliError> {
    let track = load_track(&args.track)?;
    let camera = args.camera.camera()?;
    let report = complexity_report(&track, &camera).map_err(|e| CliError::Config(e.to_string()))?;
    create_dir(&args.out)?;
    write_file(&args.out.join("curvature.csv"), |w| report.write_curvature_csv(w))?;
    write_file(&args.out.join("visibility.csv"), |w| report.write_visibility_csv(w))?;
    write_file(&args.out.join("summary.csv"), |w| report.write_summary_csv(w))?;
    print(
        out,
        &format!(
            "track,curvature_metric,length_m\n{},{:.4},{:.3}\n",
            report.track_name, report.curvature_metric, report.track_length
        ),
    )?;
    Ok(report)
}

/// Prints the ranking and leaderboard of a log; warnings go to `err`.
pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<Evaluation, CliError> {
    let file = File::open(&args.log).map_err(|e| io_err(&args.log, e))?;
    let eval = evaluate_log(BufReader::new(file)).map_err(|e| match e {
        LogError::Io(io) => io_err(&args.log, io),
        m @ LogError::Malformed { .. } => CliError::MalformedLog(format!("{}: {m}", args.log.display())),
    })?;
    for w in &eval.warnings {
        warn!("{w}");
        let _ = writeln!(err, "warning: {w}");
    }
    print(out, &standings_text(&eval.ranking(), &eval.leaderboard()))?;
    Ok(eval)
}

/// Domain-randomized copy of `gate`: scales inner and outer size by a
/// uniform factor in [`SCALE_JITTER`] and shifts the centre by isotropic
/// Gaussian noise of [`POSITION_JITTER`]. Returns the gate and the factor.
pub fn jitter_gate<R: Rng>(gate: &Gate, rng: &mut R) -> (Gate, f64) {
    let scale = rng.random_range(SCALE_JITTER.0..=SCALE_JITTER.1);
    let normal = Normal::new(0.0, POSITION_JITTER).expect("valid sigma");
    let mut pose = gate.pose;
    for k in 0..3 {
        pose.position[k] += normal.sample(rng);
    }
    let g = Gate::new(
        gate.id.clone(),
        gate.index,
        pose,
        (gate.inner_width * scale, gate.inner_height * scale),
        (gate.outer_width * scale, gate.outer_height * scale),
    )
    .expect("scaling keeps a valid gate");
    (g, scale)
}

/// One row of the dataset labels file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetLabel {
    pub frame: usize,
    pub time: f64,
    pub gate: Gate,
    pub scale: f64,
    pub camera_pose: Pose,
    /// Projected outer corners, `None` where a corner is behind the camera.
    pub corners: [Option<[f64; 2]>; 4],
}

pub const LABELS_HEADER: &str = "frame,t,gate,scale,outer_w,outer_h,gx,gy,gz,gqw,gqx,gqy,gqz,\
cx,cy,cz,cqw,cqx,cqy,cqz,u0,v0,u1,v1,u2,v2,u3,v3";

fn pose_fields(p: &Pose) -> String {
    let q = p.orientation;
    format!(
        "{:.9},{:.9},{:.9},{:.12},{:.12},{:.12},{:.12}",
        p.position.x, p.position.y, p.position.z, q.w, q.i, q.j, q.k
    )
}

impl DatasetLabel {
    pub fn csv_row(&self) -> String {
        let corners: Vec<String> = self
            .corners
            .iter()
            .map(|c| match c {
                Some([u, v]) => format!("{u:.6},{v:.6}"),
                None => "nan,nan".to_string(),
            })
            .collect();
        format!(
            "{},{:.4},{},{:.9},{:.9},{:.9},{},{},{}",
            self.frame,
            self.time,
            self.gate.index,
            self.scale,
            self.gate.outer_width,
            self.gate.outer_height,
            pose_fields(&self.gate.pose),
            pose_fields(&self.camera_pose),
            corners.join(",")
        )
    }
}

/// Flies the nominal mission once and returns each state together with
/// the index of the gate ahead of it.
fn dataset_flight(track: &Track, dt: f64) -> Result<Vec<(RigidState, usize)>, CliError> {
    let g0 = &track.gates[0];
    let start = RigidState::at_rest(track.start_point(), g0.pose.yaw());
    let req = SplineRequest::new(track.mission_waypoints(), track.v_max, track.a_max);
    let states = run_spline_mission(&start, &req, &TrackerGains::default(), &VehicleParams::default(), dt)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let last = track.gates.len() - 1;
    let mut next = 0;
    let mut out = Vec::with_capacity(states.len());
    for (k, s) in states.iter().enumerate() {
        if k > 0 && next <= last && detect_gate_pass(&states[k - 1].position(), &s.position(), &track.gates[next]).is_some() {
            next += 1;
        }
        out.push((*s, next.min(last)));
    }
    Ok(out)
}

pub fn cmd_dataset(args: &DatasetArgs, out: &mut dyn Write) -> Result<Vec<DatasetLabel>, CliError> {
    let track = load_track(&args.track)?;
    let camera = args.camera.camera()?;
    check_dt(args.dt)?;
    if args.frames == 0 {
        return Err(CliError::Config("frame count must be at least 1".into()));
    }
    let flight = dataset_flight(&track, args.dt)?;
    create_dir(&args.out)?;
    let mut rng = SeedSplitter::new(args.seed).rng(Stream::Dataset);
    let mut labels = Vec::with_capacity(args.frames);
    for frame in 0..args.frames {
        let k = ((frame as f64 + 0.5) * flight.len() as f64 / args.frames as f64) as usize;
        let (state, target) = &flight[k.min(flight.len() - 1)];
        let (gate, scale) = jitter_gate(&track.gates[*target], &mut rng);
        let mut gates = track.gates.clone();
        gates[*target] = gate.clone();
        let bundle = render(&Scene::new(gates), &camera, &state.pose);
        let stem = format!("frame_{frame:05}");
        write_file(&args.out.join(format!("{stem}.ppm")), |w| write_ppm(&bundle, w))?;
        write_file(&args.out.join(format!("{stem}_seg.pgm")), |w| write_seg_pgm(&bundle, w))?;
        write_file(&args.out.join(format!("{stem}_depth.pfm")), |w| write_depth_pfm(&bundle, w))?;
        let corners = gate
            .corners_world(false)
            .map(|c| project(&camera, &state.pose, &c).map(|p| [p.u, p.v]));
        labels.push(DatasetLabel {
            frame,
            time: state.timestamp,
            gate,
            scale,
            camera_pose: state.pose,
            corners,
        });
    }
    let c = &camera;
    write_file(&args.out.join("labels.csv"), |w| {
        writeln!(w, "# width={} height={} fx={:.9} fy={:.9} cx={:.6} cy={:.6}", c.width, c.height, c.fx, c.fy, c.cx, c.cy)?;
        writeln!(w, "{LABELS_HEADER}")?;
        for l in &labels {
            writeln!(w, "{}", l.csv_row())?;
        }
        Ok(())
    })?;
    print(out, &format!("wrote {} frames to {}\n", labels.len(), args.out.display()))?;
    Ok(labels)
}

pub fn cmd_voxelize(args: &VoxelizeArgs, out: &mut dyn Write) -> Result<VoxelGrid, CliError> {
    let track = load_track(&args.track)?;
    let grid = build_voxel_grid(&track, args.resolution).map_err(|e| CliError::Config(e.to_string()))?;
    let sdf = build_sdf(&grid);
    create_dir(&args.out)?;
    write_file(&args.out.join("voxels.bin"), |w| grid.write_dump(w))?;
    write_file(&args.out.join("sdf.bin"), |w| sdf.write_dump(w))?;
    let d = grid.dims;
    print(
        out,
        &format!("dims {} {} {} resolution {} occupied {}\n", d[0], d[1], d[2], grid.resolution, grid.occupied_count()),
    )?;
    Ok(grid)
}

pub fn cmd_perceive_eval(args: &PerceiveEvalArgs, out: &mut dyn Write) -> Result<PerceptionReport, CliError> {
    let track = load_track(&args.track)?;
    check_dt(args.dt)?;
    if args.measurements == 0 {
        return Err(CliError::Config("measurement count must be at least 1".into()));
    }
    if !(args.corner_noise_px >= 0.0 && args.corner_noise_px.is_finite()) {
        return Err(CliError::Config("corner noise must be non-negative".into()));
    }
    let config = PerceptionConfig {
        camera: args.camera.camera()?,
        n_measurements: args.measurements,
        corner_noise_px: args.corner_noise_px,
        dt: args.dt,
        ..PerceptionConfig::default()
    };
    let mut rng = SeedSplitter::new(args.seed).rng(Stream::PerceptionNoise);
    let report = evaluate_perception(&track, &config, &mut rng).map_err(|e| CliError::Config(e.to_string()))?;
    create_dir(&args.out)?;
    write_file(&args.out.join("perception.csv"), |w| report.write_csv(w))?;
    let summary = report.summary_json();
    write_file(&args.out.join("summary.json"), |w| writeln!(w, "{summary}"))?;
    print(out, &format!("{summary}\n"))?;
    Ok(report)
}

/// Runs a parsed command line, printing reports to `out` and warnings to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Race(a) => cmd_race(a, out).map(drop),
        Command::Metrics(a) => cmd_metrics(a, out).map(drop),
        Command::Evaluate(a) => cmd_evaluate(a, out, err).map(drop),
        Command::Dataset(a) => cmd_dataset(a, out).map(drop),
        Command::Voxelize(a) => cmd_voxelize(a, out).map(drop),
        Command::PerceiveEval(a) => cmd_perceive_eval(a, out).map(drop),
    }
}
