//! Telemetry log writer and evaluator.
//!
//! ```text
//! # drl-log v1 track=<name> tier=<n> seed=<u64> gates=<N>
//! <time_s> <racer_id> <x> <y> <z> <vx> <vy> <vz> <gates_passed> <last_gate> <penalty_s> <dq>
//! ```
//!
//! Times have 3 decimals, positions and velocities 4, penalties 3.
//! `last_gate` is `-1` before the first gate, `dq` is `0` or `1`. The
//! `gates=` field is the track's gate count, which the evaluator needs to
//! tell finishers from racers still flying. One tick is written with a
//! single `write_all` and then flushed.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::rules::{leaderboard, rank, Standing};
use super::RacerProgress;
use crate::geometry::RigidState;

pub const LOG_MAGIC: &str = "# drl-log v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogHeader {
    pub track: String,
    pub tier: u8,
    pub seed: u64,
    pub gates: usize,
}

impl LogHeader {
    pub fn line(&self) -> String {
        format!(
            "{LOG_MAGIC} track={} tier={} seed={} gates={}",
            self.track, self.tier, self.seed, self.gates
        )
    }
}

pub struct LogWriter<W: Write> {
    out: W,
    buf: String,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W, header: &LogHeader) -> io::Result<Self> {
        writeln!(out, "{}", header.line())?;
        out.flush()?;
        Ok(Self {
            out,
            buf: String::new(),
        })
    }

    /// One line per racer, then a flush.
    pub fn write_tick(&mut self, time: f64, states: &[RigidState], progress: &[RacerProgress]) -> io::Result<()> {
        use std::fmt::Write as _;
        self.buf.clear();
        for (s, p) in states.iter().zip(progress) {
            let (x, v) = (s.pose.position, s.velocity);
            let last = p.last_gate_passed.map_or(-1, |g| g as i64);
            let _ = writeln!(
                self.buf,
                "{time:.3} {} {:.4} {:.4} {:.4} {:.4} {:.4} {:.4} {} {} {:.3} {}",
                p.racer_id, x.x, x.y, x.z, v.x, v.y, v.z,
                p.gates_passed,
                last,
                p.penalty_seconds,
                u8::from(p.disqualified)
            );
        }
        self.out.write_all(self.buf.as_bytes())?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub racer_id: String,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub gates_passed: usize,
    pub last_gate: Option<usize>,
    pub penalty_seconds: f64,
    pub disqualified: bool,
}

/// Result of replaying a log.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub header: LogHeader,
    pub standings: Vec<Standing>,
    /// Time of the last complete tick.
    pub cutoff: f64,
    pub records: usize,
    pub warnings: Vec<String>,
}

impl Evaluation {
    pub fn ranking(&self) -> Vec<String> {
        rank(&self.standings, self.cutoff)
    }

    pub fn leaderboard(&self) -> String {
        leaderboard(&self.standings, self.cutoff)
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> LogError {
    LogError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn parse_header(line: &str) -> Result<LogHeader, LogError> {
    let rest = line
        .strip_prefix(LOG_MAGIC)
        .ok_or_else(|| malformed(1, "missing `# drl-log v1` header"))?;
    let mut fields = BTreeMap::new();
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| malformed(1, format!("bad header field `{kv}`")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| malformed(1, format!("header lacks `{k}`")));
    let num = |k: &str| -> Result<u64, LogError> {
        get(k)?.parse().map_err(|_| malformed(1, format!("header `{k}` is not a number")))
    };
    Ok(LogHeader {
        track: get("track")?.to_string(),
        tier: u8::try_from(num("tier")?).map_err(|_| malformed(1, "tier out of range"))?,
        seed: num("seed")?,
        gates: num("gates")? as usize,
    })
}

pub fn parse_record(text: &str, line: usize) -> Result<LogRecord, LogError> {
    let f: Vec<&str> = text.split_whitespace().collect();
    if f.len() != 12 {
        return Err(malformed(line, format!("expected 12 fields, found {}", f.len())));
    }
    let num = |i: usize, name: &str| -> Result<f64, LogError> {
        f[i].parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| malformed(line, format!("bad {name} `{}`", f[i])))
    };
    let int = |i: usize, name: &str| -> Result<i64, LogError> {
        f[i].parse::<i64>().map_err(|_| malformed(line, format!("bad {name} `{}`", f[i])))
    };
    let gates = int(8, "gates_passed")?;
    let last = int(9, "last_gate")?;
    let dq = int(11, "dq")?;
    if gates < 0 || last < -1 || !(dq == 0 || dq == 1) {
        return Err(malformed(line, "counter out of range"));
    }
    Ok(LogRecord {
        time: num(0, "time")?,
        racer_id: f[1].to_string(),
        position: [num(2, "x")?, num(3, "y")?, num(4, "z")?],
        velocity: [num(5, "vx")?, num(6, "vy")?, num(7, "vz")?],
        gates_passed: gates as usize,
        last_gate: (last >= 0).then_some(last as usize),
        penalty_seconds: num(10, "penalty")?,
        disqualified: dq == 1,
    })
}

/// Replays a log. A final line without a newline (a write cut short) is
/// dropped with a warning; any other bad line is an error naming it.
pub fn evaluate_log<R: BufRead>(mut input: R) -> Result<Evaluation, LogError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let header_line = lines.first().ok_or_else(|| malformed(1, "empty log"))?;
    let header = parse_header(header_line)?;

    let mut warnings = Vec::new();
    let mut order: Vec<String> = Vec::new();
    let mut last: BTreeMap<String, LogRecord> = BTreeMap::new();
    let mut finish: BTreeMap<String, f64> = BTreeMap::new();
    let mut cutoff = 0.0;
    let mut records = 0;
    for (i, raw) in lines.iter().enumerate().skip(1) {
        let lineno = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec = match parse_record(raw, lineno) {
            Ok(r) => r,
            Err(e) if i == lines.len() - 1 && !complete => {
                warnings.push(format!("ignoring truncated final line {lineno}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(prev) = last.get(&rec.racer_id) {
            if rec.time < prev.time {
                return Err(malformed(lineno, "time went backwards"));
            }
            if rec.gates_passed < prev.gates_passed || rec.penalty_seconds < prev.penalty_seconds {
                return Err(malformed(lineno, "counter decreased"));
            }
        } else {
            order.push(rec.racer_id.clone());
        }
        if rec.gates_passed > header.gates {
            return Err(malformed(lineno, "more gates than the track has"));
        }
        if rec.last_gate != rec.gates_passed.checked_sub(1) {
            return Err(malformed(lineno, "last_gate inconsistent with gates_passed"));
        }
        if rec.gates_passed == header.gates && header.gates > 0 {
            finish.entry(rec.racer_id.clone()).or_insert(rec.time);
        }
        cutoff = f64::max(cutoff, rec.time);
        records += 1;
        last.insert(rec.racer_id.clone(), rec);
    }
    if !complete && warnings.is_empty() && lines.len() > 1 {
        warnings.push("log does not end with a newline".to_string());
    }
    let standings = order
        .iter()
        .map(|id| {
            let r = &last[id];
            Standing {
                racer_id: id.clone(),
                gates_passed: r.gates_passed,
                finish_time: finish.get(id).copied(),
                penalty_seconds: r.penalty_seconds,
                disqualified: r.disqualified,
            }
        })
        .collect();
    Ok(Evaluation {
        header,
        standings,
        cutoff,
        records,
        warnings,
    })
}
