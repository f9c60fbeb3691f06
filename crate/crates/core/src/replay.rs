//! Play logs, recording, and bit-exact replay.
//!
//! A [`PlayLog`] is everything needed to rerun a session: the project digest,
//! the RNG seed, the tick rate, and the tick-stamped input events. Replaying
//! it regenerates the full [`Trace`] of scenes and outputs, and
//! [`trace_digest`] condenses that trace to one SHA-256.

use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::export::{canonical_outputs_bytes, canonical_scene_bytes};
use crate::io::{as_uint, parse_json, project_digest, Fields, InvalidProject, ParseError};
use crate::project::{Project, MAX_TICK_RATE};
use crate::runtime::{CostumeSizes, EventIn, Scene, Session, SessionError, TickOutputs};

pub const PLAYLOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEvent {
    pub tick: u64,
    pub event: EventIn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayLog {
    pub version: u32,
    pub project_digest: String,
    pub seed: u64,
    pub tick_rate: u32,
    /// Last executed tick. A replay produces `end_tick + 1` records.
    pub end_tick: u64,
    /// Sorted by tick, stable within a tick.
    pub events: Vec<LoggedEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlayLogError {
    #[error("line {line}: {source}")]
    Syntax { line: usize, source: ParseError },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Serialize)]
struct Header<'a> {
    version: u32,
    project_digest: &'a str,
    seed: u64,
    tick_rate: u32,
    end_tick: u64,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum EventLine {
    Tap { x: f64, y: f64 },
    Stop,
}

#[derive(Serialize)]
struct Line {
    tick: u64,
    #[serde(flatten)]
    event: EventLine,
}

impl PlayLog {
    /// Structural rules beyond the line grammar. A stop event, if present,
    /// must be the last event and fall on `end_tick`, since the session
    /// cannot step past it.
    pub fn check(&self) -> Result<(), PlayLogError> {
        let invalid = |m: String| Err(PlayLogError::Invalid(m));
        if self.version != PLAYLOG_VERSION {
            return invalid(format!("unsupported play log version {}", self.version));
        }
        if self.project_digest.len() != 64
            || !self
                .project_digest
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
        {
            return invalid("project_digest must be 64 lowercase hex digits".into());
        }
        if !(1..=MAX_TICK_RATE).contains(&self.tick_rate) {
            return invalid(format!(
                "tick_rate {} outside 1..={MAX_TICK_RATE}",
                self.tick_rate
            ));
        }
        let mut last = 0;
        for (i, e) in self.events.iter().enumerate() {
            if e.tick < last {
                return invalid(format!("event {i} at tick {} is out of order", e.tick));
            }
            if e.tick > self.end_tick {
                return invalid(format!("event {i} at tick {} is after end_tick", e.tick));
            }
            match e.event {
                EventIn::Tap { x, y } if !(x.is_finite() && y.is_finite()) => {
                    return invalid(format!("event {i} has a non-finite coordinate"));
                }
                EventIn::Stop if i + 1 != self.events.len() || e.tick != self.end_tick => {
                    return invalid(format!(
                        "stop event {i} must be the last event, at end_tick"
                    ));
                }
                _ => {}
            }
            last = e.tick;
        }
        Ok(())
    }

    /// `.catplay.jsonl` text: a header line, then one line per event, each
    /// terminated by LF.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Header {
            version: self.version,
            project_digest: &self.project_digest,
            seed: self.seed,
            tick_rate: self.tick_rate,
            end_tick: self.end_tick,
        })
        .expect("header serializes");
        out.push('\n');
        for e in &self.events {
            let event = match e.event {
                EventIn::Tap { x, y } => EventLine::Tap { x, y },
                EventIn::Stop => EventLine::Stop,
            };
            let line = Line {
                tick: e.tick,
                event,
            };
            out.push_str(&serde_json::to_string(&line).expect("finite event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(bytes: &[u8]) -> Result<PlayLog, PlayLogError> {
        let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
        let mut lines = body
            .split(|&b| b == b'\n')
            .enumerate()
            .map(|(i, l)| (i + 1, l));
        let syntax = |line: usize, path: &str, message: &str| PlayLogError::Syntax {
            line,
            source: ParseError {
                path: path.to_string(),
                message: message.to_string(),
            },
        };
        let wrap = |line: usize| move |source: ParseError| PlayLogError::Syntax { line, source };

        let (n, header) = lines.next().expect("split yields at least one item");
        let value = parse_line(header).map_err(wrap(n))?;
        let mut f = Fields::new(&value, "").map_err(wrap(n))?;
        let version = f.uint("version").map_err(wrap(n))?;
        let digest = f.string("project_digest").map_err(wrap(n))?;
        let seed = f.uint("seed").map_err(wrap(n))?;
        let tick_rate = f.uint("tick_rate").map_err(wrap(n))?;
        let end_tick = f.uint("end_tick").map_err(wrap(n))?;
        f.finish().map_err(wrap(n))?;

        let mut events = Vec::new();
        for (n, line) in lines {
            let value = parse_line(line).map_err(wrap(n))?;
            let mut f = Fields::new(&value, "").map_err(wrap(n))?;
            let tick = f.uint("tick").map_err(wrap(n))?;
            let kind = f.string("type").map_err(wrap(n))?;
            let event = match kind.as_str() {
                "tap" => {
                    let mut coord = |key| {
                        let (v, path) = f.required(key)?;
                        v.as_f64()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| crate::io::type_error(&path, "number", v))
                    };
                    let x = coord("x").map_err(wrap(n))?;
                    let y = coord("y").map_err(wrap(n))?;
                    EventIn::Tap { x, y }
                }
                "stop" => EventIn::Stop,
                other => return Err(syntax(n, "type", &format!("unknown event type {other:?}"))),
            };
            f.finish().map_err(wrap(n))?;
            events.push(LoggedEvent { tick, event });
        }
        let log = PlayLog {
            version,
            project_digest: digest,
            seed,
            tick_rate,
            end_tick,
            events,
        };
        log.check()?;
        Ok(log)
    }
}

fn parse_line(line: &[u8]) -> Result<serde_json::Value, ParseError> {
    if line.is_empty() {
        return Err(ParseError {
            path: String::new(),
            message: "blank line".into(),
        });
    }
    if line.contains(&b'\r') {
        return Err(ParseError {
            path: String::new(),
            message: "carriage return in line".into(),
        });
    }
    let value = parse_json(line)?;
    // Reject numbers like 1.0 for integer fields early with a clear path.
    if let Some(tick) = value.get("tick") {
        as_uint::<u64>(tick, "tick")?;
    }
    Ok(value)
}

/// One tick of a run: the scene after the tick and what it emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub scene: Scene,
    pub outputs: TickOutputs,
}

impl TraceRecord {
    pub fn scene_bytes(&self) -> Vec<u8> {
        canonical_scene_bytes(&self.scene)
    }

    pub fn outputs_bytes(&self) -> Vec<u8> {
        canonical_outputs_bytes(&self.outputs)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One JSON object per line: `{"scene":…,"outputs":…}` with both values
    /// embedded verbatim in canonical form.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for r in &self.records {
            out.extend_from_slice(b"{\"scene\":");
            out.extend(r.scene_bytes());
            out.extend_from_slice(b",\"outputs\":");
            out.extend(r.outputs_bytes());
            out.extend_from_slice(b"}\n");
        }
        out
    }
}

/// SHA-256 over each record's canonical scene bytes then outputs bytes, in
/// tick order.
pub fn trace_digest(trace: &Trace) -> String {
    let mut hasher = Sha256::new();
    for r in &trace.records {
        hasher.update(r.scene_bytes());
        hasher.update(r.outputs_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Steps `session` through ticks `session.tick()..=end_tick`, injecting each
/// event on its tick. Stops early if the session stops.
pub fn run_schedule(
    session: &mut Session,
    events: &[LoggedEvent],
    end_tick: u64,
) -> Result<Trace, SessionError> {
    let mut trace = Trace::default();
    let mut pending = events.iter().peekable();
    while session.tick() <= end_tick && !session.is_stopped() {
        let tick = session.tick();
        while let Some(e) = pending.next_if(|e| e.tick <= tick) {
            if e.tick == tick {
                session.inject(e.event.clone());
            }
        }
        let outputs = session.step()?;
        trace.records.push(TraceRecord {
            scene: session.scene(),
            outputs,
        });
    }
    Ok(trace)
}

/// Wraps a live session and logs every injected event with the tick it will
/// be processed on.
#[derive(Debug, Clone)]
pub struct Recorder {
    session: Session,
    project_digest: String,
    events: Vec<LoggedEvent>,
}

impl Recorder {
    pub fn new(session: Session) -> Result<Self, InvalidProject> {
        let project_digest = project_digest(session.project())?;
        Ok(Recorder {
            session,
            project_digest,
            events: Vec::new(),
        })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn inject(&mut self, event: EventIn) {
        if self.session.is_stopped() {
            return;
        }
        self.events.push(LoggedEvent {
            tick: self.session.tick(),
            event: event.clone(),
        });
        self.session.inject(event);
    }

    pub fn step(&mut self) -> Result<TraceRecord, SessionError> {
        let outputs = self.session.step()?;
        Ok(TraceRecord {
            scene: self.session.scene(),
            outputs,
        })
    }

    /// The log of everything executed so far, or `None` before the first
    /// step. Events queued for a tick that has not run yet are left out.
    pub fn play_log(&self) -> Option<PlayLog> {
        let end_tick = self.session.tick().checked_sub(1)?;
        Some(PlayLog {
            version: PLAYLOG_VERSION,
            project_digest: self.project_digest.clone(),
            seed: self.session.seed(),
            tick_rate: self.session.tick_rate(),
            end_tick,
            events: self
                .events
                .iter()
                .filter(|e| e.tick <= end_tick)
                .cloned()
                .collect(),
        })
    }
}

/// Drives `session` through `until_tick` with a scheduled list of inputs and
/// returns the resulting log along with the live trace.
pub fn record(
    session: Session,
    schedule: &[LoggedEvent],
    until_tick: u64,
) -> Result<(PlayLog, Trace), ReplayError> {
    let mut recorder = Recorder::new(session)?;
    let mut trace = Trace::default();
    let mut pending = schedule.iter().peekable();
    while recorder.session().tick() <= until_tick && !recorder.session().is_stopped() {
        let tick = recorder.session().tick();
        while let Some(e) = pending.next_if(|e| e.tick <= tick) {
            recorder.inject(e.event.clone());
        }
        trace.records.push(recorder.step()?);
    }
    let log = recorder
        .play_log()
        .expect("at least one tick runs for any until_tick");
    Ok((log, trace))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("play log was recorded for project {expected}, not {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error(transparent)]
    Log(#[from] PlayLogError),
    #[error(transparent)]
    InvalidProject(#[from] InvalidProject),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Reruns `log` against `project` from a fresh session.
pub fn replay(
    project: &Arc<Project>,
    sizes: &Arc<CostumeSizes>,
    log: &PlayLog,
) -> Result<Trace, ReplayError> {
    log.check()?;
    let actual = project_digest(project)?;
    if actual != log.project_digest {
        return Err(ReplayError::DigestMismatch {
            expected: log.project_digest.clone(),
            actual,
        });
    }
    let mut session = Session::new(
        Arc::clone(project),
        Arc::clone(sizes),
        log.seed,
        Some(log.tick_rate),
    )?;
    Ok(run_schedule(&mut session, &log.events, log.end_tick)?)
}

pub fn verify(
    project: &Arc<Project>,
    sizes: &Arc<CostumeSizes>,
    log: &PlayLog,
    expected_digest: &str,
) -> Result<bool, ReplayError> {
    Ok(trace_digest(&replay(project, sizes, log)?) == expected_digest)
}
