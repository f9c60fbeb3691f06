//! Per-connection protocol state, independent of the transport and the clock.
//!
//! The driver feeds client messages to [`Connection::handle`] and calls
//! [`Connection::poll`] whenever time passes; both take the current time as a
//! duration since an arbitrary fixed origin and return the messages to send.

use std::sync::Arc;
use std::time::Duration;

use brickstage_core::replay::TraceRecord;
use brickstage_core::{EventIn, Recorder, Session};

use crate::catalog::{Catalog, CatalogEntry};
use crate::pacing::TickPacer;
use crate::protocol::{ClientMessage, ServerMessage, PROTOCOL_VERSION};

enum Phase {
    Idle,
    Loaded,
    Running {
        started_at: Duration,
        pacer: TickPacer,
    },
    Ended,
}

pub struct Connection {
    catalog: Arc<Catalog>,
    project: Option<Arc<CatalogEntry>>,
    recorder: Option<Recorder>,
    phase: Phase,
}

impl Connection {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        Connection {
            catalog,
            project: None,
            recorder: None,
            phase: Phase::Idle,
        }
    }

    /// The greeting sent as soon as the channel opens.
    pub fn hello(&self) -> ServerMessage {
        ServerMessage::Hello {
            protocol_version: PROTOCOL_VERSION,
            projects: self.catalog.names(),
        }
    }

    pub fn is_running(&self) -> bool {
        matches!(self.phase, Phase::Running { .. })
    }

    /// Handles a raw text frame. Malformed input yields an error message and
    /// leaves the state untouched.
    pub fn handle_text(&mut self, text: &str, now: Duration) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg, now),
            Err(e) => vec![ServerMessage::error(format!("malformed message: {e}"))],
        }
    }

    pub fn handle(&mut self, msg: ClientMessage, now: Duration) -> Vec<ServerMessage> {
        // Catch up first so a tap lands on the tick after the last one due.
        let mut out = self.poll(now);
        match msg {
            ClientMessage::Load { project_name } => out.push(self.load(&project_name)),
            ClientMessage::Start { seed } => {
                if let Err(e) = self.start(seed, now) {
                    out.push(e);
                }
            }
            ClientMessage::Tap { x, y } => match self.recorder_if_running() {
                Some(rec) => rec.inject(EventIn::Tap { x, y }),
                None => out.push(ServerMessage::error("tap: no session is running")),
            },
            ClientMessage::Stop {} => out.extend(self.stop()),
            ClientMessage::SaveLog {} => out.push(self.save_log()),
        }
        out
    }

    /// Runs every tick that has come due by `now`, in order.
    pub fn poll(&mut self, now: Duration) -> Vec<ServerMessage> {
        let Phase::Running { started_at, pacer } = self.phase else {
            return Vec::new();
        };
        let due = pacer.due(now.saturating_sub(started_at));
        let mut out = Vec::new();
        while let Some(rec) = self.recorder.as_mut() {
            if rec.session().tick() >= due {
                break;
            }
            match rec.step() {
                Ok(record) => push_record(&mut out, &record),
                Err(e) => {
                    out.push(ServerMessage::error(format!("session failed: {e}")));
                    self.phase = Phase::Ended;
                    break;
                }
            }
        }
        out
    }

    /// Time at which the next tick comes due, if a session is running.
    pub fn next_deadline(&self) -> Option<Duration> {
        let Phase::Running { started_at, pacer } = self.phase else {
            return None;
        };
        let tick = self.recorder.as_ref()?.session().tick();
        Some(started_at + pacer.deadline(tick))
    }

    fn recorder_if_running(&mut self) -> Option<&mut Recorder> {
        if self.is_running() {
            self.recorder.as_mut()
        } else {
            None
        }
    }

    fn load(&mut self, name: &str) -> ServerMessage {
        if self.is_running() {
            return ServerMessage::error("load: stop the running session first");
        }
        let Some(entry) = self.catalog.get(name) else {
            return ServerMessage::error(format!("load: unknown project {name:?}"));
        };
        let entry = Arc::clone(entry);
        let msg = ServerMessage::Loaded {
            project_digest: entry.digest.clone(),
            stage: entry.stage_info(),
            costumes: entry.costumes(),
        };
        self.project = Some(entry);
        self.recorder = None;
        self.phase = Phase::Loaded;
        msg
    }

    fn start(&mut self, seed: u64, now: Duration) -> Result<(), ServerMessage> {
        match self.phase {
            Phase::Idle => return Err(ServerMessage::error("start: no project loaded")),
            Phase::Running { .. } => {
                return Err(ServerMessage::error("start: a session is already running"))
            }
            Phase::Loaded | Phase::Ended => {}
        }
        let entry = self.project.as_ref().expect("loaded phase has a project");
        let session = Session::new(
            Arc::clone(&entry.project),
            Arc::clone(&entry.sizes),
            seed,
            None,
        )
        .map_err(|e| ServerMessage::error(format!("start: {e}")))?;
        let pacer = TickPacer::new(session.tick_rate());
        let recorder =
            Recorder::new(session).map_err(|e| ServerMessage::error(format!("start: {e}")))?;
        self.recorder = Some(recorder);
        self.phase = Phase::Running {
            started_at: now,
            pacer,
        };
        Ok(())
    }

    /// Processes the stop on the next tick immediately and ends the stream.
    fn stop(&mut self) -> Vec<ServerMessage> {
        let Some(rec) = self.recorder_if_running() else {
            return vec![ServerMessage::error("stop: no session is running")];
        };
        rec.inject(EventIn::Stop);
        let mut out = Vec::new();
        match rec.step() {
            Ok(record) => {
                push_record(&mut out, &record);
                out.push(ServerMessage::Ended {
                    tick: record.outputs.tick,
                });
            }
            Err(e) => out.push(ServerMessage::error(format!("session failed: {e}"))),
        }
        self.phase = Phase::Ended;
        out
    }

    fn save_log(&self) -> ServerMessage {
        let Some(rec) = &self.recorder else {
            return ServerMessage::error("save_log: no session has been started");
        };
        match rec.play_log() {
            Some(log) => ServerMessage::Log {
                playlog: log.to_jsonl(),
            },
            None => ServerMessage::error("save_log: no tick has run yet"),
        }
    }
}

fn push_record(out: &mut Vec<ServerMessage>, record: &TraceRecord) {
    let tick = record.outputs.tick;
    out.extend(
        record
            .outputs
            .emitted
            .iter()
            .map(|e| ServerMessage::event(tick, e)),
    );
    out.push(ServerMessage::frame(&record.scene));
}
