//! Wire messages, protocol version 1. One JSON text frame per message.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use brickstage_core::replay::{Trace, TraceRecord};
use brickstage_core::{Emitted, Scene, SceneEntry, TickOutputs};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Load { project_name: String },
    Start { seed: u64 },
    Tap { x: f64, y: f64 },
    // Braced so that unknown fields are rejected like everywhere else.
    Stop {},
    SaveLog {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol_version: u32,
        projects: Vec<String>,
    },
    Loaded {
        project_digest: String,
        stage: StageInfo,
        costumes: Vec<CostumeInfo>,
    },
    Frame {
        tick: u64,
        scene: Vec<WireEntry>,
    },
    Event {
        tick: u64,
        kind: String,
        payload: Value,
    },
    /// `playlog` is the `.catplay.jsonl` text, byte for byte.
    Log {
        playlog: String,
    },
    Error {
        message: String,
    },
    Ended {
        tick: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    pub w: u32,
    pub h: u32,
    pub tick_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostumeInfo {
    pub sprite: String,
    pub costume_id: String,
    /// URL of the image under `/assets/`.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireEntry {
    pub sprite_name: String,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
    pub size_percent: f64,
    pub layer: i64,
    pub costume_id: Option<String>,
}

impl From<&SceneEntry> for WireEntry {
    fn from(e: &SceneEntry) -> Self {
        WireEntry {
            sprite_name: e.sprite_name.clone(),
            x: e.x,
            y: e.y,
            visible: e.visible,
            size_percent: e.size_percent,
            layer: e.layer,
            costume_id: e.costume_id.clone(),
        }
    }
}

impl From<WireEntry> for SceneEntry {
    fn from(e: WireEntry) -> Self {
        SceneEntry {
            sprite_name: e.sprite_name,
            x: e.x,
            y: e.y,
            visible: e.visible,
            size_percent: e.size_percent,
            layer: e.layer,
            costume_id: e.costume_id,
        }
    }
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            message: message.into(),
        }
    }

    pub fn frame(scene: &Scene) -> Self {
        ServerMessage::Frame {
            tick: scene.tick,
            scene: scene.entries.iter().map(WireEntry::from).collect(),
        }
    }

    pub fn event(tick: u64, emitted: &Emitted) -> Self {
        let (kind, payload) = match emitted {
            Emitted::Speak { sprite, text } => ("speak", json!({ "sprite": sprite, "text": text })),
            Emitted::SoundStart { sprite, sound_id } => (
                "sound_start",
                json!({ "sprite": sprite, "sound_id": sound_id }),
            ),
            Emitted::BroadcastSent { message } => ("broadcast", json!({ "message": message })),
            Emitted::ProgramEnded => ("program_ended", json!({})),
        };
        ServerMessage::Event {
            tick,
            kind: kind.to_string(),
            payload,
        }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Inverse of [`ServerMessage::event`].
pub fn emitted_from_wire(kind: &str, payload: &Value) -> Option<Emitted> {
    let field = |name: &str| payload.get(name)?.as_str().map(str::to_string);
    Some(match kind {
        "speak" => Emitted::Speak {
            sprite: field("sprite")?,
            text: field("text")?,
        },
        "sound_start" => Emitted::SoundStart {
            sprite: field("sprite")?,
            sound_id: field("sound_id")?,
        },
        "broadcast" => Emitted::BroadcastSent {
            message: field("message")?,
        },
        "program_ended" => Emitted::ProgramEnded,
        _ => return None,
    })
}

/// Rebuilds a [`Trace`] from a stream of server messages. Events for a tick
/// arrive before that tick's frame.
#[derive(Debug, Default)]
pub struct StreamTrace {
    trace: Trace,
    pending: Vec<Emitted>,
}

impl StreamTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds one message. Returns `false` for event kinds it cannot decode.
    pub fn push(&mut self, message: &ServerMessage) -> bool {
        match message {
            ServerMessage::Event { kind, payload, .. } => match emitted_from_wire(kind, payload) {
                Some(e) => self.pending.push(e),
                None => return false,
            },
            ServerMessage::Frame { tick, scene } => {
                self.trace.records.push(TraceRecord {
                    scene: Scene {
                        tick: *tick,
                        entries: scene.iter().cloned().map(SceneEntry::from).collect(),
                    },
                    outputs: TickOutputs {
                        tick: *tick,
                        emitted: std::mem::take(&mut self.pending),
                        diagnostics: Vec::new(),
                    },
                });
            }
            _ => {}
        }
        true
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }
}
