//! Static program representation: projects, sprites, scripts, and bricks.
//!
//! A [`Project`] is plain data. It is checked by [`validate`], which reports
//! every rule violation with a path into the document instead of stopping at
//! the first one.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

/// The only project format version this crate reads and writes.
pub const FORMAT_VERSION: u32 = 1;

/// Deepest allowed nesting of loop bodies. Top-level script bricks sit at depth 1.
pub const MAX_NESTING_DEPTH: usize = 64;

pub const MAX_TICK_RATE: u32 = 240;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Project {
    pub format_version: u32,
    pub name: String,
    pub stage: StageConfig,
    /// Project order doubles as scheduling order and default layer order.
    pub sprites: Vec<Sprite>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageConfig {
    pub width: u32,
    pub height: u32,
    pub tick_rate: u32,
}

impl Default for StageConfig {
    /// Portrait phone stage at 30 ticks per second.
    fn default() -> Self {
        StageConfig {
            width: 480,
            height: 800,
            tick_rate: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sprite {
    pub name: String,
    pub costumes: Vec<Costume>,
    pub sounds: Vec<Sound>,
    pub scripts: Vec<Script>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Costume {
    pub id: String,
    /// Relative path of an RGBA PNG, resolved against the project directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sound {
    pub id: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Script {
    pub trigger: Trigger,
    pub bricks: Vec<Brick>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type")]
pub enum Trigger {
    WhenProgramStarts,
    WhenTapped,
    WhenIReceive { message: String },
}

/// One command block. Every parameter is a literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type")]
pub enum Brick {
    Wait {
        millis: u64,
    },
    Broadcast {
        message: String,
    },
    BroadcastAndWait {
        message: String,
    },
    PlaceAt {
        x: i32,
        y: i32,
    },
    GlideTo {
        x: i32,
        y: i32,
        millis: u64,
    },
    ChangeXBy {
        dx: i32,
    },
    ChangeYBy {
        dy: i32,
    },
    PlaceAtRandom {
        xmin: i32,
        xmax: i32,
        ymin: i32,
        ymax: i32,
    },
    SetCostume {
        costume_id: String,
    },
    NextCostume,
    Show,
    Hide,
    SetSize {
        percent: u32,
    },
    ComeToFront,
    PlaySound {
        sound_id: String,
    },
    Speak {
        text: String,
    },
    Repeat {
        count: u64,
        body: Vec<Brick>,
    },
    Forever {
        body: Vec<Brick>,
    },
}

impl Brick {
    /// Variant name as it appears in the `"type"` field of a project document.
    pub fn type_name(&self) -> &'static str {
        match self {
            Brick::Wait { .. } => "Wait",
            Brick::Broadcast { .. } => "Broadcast",
            Brick::BroadcastAndWait { .. } => "BroadcastAndWait",
            Brick::PlaceAt { .. } => "PlaceAt",
            Brick::GlideTo { .. } => "GlideTo",
            Brick::ChangeXBy { .. } => "ChangeXBy",
            Brick::ChangeYBy { .. } => "ChangeYBy",
            Brick::PlaceAtRandom { .. } => "PlaceAtRandom",
            Brick::SetCostume { .. } => "SetCostume",
            Brick::NextCostume => "NextCostume",
            Brick::Show => "Show",
            Brick::Hide => "Hide",
            Brick::SetSize { .. } => "SetSize",
            Brick::ComeToFront => "ComeToFront",
            Brick::PlaySound { .. } => "PlaySound",
            Brick::Speak { .. } => "Speak",
            Brick::Repeat { .. } => "Repeat",
            Brick::Forever { .. } => "Forever",
        }
    }

    pub fn body(&self) -> Option<&[Brick]> {
        match self {
            Brick::Repeat { body, .. } | Brick::Forever { body } => Some(body),
            _ => None,
        }
    }
}

impl Project {
    pub fn sprite_index(&self, name: &str) -> Option<usize> {
        self.sprites.iter().position(|s| s.name == name)
    }
}

impl Sprite {
    pub fn costume_index(&self, id: &str) -> Option<usize> {
        self.costumes.iter().position(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Location in document terms, e.g. `sprites[1].scripts[0].bricks[2]`.
    pub path: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    UnsupportedFormatVersion(u32),
    EmptyStage,
    TickRateOutOfRange(u32),
    NoSprites,
    DuplicateSpriteName(String),
    EmptyAssetId,
    DuplicateCostumeId(String),
    DuplicateSoundId(String),
    UnsafeAssetPath(String),
    EmptyMessage,
    NestingTooDeep,
    InvertedRandomRange,
    ZeroGlideDuration,
    ZeroSize,
    UnknownCostume(String),
    UnknownSound(String),
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::UnsupportedFormatVersion(v) => {
                write!(f, "format_version must be {FORMAT_VERSION}, found {v}")
            }
            ViolationKind::EmptyStage => f.write_str("stage dimension must be at least 1"),
            ViolationKind::TickRateOutOfRange(r) => {
                write!(f, "tick_rate must be in 1..={MAX_TICK_RATE}, found {r}")
            }
            ViolationKind::NoSprites => f.write_str("project must contain at least one sprite"),
            ViolationKind::DuplicateSpriteName(n) => write!(f, "duplicate sprite name {n:?}"),
            ViolationKind::EmptyAssetId => f.write_str("asset id must not be empty"),
            ViolationKind::DuplicateCostumeId(id) => write!(f, "duplicate costume id {id:?}"),
            ViolationKind::DuplicateSoundId(id) => write!(f, "duplicate sound id {id:?}"),
            ViolationKind::UnsafeAssetPath(p) => {
                write!(
                    f,
                    "asset path {p:?} must be relative without parent components"
                )
            }
            ViolationKind::EmptyMessage => f.write_str("message must not be empty"),
            ViolationKind::NestingTooDeep => {
                write!(f, "bricks nested deeper than {MAX_NESTING_DEPTH} levels")
            }
            ViolationKind::InvertedRandomRange => {
                f.write_str("random range requires xmin <= xmax and ymin <= ymax")
            }
            ViolationKind::ZeroGlideDuration => f.write_str("glide duration must be positive"),
            ViolationKind::ZeroSize => f.write_str("size percent must be positive"),
            ViolationKind::UnknownCostume(id) => write!(f, "sprite has no costume {id:?}"),
            ViolationKind::UnknownSound(id) => write!(f, "sprite has no sound {id:?}"),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.kind)
    }
}

/// Returns every rule violation in document order. An empty list means the
/// project is valid.
pub fn validate(project: &Project) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |path: String, kind: ViolationKind| out.push(Violation { path, kind });

    if project.format_version != FORMAT_VERSION {
        push(
            "format_version".into(),
            ViolationKind::UnsupportedFormatVersion(project.format_version),
        );
    }
    let stage = &project.stage;
    if stage.width == 0 {
        push("stage.width".into(), ViolationKind::EmptyStage);
    }
    if stage.height == 0 {
        push("stage.height".into(), ViolationKind::EmptyStage);
    }
    if !(1..=MAX_TICK_RATE).contains(&stage.tick_rate) {
        push(
            "stage.tick_rate".into(),
            ViolationKind::TickRateOutOfRange(stage.tick_rate),
        );
    }
    if project.sprites.is_empty() {
        push("sprites".into(), ViolationKind::NoSprites);
    }

    let mut names = HashSet::new();
    for (si, sprite) in project.sprites.iter().enumerate() {
        let sp = format!("sprites[{si}]");
        if !names.insert(sprite.name.as_str()) {
            push(
                format!("{sp}.name"),
                ViolationKind::DuplicateSpriteName(sprite.name.clone()),
            );
        }

        let mut ids = HashSet::new();
        for (ci, costume) in sprite.costumes.iter().enumerate() {
            let cp = format!("{sp}.costumes[{ci}]");
            if costume.id.is_empty() {
                push(format!("{cp}.id"), ViolationKind::EmptyAssetId);
            } else if !ids.insert(costume.id.as_str()) {
                push(
                    format!("{cp}.id"),
                    ViolationKind::DuplicateCostumeId(costume.id.clone()),
                );
            }
            if !is_safe_relative_path(&costume.file) {
                push(
                    format!("{cp}.file"),
                    ViolationKind::UnsafeAssetPath(costume.file.clone()),
                );
            }
        }

        let mut ids = HashSet::new();
        for (ci, sound) in sprite.sounds.iter().enumerate() {
            let cp = format!("{sp}.sounds[{ci}]");
            if sound.id.is_empty() {
                push(format!("{cp}.id"), ViolationKind::EmptyAssetId);
            } else if !ids.insert(sound.id.as_str()) {
                push(
                    format!("{cp}.id"),
                    ViolationKind::DuplicateSoundId(sound.id.clone()),
                );
            }
            if !is_safe_relative_path(&sound.file) {
                push(
                    format!("{cp}.file"),
                    ViolationKind::UnsafeAssetPath(sound.file.clone()),
                );
            }
        }

        for (ki, script) in sprite.scripts.iter().enumerate() {
            let kp = format!("{sp}.scripts[{ki}]");
            if let Trigger::WhenIReceive { message } = &script.trigger {
                if message.is_empty() {
                    push(format!("{kp}.trigger.message"), ViolationKind::EmptyMessage);
                }
            }
            check_bricks(
                sprite,
                &script.bricks,
                &format!("{kp}.bricks"),
                1,
                &mut push,
            );
        }
    }
    out
}

fn check_bricks(
    sprite: &Sprite,
    bricks: &[Brick],
    list_path: &str,
    depth: usize,
    push: &mut impl FnMut(String, ViolationKind),
) {
    if depth > MAX_NESTING_DEPTH {
        if !bricks.is_empty() {
            push(format!("{list_path}[0]"), ViolationKind::NestingTooDeep);
        }
        return;
    }
    for (i, brick) in bricks.iter().enumerate() {
        let path = format!("{list_path}[{i}]");
        match brick {
            Brick::PlaceAtRandom {
                xmin,
                xmax,
                ymin,
                ymax,
            } if xmin > xmax || ymin > ymax => {
                push(path.clone(), ViolationKind::InvertedRandomRange);
            }
            Brick::GlideTo { millis: 0, .. } => {
                push(path.clone(), ViolationKind::ZeroGlideDuration)
            }
            Brick::SetSize { percent: 0 } => push(path.clone(), ViolationKind::ZeroSize),
            Brick::SetCostume { costume_id } if sprite.costume_index(costume_id).is_none() => {
                push(
                    path.clone(),
                    ViolationKind::UnknownCostume(costume_id.clone()),
                );
            }
            Brick::PlaySound { sound_id } if !sprite.sounds.iter().any(|s| &s.id == sound_id) => {
                push(path.clone(), ViolationKind::UnknownSound(sound_id.clone()));
            }
            _ => {}
        }
        if let Some(body) = brick.body() {
            check_bricks(sprite, body, &format!("{path}.body"), depth + 1, push);
        }
    }
}

/// Accepts nonempty relative paths made of normal components only.
pub fn is_safe_relative_path(path: &str) -> bool {
    if path.is_empty() || path.starts_with('/') || path.starts_with('\\') {
        return false;
    }
    let bytes = path.as_bytes();
    if bytes.len() >= 2 && bytes[1] == b':' && bytes[0].is_ascii_alphabetic() {
        return false;
    }
    path.split(['/', '\\'])
        .all(|part| !part.is_empty() && part != ".." && part != ".")
}
