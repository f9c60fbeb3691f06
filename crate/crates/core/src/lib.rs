//! Deterministic runtime for a sprite-and-brick programming language.
//!
//! Projects are sprites with costumes, sounds, and scripts of bricks. A
//! [`Session`] interprets a project one logical tick at a time; a
//! [`PlayLog`] captures the seed and the tick-stamped input events of a run,
//! and [`replay`] regenerates the identical [`Trace`] from it.

pub mod assets;
pub mod export;
pub mod io;
pub mod project;
pub mod replay;
pub mod runtime;

pub use io::{
    parse_project, parse_project_unvalidated, project_digest, serialize_project, ParseError,
};
pub use project::{validate, Brick, Project, Script, Sprite, StageConfig, Trigger, Violation};
pub use replay::{replay, trace_digest, verify, PlayLog, Recorder, Trace};
pub use runtime::{CostumeSizes, Emitted, EventIn, Scene, SceneEntry, Session, TickOutputs};
