//! The interpreter.
//!
//! A [`Session`] advances one logical tick per [`Session::step`]. Every live
//! script instance gets a turn each tick, in list order, and runs bricks
//! until it yields. Nothing here depends on wall-clock time or thread
//! scheduling, so a (project, seed, event schedule) triple always produces
//! the same sequence of scenes and outputs.

mod rng;
mod scene;

use std::sync::Arc;

use thiserror::Error;

use crate::io::{ensure_valid, InvalidProject};
use crate::project::{Brick, Project, Script, Trigger, MAX_TICK_RATE};

pub use rng::SplitMix64;
pub use scene::{hit_test, CostumeSizes, Scene, SceneEntry};

/// Most bricks one instance may execute in a single tick.
pub const BRICK_BUDGET: u32 = 1000;

pub type InstanceId = u64;

#[derive(Debug, Clone, PartialEq)]
pub enum EventIn {
    Tap { x: f64, y: f64 },
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Emitted {
    Speak { sprite: String, text: String },
    SoundStart { sprite: String, sound_id: String },
    BroadcastSent { message: String },
    ProgramEnded,
}

/// Non-fatal runtime conditions. Not part of the observable trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    BudgetExceeded { sprite: String, script_index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickOutputs {
    pub tick: u64,
    /// In execution order.
    pub emitted: Vec<Emitted>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpriteState {
    pub sprite_index: usize,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
    pub size_percent: f64,
    pub layer: i64,
    pub costume_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Glide {
    pub start: (f64, f64),
    pub target: (f64, f64),
    pub start_tick: u64,
    /// Last tick of motion; the target is assigned exactly on this tick.
    pub end_tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Runnable,
    Sleeping { until_tick: u64 },
    Gliding(Glide),
    WaitingOnBroadcast { receivers: Vec<InstanceId> },
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FrameKind {
    Script,
    Repeat { remaining: u64 },
    Forever,
}

/// Position within one brick list. A nested frame's list is the body of the
/// loop brick its parent frame currently points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Frame {
    pc: usize,
    kind: FrameKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptInstance {
    pub id: InstanceId,
    pub sprite_index: usize,
    pub script_index: usize,
    pub status: Status,
    frames: Vec<Frame>,
    bricks_this_tick: u32,
    active_tick: Option<u64>,
}

impl ScriptInstance {
    pub fn is_live(&self) -> bool {
        self.status != Status::Done
    }

    /// Nesting depth of the brick about to execute (1 = top level).
    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    /// Last tick on which this instance executed a brick or reached the end
    /// of a brick list (a loop iteration or the script itself).
    pub fn active_tick(&self) -> Option<u64> {
        self.active_tick
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error(transparent)]
    InvalidProject(#[from] InvalidProject),
    #[error("tick rate {0} outside 1..={MAX_TICK_RATE}")]
    BadTickRate(u32),
    #[error("session is stopped")]
    Stopped,
    #[error("empty random range: {lo} > {hi}")]
    EmptyRange { lo: i64, hi: i64 },
}

enum Flow {
    Next,
    Yield,
    /// The running instance restarted itself; its turn is over.
    Restarted,
}

#[derive(Debug, Clone)]
pub struct Session {
    project: Arc<Project>,
    sizes: Arc<CostumeSizes>,
    seed: u64,
    tick_rate: u32,
    tick: u64,
    rng: SplitMix64,
    sprites: Vec<SpriteState>,
    instances: Vec<ScriptInstance>,
    pending: Vec<EventIn>,
    stopped: bool,
    next_id: InstanceId,
    ended_reported: bool,
    /// Index of the instance whose turn it is, while a step is running.
    cursor: Option<usize>,
    /// Index of the instance that gets the following turn.
    next_turn: usize,
}

impl Session {
    pub fn new(
        project: Arc<Project>,
        sizes: Arc<CostumeSizes>,
        seed: u64,
        tick_rate_override: Option<u32>,
    ) -> Result<Self, SessionError> {
        ensure_valid(&project)?;
        let tick_rate = tick_rate_override.unwrap_or(project.stage.tick_rate);
        if !(1..=MAX_TICK_RATE).contains(&tick_rate) {
            return Err(SessionError::BadTickRate(tick_rate));
        }
        let sprites = (0..project.sprites.len())
            .map(|i| SpriteState {
                sprite_index: i,
                x: 0.0,
                y: 0.0,
                visible: true,
                size_percent: 100.0,
                layer: i as i64,
                costume_index: 0,
            })
            .collect();
        let mut session = Session {
            project,
            sizes,
            seed,
            tick_rate,
            tick: 0,
            rng: SplitMix64::new(seed),
            sprites,
            instances: Vec::new(),
            pending: Vec::new(),
            stopped: false,
            next_id: 0,
            ended_reported: false,
            cursor: None,
            next_turn: 0,
        };
        let starts: Vec<_> = session
            .scripts_matching(|t| matches!(t, Trigger::WhenProgramStarts))
            .collect();
        for (si, ki) in starts {
            session.trigger(si, ki);
        }
        Ok(session)
    }

    pub fn project(&self) -> &Arc<Project> {
        &self.project
    }

    pub fn costume_sizes(&self) -> &Arc<CostumeSizes> {
        &self.sizes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tick_rate(&self) -> u32 {
        self.tick_rate
    }

    /// Index of the next tick to execute; equals the number of completed steps.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn sprite_states(&self) -> &[SpriteState] {
        &self.sprites
    }

    pub fn instances(&self) -> &[ScriptInstance] {
        &self.instances
    }

    pub fn pending_events(&self) -> &[EventIn] {
        &self.pending
    }

    /// Queues an event for the next step. A no-op once the session is stopped.
    pub fn inject(&mut self, event: EventIn) {
        if !self.stopped {
            self.pending.push(event);
        }
    }

    pub fn next_random_int(&mut self, lo: i64, hi: i64) -> Result<i64, SessionError> {
        if lo > hi {
            return Err(SessionError::EmptyRange { lo, hi });
        }
        Ok(self.rng.next_in_range(lo, hi))
    }

    /// Snapshot of every sprite in painter order. `tick` is the most recently
    /// executed tick (0 before the first step).
    pub fn scene(&self) -> Scene {
        let mut order: Vec<&SpriteState> = self.sprites.iter().collect();
        order.sort_by_key(|s| (s.layer, s.sprite_index));
        let entries = order
            .into_iter()
            .map(|s| {
                let sprite = &self.project.sprites[s.sprite_index];
                SceneEntry {
                    sprite_name: sprite.name.clone(),
                    x: s.x,
                    y: s.y,
                    visible: s.visible,
                    size_percent: s.size_percent,
                    layer: s.layer,
                    costume_id: sprite.costumes.get(s.costume_index).map(|c| c.id.clone()),
                }
            })
            .collect();
        Scene {
            tick: self.tick.saturating_sub(1),
            entries,
        }
    }

    /// Runs one tick: pending events first, then one turn per live instance.
    pub fn step(&mut self) -> Result<TickOutputs, SessionError> {
        if self.stopped {
            return Err(SessionError::Stopped);
        }
        let mut out = TickOutputs {
            tick: self.tick,
            emitted: Vec::new(),
            diagnostics: Vec::new(),
        };
        for inst in &mut self.instances {
            inst.bricks_this_tick = 0;
        }

        let mut stop = false;
        let pending = std::mem::take(&mut self.pending);
        if pending.iter().any(|e| matches!(e, EventIn::Tap { .. })) {
            let scene = self.scene();
            for event in &pending {
                match *event {
                    EventIn::Tap { x, y } => self.tap(&scene, x, y),
                    EventIn::Stop => stop = true,
                }
            }
        } else {
            stop = pending.contains(&EventIn::Stop);
        }

        if stop {
            for inst in &mut self.instances {
                inst.status = Status::Done;
            }
            self.stopped = true;
        } else {
            let mut i = 0;
            while i < self.instances.len() {
                self.cursor = Some(i);
                self.next_turn = i + 1;
                self.run_turn(i, &mut out);
                i = self.next_turn;
            }
            self.cursor = None;
        }

        self.instances.retain(ScriptInstance::is_live);
        if self.instances.is_empty() && !self.ended_reported {
            out.emitted.push(Emitted::ProgramEnded);
            self.ended_reported = true;
        }
        self.tick += 1;
        Ok(out)
    }

    fn tap(&mut self, scene: &Scene, x: f64, y: f64) {
        let Some(hit) = scene::hit_entry(scene, &self.sizes, x, y) else {
            return;
        };
        let name = &scene.entries[hit].sprite_name;
        let si = self
            .project
            .sprite_index(name)
            .expect("scene names come from the project");
        let scripts: Vec<_> = self
            .scripts_matching(|t| matches!(t, Trigger::WhenTapped))
            .filter(|&(s, _)| s == si)
            .collect();
        for (s, k) in scripts {
            self.trigger(s, k);
        }
    }

    fn scripts_matching<'a>(
        &'a self,
        pred: impl Fn(&Trigger) -> bool + 'a,
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        self.project
            .sprites
            .iter()
            .enumerate()
            .flat_map(|(si, sprite)| {
                sprite
                    .scripts
                    .iter()
                    .enumerate()
                    .map(move |(ki, script)| (si, ki, script))
            })
            .filter(move |(_, _, script)| pred(&script.trigger))
            .map(|(si, ki, _)| (si, ki))
    }

    /// Starts the script, restarting its instance if one exists. Returns the
    /// fresh instance id.
    ///
    /// A restarted instance keeps its slot when its turn is still ahead in
    /// this tick; otherwise it moves to the end so it runs later this tick.
    fn trigger(&mut self, sprite_index: usize, script_index: usize) -> InstanceId {
        let id = self.next_id;
        self.next_id += 1;
        self.ended_reported = false;
        let fresh = ScriptInstance {
            id,
            sprite_index,
            script_index,
            status: Status::Runnable,
            frames: vec![Frame {
                pc: 0,
                kind: FrameKind::Script,
            }],
            bricks_this_tick: 0,
            active_tick: None,
        };
        let existing = self
            .instances
            .iter()
            .position(|i| i.sprite_index == sprite_index && i.script_index == script_index);
        match (existing, self.cursor) {
            (None, _) => self.instances.push(fresh),
            (Some(j), Some(c)) if j <= c => {
                let old = self.instances.remove(j);
                self.instances.push(ScriptInstance {
                    bricks_this_tick: old.bricks_this_tick,
                    ..fresh
                });
                self.next_turn -= 1;
                self.cursor = Some(if j < c {
                    c - 1
                } else {
                    self.instances.len() - 1
                });
            }
            (Some(j), _) => {
                let slot = &mut self.instances[j];
                *slot = ScriptInstance {
                    bricks_this_tick: slot.bricks_this_tick,
                    ..fresh
                };
            }
        }
        id
    }

    /// Returns ids of the started receivers and whether the caller restarted itself.
    fn broadcast(&mut self, message: &str) -> (Vec<InstanceId>, bool) {
        let receivers: Vec<_> = self
            .scripts_matching(|t| matches!(t, Trigger::WhenIReceive { message: m } if m == message))
            .collect();
        let caller_slot = self.cursor.map(|c| {
            let inst = &self.instances[c];
            (inst.sprite_index, inst.script_index)
        });
        let mut restarted_self = false;
        let ids = receivers
            .into_iter()
            .map(|(s, k)| {
                if caller_slot == Some((s, k)) {
                    restarted_self = true;
                }
                self.trigger(s, k)
            })
            .collect();
        (ids, restarted_self)
    }

    fn run_turn(&mut self, idx: usize, out: &mut TickOutputs) {
        let tick = self.tick;
        let inst = &mut self.instances[idx];
        match &inst.status {
            Status::Done => return,
            Status::Sleeping { until_tick } => {
                if tick < *until_tick {
                    return;
                }
                inst.status = Status::Runnable;
            }
            Status::Gliding(glide) => {
                let glide = glide.clone();
                let sprite = inst.sprite_index;
                if self.advance_glide(sprite, &glide) {
                    self.instances[idx].status = Status::Runnable;
                }
                return;
            }
            Status::WaitingOnBroadcast { receivers } => {
                let receivers = receivers.clone();
                let busy = receivers
                    .iter()
                    .any(|id| self.instances.iter().any(|i| i.id == *id && i.is_live()));
                if busy {
                    return;
                }
                self.instances[idx].status = Status::Runnable;
            }
            Status::Runnable => {}
        }

        let project = Arc::clone(&self.project);
        let (sprite_index, script_index) = {
            let inst = &self.instances[idx];
            (inst.sprite_index, inst.script_index)
        };
        let script = &project.sprites[sprite_index].scripts[script_index];
        loop {
            let idx = self.cursor.expect("turn runs under a cursor");
            let inst = &mut self.instances[idx];
            let list = brick_list(script, &inst.frames);
            let top = *inst.frames.last().expect("live instance has a frame");
            if top.pc >= list.len() {
                inst.active_tick = Some(tick);
                end_of_list(inst, top);
                return;
            }
            if inst.bricks_this_tick >= BRICK_BUDGET {
                out.diagnostics.push(Diagnostic::BudgetExceeded {
                    sprite: project.sprites[sprite_index].name.clone(),
                    script_index,
                });
                return;
            }
            inst.bricks_this_tick += 1;
            inst.active_tick = Some(tick);
            match self.execute(idx, &list[top.pc], out) {
                Flow::Next => continue,
                Flow::Yield | Flow::Restarted => return,
            }
        }
    }

    /// Executes one brick for the instance at `idx`. The instance's pc still
    /// points at `brick` on entry.
    fn execute(&mut self, idx: usize, brick: &Brick, out: &mut TickOutputs) -> Flow {
        let tick = self.tick;
        let sprite_index = self.instances[idx].sprite_index;
        let advance = |s: &mut Self| {
            s.instances[idx]
                .frames
                .last_mut()
                .expect("live instance has a frame")
                .pc += 1;
        };
        match brick {
            Brick::Wait { millis } => {
                advance(self);
                let until_tick = tick.saturating_add(self.duration_ticks(*millis));
                self.instances[idx].status = Status::Sleeping { until_tick };
                return Flow::Yield;
            }
            Brick::Broadcast { message } => {
                advance(self);
                out.emitted.push(Emitted::BroadcastSent {
                    message: message.clone(),
                });
                if self.broadcast(message).1 {
                    return Flow::Restarted;
                }
            }
            Brick::BroadcastAndWait { message } => {
                advance(self);
                out.emitted.push(Emitted::BroadcastSent {
                    message: message.clone(),
                });
                let (receivers, restarted) = self.broadcast(message);
                if restarted {
                    return Flow::Restarted;
                }
                let idx = self.cursor.expect("turn runs under a cursor");
                let receivers: Vec<_> = receivers
                    .into_iter()
                    .filter(|id| self.instances.iter().any(|i| i.id == *id && i.is_live()))
                    .collect();
                if !receivers.is_empty() {
                    self.instances[idx].status = Status::WaitingOnBroadcast { receivers };
                    return Flow::Yield;
                }
            }
            Brick::PlaceAt { x, y } => {
                let s = &mut self.sprites[sprite_index];
                s.x = f64::from(*x);
                s.y = f64::from(*y);
            }
            Brick::GlideTo { x, y, millis } => {
                advance(self);
                let s = &self.sprites[sprite_index];
                let glide = Glide {
                    start: (s.x, s.y),
                    target: (f64::from(*x), f64::from(*y)),
                    start_tick: tick,
                    end_tick: tick.saturating_add(self.duration_ticks(*millis) - 1),
                };
                let finished = self.advance_glide(sprite_index, &glide);
                self.instances[idx].status = if finished {
                    Status::Runnable
                } else {
                    Status::Gliding(glide)
                };
                return Flow::Yield;
            }
            Brick::ChangeXBy { dx } => self.sprites[sprite_index].x += f64::from(*dx),
            Brick::ChangeYBy { dy } => self.sprites[sprite_index].y += f64::from(*dy),
            Brick::PlaceAtRandom {
                xmin,
                xmax,
                ymin,
                ymax,
            } => {
                let x = self.rng.next_in_range(i64::from(*xmin), i64::from(*xmax));
                let y = self.rng.next_in_range(i64::from(*ymin), i64::from(*ymax));
                let s = &mut self.sprites[sprite_index];
                s.x = x as f64;
                s.y = y as f64;
            }
            Brick::SetCostume { costume_id } => {
                let index = self.project.sprites[sprite_index]
                    .costume_index(costume_id)
                    .expect("validated costume reference");
                self.sprites[sprite_index].costume_index = index;
            }
            Brick::NextCostume => {
                let count = self.project.sprites[sprite_index].costumes.len();
                if count > 0 {
                    let s = &mut self.sprites[sprite_index];
                    s.costume_index = (s.costume_index + 1) % count;
                }
            }
            Brick::Show => self.sprites[sprite_index].visible = true,
            Brick::Hide => self.sprites[sprite_index].visible = false,
            Brick::SetSize { percent } => {
                self.sprites[sprite_index].size_percent = f64::from(*percent)
            }
            Brick::ComeToFront => {
                let top = self.sprites.iter().map(|s| s.layer).max().unwrap_or(0);
                self.sprites[sprite_index].layer = top + 1;
            }
            Brick::PlaySound { sound_id } => out.emitted.push(Emitted::SoundStart {
                sprite: self.project.sprites[sprite_index].name.clone(),
                sound_id: sound_id.clone(),
            }),
            Brick::Speak { text } => out.emitted.push(Emitted::Speak {
                sprite: self.project.sprites[sprite_index].name.clone(),
                text: text.clone(),
            }),
            Brick::Repeat { count, .. } => {
                if *count > 0 {
                    self.instances[idx].frames.push(Frame {
                        pc: 0,
                        kind: FrameKind::Repeat { remaining: *count },
                    });
                    return Flow::Next;
                }
            }
            Brick::Forever { .. } => {
                self.instances[idx].frames.push(Frame {
                    pc: 0,
                    kind: FrameKind::Forever,
                });
                return Flow::Next;
            }
        }
        if !matches!(
            brick,
            Brick::Broadcast { .. } | Brick::BroadcastAndWait { .. }
        ) {
            advance(self);
        }
        Flow::Next
    }

    /// `ceil(millis * tick_rate / 1000)`, at least one tick.
    fn duration_ticks(&self, millis: u64) -> u64 {
        let ticks = (u128::from(millis) * u128::from(self.tick_rate)).div_ceil(1000);
        u64::try_from(ticks).unwrap_or(u64::MAX / 2).max(1)
    }

    /// Places the sprite for the current tick of `glide`; true on its last tick.
    fn advance_glide(&mut self, sprite_index: usize, glide: &Glide) -> bool {
        let s = &mut self.sprites[sprite_index];
        if self.tick >= glide.end_tick {
            (s.x, s.y) = glide.target;
            return true;
        }
        let elapsed = (self.tick - glide.start_tick + 1) as f64;
        let duration = (glide.end_tick - glide.start_tick + 1) as f64;
        s.x = glide.start.0 + (glide.target.0 - glide.start.0) * elapsed / duration;
        s.y = glide.start.1 + (glide.target.1 - glide.start.1) * elapsed / duration;
        false
    }
}

/// Handles the innermost frame running off the end of its list. Loop
/// iterations end with a yield.
fn end_of_list(inst: &mut ScriptInstance, top: Frame) {
    match top.kind {
        FrameKind::Script => inst.status = Status::Done,
        FrameKind::Repeat { remaining: 1 } => {
            inst.frames.pop();
            inst.frames.last_mut().expect("loop has a parent").pc += 1;
        }
        FrameKind::Repeat { remaining } => {
            *inst.frames.last_mut().unwrap() = Frame {
                pc: 0,
                kind: FrameKind::Repeat {
                    remaining: remaining - 1,
                },
            };
        }
        FrameKind::Forever => inst.frames.last_mut().unwrap().pc = 0,
    }
}

/// The brick list the innermost frame is iterating.
fn brick_list<'p>(script: &'p Script, frames: &[Frame]) -> &'p [Brick] {
    let mut list: &[Brick] = &script.bricks;
    for frame in &frames[..frames.len() - 1] {
        list = list[frame.pc]
            .body()
            .expect("parent frame points at a loop");
    }
    list
}
