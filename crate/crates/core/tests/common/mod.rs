//! Seeded generators shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use brickstage_core::project::{Costume, Sound};
use brickstage_core::replay::LoggedEvent;
use brickstage_core::{
    Brick, CostumeSizes, EventIn, Project, Script, Sprite, StageConfig, Trigger,
};

pub const MAX_SPRITES: usize = 5;
pub const MAX_BRICKS: usize = 20;
pub const MAX_TICKS: u64 = 200;

const MESSAGES: &[&str] = &["go", "ping", "pong", "ünïcode ✓"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// A valid project with at most [`MAX_SPRITES`] sprites and [`MAX_BRICKS`]
/// bricks in total, loops included.
pub fn random_project(rng: &mut ChaCha8Rng) -> Project {
    let sprite_count = rng.gen_range(1..=MAX_SPRITES);
    let mut budget = rng.gen_range(0..=MAX_BRICKS);
    let sprites = (0..sprite_count)
        .map(|i| {
            let costumes: Vec<Costume> = (0..rng.gen_range(0..=3))
                .map(|k| Costume {
                    id: format!("c{k}"),
                    file: format!("img/s{i}_c{k}.png"),
                })
                .collect();
            let sounds: Vec<Sound> = (0..rng.gen_range(0..=2))
                .map(|k| Sound {
                    id: format!("snd{k}"),
                    file: format!("snd/{k}.ogg"),
                })
                .collect();
            let scripts = (0..rng.gen_range(0..=3))
                .map(|_| Script {
                    trigger: random_trigger(rng),
                    bricks: random_bricks(rng, &costumes, &sounds, &mut budget, 0),
                })
                .collect();
            Sprite {
                name: if i == 0 {
                    "Stage".to_string()
                } else {
                    format!("Sprite {i}")
                },
                costumes,
                sounds,
                scripts,
            }
        })
        .collect();
    Project {
        format_version: 1,
        name: format!("generated {}", rng.gen::<u16>()),
        stage: StageConfig {
            width: rng.gen_range(1..=480),
            height: rng.gen_range(1..=800),
            tick_rate: *[1, 10, 30, 60, 240].choose(rng).unwrap(),
        },
        sprites,
    }
}

fn random_trigger(rng: &mut ChaCha8Rng) -> Trigger {
    match rng.gen_range(0..3) {
        0 => Trigger::WhenProgramStarts,
        1 => Trigger::WhenTapped,
        _ => Trigger::WhenIReceive {
            message: message(rng),
        },
    }
}

fn message(rng: &mut ChaCha8Rng) -> String {
    MESSAGES.choose(rng).unwrap().to_string()
}

fn coord(rng: &mut ChaCha8Rng) -> i32 {
    if rng.gen_bool(0.05) {
        *[i32::MIN, i32::MAX, 0].choose(rng).unwrap()
    } else {
        rng.gen_range(-300..=300)
    }
}

fn random_bricks(
    rng: &mut ChaCha8Rng,
    costumes: &[Costume],
    sounds: &[Sound],
    budget: &mut usize,
    depth: usize,
) -> Vec<Brick> {
    let mut out = Vec::new();
    let want = rng.gen_range(0..=6);
    while out.len() < want && *budget > 0 {
        *budget -= 1;
        let brick = match rng.gen_range(0..18) {
            0 => Brick::Wait {
                millis: rng.gen_range(0..=1500),
            },
            1 => Brick::Broadcast {
                message: message(rng),
            },
            2 => Brick::BroadcastAndWait {
                message: message(rng),
            },
            3 => Brick::PlaceAt {
                x: coord(rng),
                y: coord(rng),
            },
            4 => Brick::GlideTo {
                x: coord(rng),
                y: coord(rng),
                millis: rng.gen_range(1..=1000),
            },
            5 => Brick::ChangeXBy { dx: coord(rng) },
            6 => Brick::ChangeYBy { dy: coord(rng) },
            7 => {
                let (a, b) = (coord(rng), coord(rng));
                let (c, d) = (coord(rng), coord(rng));
                Brick::PlaceAtRandom {
                    xmin: a.min(b),
                    xmax: a.max(b),
                    ymin: c.min(d),
                    ymax: c.max(d),
                }
            }
            8 if !costumes.is_empty() => Brick::SetCostume {
                costume_id: costumes.choose(rng).unwrap().id.clone(),
            },
            9 => Brick::NextCostume,
            10 => Brick::Show,
            11 => Brick::Hide,
            12 => Brick::SetSize {
                percent: rng.gen_range(1..=400),
            },
            13 => Brick::ComeToFront,
            14 if !sounds.is_empty() => Brick::PlaySound {
                sound_id: sounds.choose(rng).unwrap().id.clone(),
            },
            15 => Brick::Speak {
                text: ["hi", "Hello world!", "", "\"quoted\"\n"]
                    .choose(rng)
                    .unwrap()
                    .to_string(),
            },
            16 if depth < 3 => Brick::Repeat {
                count: rng.gen_range(0..=4),
                body: random_bricks(rng, costumes, sounds, budget, depth + 1),
            },
            17 if depth < 3 => Brick::Forever {
                body: random_bricks(rng, costumes, sounds, budget, depth + 1),
            },
            _ => Brick::Show,
        };
        out.push(brick);
    }
    out
}

/// Pixel sizes for every costume, standing in for PNG headers.
pub fn random_sizes(rng: &mut ChaCha8Rng, project: &Project) -> CostumeSizes {
    let mut sizes = CostumeSizes::new();
    for s in &project.sprites {
        for c in &s.costumes {
            sizes.insert(
                &s.name,
                &c.id,
                rng.gen_range(1..=120),
                rng.gen_range(1..=120),
            );
        }
    }
    sizes
}

/// A tap schedule over ticks `0..=end_tick`, optionally ending in a stop on
/// `end_tick`. Taps are aimed at the stage, sometimes at a sprite's home.
pub fn random_schedule(rng: &mut ChaCha8Rng, stage: &StageConfig) -> (Vec<LoggedEvent>, u64) {
    let end_tick = rng.gen_range(0..=MAX_TICKS);
    let mut events: Vec<LoggedEvent> = (0..rng.gen_range(0..=12))
        .map(|_| {
            let (hw, hh) = (f64::from(stage.width) / 2.0, f64::from(stage.height) / 2.0);
            let (x, y) = if rng.gen_bool(0.4) {
                (0.0, 0.0)
            } else {
                (rng.gen_range(-hw..=hw), rng.gen_range(-hh..=hh))
            };
            LoggedEvent {
                tick: rng.gen_range(0..=end_tick),
                event: EventIn::Tap { x, y },
            }
        })
        .collect();
    events.sort_by_key(|e| e.tick);
    if rng.gen_bool(0.3) {
        events.push(LoggedEvent {
            tick: end_tick,
            event: EventIn::Stop,
        });
    }
    (events, end_tick)
}

/// One generated (project, sizes, seed, schedule, end_tick) case.
pub struct Case {
    pub project: Arc<Project>,
    pub sizes: Arc<CostumeSizes>,
    pub seed: u64,
    pub events: Vec<LoggedEvent>,
    pub end_tick: u64,
}

pub fn random_case(case_seed: u64) -> Case {
    let mut r = rng(case_seed);
    let project = random_project(&mut r);
    let sizes = random_sizes(&mut r, &project);
    let (events, end_tick) = random_schedule(&mut r, &project.stage);
    Case {
        project: Arc::new(project),
        sizes: Arc::new(sizes),
        seed: r.gen(),
        events,
        end_tick,
    }
}

/// Random byte-level damage: flips, deletions, insertions, truncation and
/// splices of JSON punctuation.
pub fn mutate(rng: &mut ChaCha8Rng, doc: &[u8]) -> Vec<u8> {
    let mut out = doc.to_vec();
    for _ in 0..rng.gen_range(1..=4) {
        if out.is_empty() {
            out.push(b'{');
            continue;
        }
        let i = rng.gen_range(0..out.len());
        match rng.gen_range(0..6) {
            0 => out[i] ^= 1 << rng.gen_range(0..8),
            1 => {
                out.remove(i);
            }
            2 => out.insert(i, *b"{}[]\",:0-e.\\".choose(rng).unwrap()),
            3 => out.truncate(i),
            4 => out[i] = rng.gen(),
            _ => {
                let j = rng.gen_range(0..out.len());
                let (a, b) = (i.min(j), i.max(j));
                let chunk = out[a..b].to_vec();
                let at = rng.gen_range(0..=out.len());
                out.splice(at..at, chunk);
            }
        }
    }
    out
}
