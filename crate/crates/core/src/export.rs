//! Canonical byte encodings of scenes and tick outputs, plus frame rendering.
//!
//! The canonical encodings are compact JSON with a fixed field order.
//! Floating-point values are written as the 16 hex digits of their IEEE-754
//! bit pattern, so the bytes never depend on decimal formatting.

use std::collections::HashMap;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::project::StageConfig;
use crate::runtime::{Emitted, Scene, TickOutputs};

struct Bits(f64);

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:016x}", self.0.to_bits()))
    }
}

#[derive(Serialize)]
struct SceneRecord<'a> {
    tick: u64,
    entries: Vec<EntryRecord<'a>>,
}

#[derive(Serialize)]
struct EntryRecord<'a> {
    sprite_name: &'a str,
    x: Bits,
    y: Bits,
    visible: bool,
    size_percent: Bits,
    layer: i64,
    costume_id: Option<&'a str>,
}

#[derive(Serialize)]
struct OutputsRecord<'a> {
    tick: u64,
    events: Vec<EventRecord<'a>>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EventRecord<'a> {
    Speak { sprite: &'a str, text: &'a str },
    SoundStart { sprite: &'a str, sound_id: &'a str },
    Broadcast { message: &'a str },
    ProgramEnded,
}

pub fn canonical_scene_bytes(scene: &Scene) -> Vec<u8> {
    let record = SceneRecord {
        tick: scene.tick,
        entries: scene
            .entries
            .iter()
            .map(|e| EntryRecord {
                sprite_name: &e.sprite_name,
                x: Bits(e.x),
                y: Bits(e.y),
                visible: e.visible,
                size_percent: Bits(e.size_percent),
                layer: e.layer,
                costume_id: e.costume_id.as_deref(),
            })
            .collect(),
    };
    serde_json::to_vec(&record).expect("scene record serializes")
}

/// Diagnostics are not part of the encoding; only emitted events are.
pub fn canonical_outputs_bytes(outputs: &TickOutputs) -> Vec<u8> {
    let record = OutputsRecord {
        tick: outputs.tick,
        events: outputs
            .emitted
            .iter()
            .map(|e| match e {
                Emitted::Speak { sprite, text } => EventRecord::Speak { sprite, text },
                Emitted::SoundStart { sprite, sound_id } => {
                    EventRecord::SoundStart { sprite, sound_id }
                }
                Emitted::BroadcastSent { message } => EventRecord::Broadcast { message },
                Emitted::ProgramEnded => EventRecord::ProgramEnded,
            })
            .collect(),
    };
    serde_json::to_vec(&record).expect("outputs record serializes")
}

/// Row-major RGBA8 pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: [u8; 4]) -> Self {
        let n = width as usize * height as usize;
        Image {
            width,
            height,
            pixels: fill.repeat(n),
        }
    }

    /// `None` unless `pixels.len() == width * height * 4`.
    pub fn from_rgba(width: u32, height: u32, pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == width as usize * height as usize * 4).then_some(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        self.pixels[i..i + 4].try_into().unwrap()
    }

    fn blend(&mut self, x: usize, y: usize, src: [u8; 4]) {
        let i = (y * self.width as usize + x) * 4;
        let a = u32::from(src[3]);
        let dst = &mut self.pixels[i..i + 4];
        for c in 0..3 {
            dst[c] = ((u32::from(src[c]) * a + u32::from(dst[c]) * (255 - a) + 127) / 255) as u8;
        }
        dst[3] = (a + (u32::from(dst[3]) * (255 - a) + 127) / 255) as u8;
    }
}

/// Decoded costume images keyed by sprite name then costume id.
#[derive(Debug, Clone, Default)]
pub struct CostumeImages {
    images: HashMap<String, HashMap<String, Image>>,
}

impl CostumeImages {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sprite: &str, costume_id: &str, image: Image) {
        self.images
            .entry(sprite.to_string())
            .or_default()
            .insert(costume_id.to_string(), image);
    }

    pub fn get(&self, sprite: &str, costume_id: &str) -> Option<&Image> {
        self.images.get(sprite)?.get(costume_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RasterError {
    #[error("no image loaded for costume {costume_id:?} of visible sprite {sprite:?}")]
    MissingAsset { sprite: String, costume_id: String },
}

fn round_half_away(v: f64) -> i64 {
    // f64::round already rounds half away from zero.
    v.round() as i64
}

/// Rounds a stage coordinate to whole pixels. Positions beyond 2^52 are far
/// off any canvas; clamping them keeps the placement arithmetic in range.
fn to_pixel(v: f64) -> i64 {
    const LIMIT: f64 = (1u64 << 52) as f64;
    v.round().clamp(-LIMIT, LIMIT) as i64
}

/// Paints `scene` onto a white stage-sized canvas in entry order.
///
/// Stage origin maps to the canvas center with y pointing up. Costumes are
/// scaled by nearest-neighbor sampling and blended source-over.
pub fn rasterize(
    scene: &Scene,
    stage: &StageConfig,
    images: &CostumeImages,
) -> Result<Image, RasterError> {
    let mut canvas = Image::new(stage.width, stage.height, [255, 255, 255, 255]);
    let (cw, ch) = (i64::from(stage.width), i64::from(stage.height));
    for entry in scene.entries.iter().filter(|e| e.visible) {
        let Some(costume_id) = entry.costume_id.as_deref() else {
            continue;
        };
        let img = images.get(&entry.sprite_name, costume_id).ok_or_else(|| {
            RasterError::MissingAsset {
                sprite: entry.sprite_name.clone(),
                costume_id: costume_id.to_string(),
            }
        })?;
        let (iw, ih) = (i64::from(img.width), i64::from(img.height));
        let sw = round_half_away(iw as f64 * entry.size_percent / 100.0);
        let sh = round_half_away(ih as f64 * entry.size_percent / 100.0);
        if sw <= 0 || sh <= 0 {
            continue;
        }
        let left = cw / 2 + to_pixel(entry.x) - sw / 2;
        let top = ch / 2 - to_pixel(entry.y) - sh / 2;
        let cols = (-left).max(0)..(cw - left).min(sw);
        let rows = (-top).max(0)..(ch - top).min(sh);
        for dy in rows {
            let sy = ((2 * dy as i128 + 1) * ih as i128 / (2 * sh as i128)) as u32;
            for dx in cols.clone() {
                let sx = ((2 * dx as i128 + 1) * iw as i128 / (2 * sw as i128)) as u32;
                canvas.blend((left + dx) as usize, (top + dy) as usize, img.pixel(sx, sy));
            }
        }
    }
    Ok(canvas)
}

/// Binary P6 with maxval 255. Alpha is composited against white.
pub fn write_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.reserve(image.pixels.len() / 4 * 3);
    for px in image.pixels.chunks_exact(4) {
        let a = u32::from(px[3]);
        for &c in &px[..3] {
            out.push(((u32::from(c) * a + 255 * (255 - a) + 127) / 255) as u8);
        }
    }
    out
}
