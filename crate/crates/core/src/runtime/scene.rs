use std::collections::HashMap;

/// One tick's render snapshot. Entries cover every sprite, hidden or not,
/// in painter order: ascending `(layer, sprite index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub tick: u64,
    pub entries: Vec<SceneEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneEntry {
    pub sprite_name: String,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
    pub size_percent: f64,
    pub layer: i64,
    /// `None` only for sprites without costumes.
    pub costume_id: Option<String>,
}

/// Pixel dimensions of costume images, keyed by sprite name then costume id.
///
/// Hit-testing needs costume extents; the project document only names the
/// image files, so whoever has the assets supplies their sizes here.
/// Costumes with no entry cannot be tapped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostumeSizes {
    sizes: HashMap<String, HashMap<String, (u32, u32)>>,
}

impl CostumeSizes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sprite: &str, costume_id: &str, width: u32, height: u32) {
        self.sizes
            .entry(sprite.to_string())
            .or_default()
            .insert(costume_id.to_string(), (width, height));
    }

    pub fn get(&self, sprite: &str, costume_id: &str) -> Option<(u32, u32)> {
        self.sizes.get(sprite)?.get(costume_id).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.values().all(HashMap::is_empty)
    }
}

impl SceneEntry {
    /// Axis-aligned box `(left, bottom, right, top)` in stage units, or `None`
    /// when the costume size is unknown.
    pub fn bounds(&self, sizes: &CostumeSizes) -> Option<(f64, f64, f64, f64)> {
        let (w, h) = sizes.get(&self.sprite_name, self.costume_id.as_deref()?)?;
        let half_w = f64::from(w) * self.size_percent / 200.0;
        let half_h = f64::from(h) * self.size_percent / 200.0;
        Some((
            self.x - half_w,
            self.y - half_h,
            self.x + half_w,
            self.y + half_h,
        ))
    }

    fn contains(&self, sizes: &CostumeSizes, x: f64, y: f64) -> bool {
        self.visible
            && self
                .bounds(sizes)
                .is_some_and(|(l, b, r, t)| l <= x && x <= r && b <= y && y <= t)
    }
}

/// Position in `scene.entries` of the topmost visible sprite containing the point.
pub(crate) fn hit_entry(scene: &Scene, sizes: &CostumeSizes, x: f64, y: f64) -> Option<usize> {
    scene.entries.iter().rposition(|e| e.contains(sizes, x, y))
}

/// Name of the topmost visible sprite whose box contains `(x, y)`, edges
/// inclusive.
pub fn hit_test<'a>(scene: &'a Scene, sizes: &CostumeSizes, x: f64, y: f64) -> Option<&'a str> {
    hit_entry(scene, sizes, x, y).map(|i| scene.entries[i].sprite_name.as_str())
}
