//! Loading costume images referenced by a project from disk.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::export::{CostumeImages, Image};
use crate::project::Project;
use crate::runtime::CostumeSizes;

#[derive(Debug, Error)]
#[error("costume {costume_id:?} of sprite {sprite:?}: cannot load {}: {source}", path.display())]
pub struct AssetError {
    pub sprite: String,
    pub costume_id: String,
    pub path: PathBuf,
    #[source]
    pub source: image::ImageError,
}

/// Every costume of the project as `(sprite, costume_id, absolute path)`.
pub fn costume_paths<'a>(
    project: &'a Project,
    base_dir: &'a Path,
) -> impl Iterator<Item = (&'a str, &'a str, PathBuf)> + 'a {
    project.sprites.iter().flat_map(move |s| {
        s.costumes
            .iter()
            .map(move |c| (s.name.as_str(), c.id.as_str(), base_dir.join(&c.file)))
    })
}

/// Reads image headers for every costume. Unreadable assets are returned
/// separately and left out of the table, which makes them untappable.
pub fn load_costume_sizes(project: &Project, base_dir: &Path) -> (CostumeSizes, Vec<AssetError>) {
    let mut sizes = CostumeSizes::new();
    let mut errors = Vec::new();
    for (sprite, costume_id, path) in costume_paths(project, base_dir) {
        match image::image_dimensions(&path) {
            Ok((w, h)) => sizes.insert(sprite, costume_id, w, h),
            Err(source) => errors.push(AssetError {
                sprite: sprite.to_string(),
                costume_id: costume_id.to_string(),
                path,
                source,
            }),
        }
    }
    (sizes, errors)
}

pub fn load_costume_images(project: &Project, base_dir: &Path) -> (CostumeImages, Vec<AssetError>) {
    let mut images = CostumeImages::new();
    let mut errors = Vec::new();
    for (sprite, costume_id, path) in costume_paths(project, base_dir) {
        match image::open(&path) {
            Ok(img) => {
                let rgba = img.into_rgba8();
                let (w, h) = rgba.dimensions();
                let img =
                    Image::from_rgba(w, h, rgba.into_raw()).expect("decoder yields w*h*4 bytes");
                images.insert(sprite, costume_id, img);
            }
            Err(source) => errors.push(AssetError {
                sprite: sprite.to_string(),
                costume_id: costume_id.to_string(),
                path,
                source,
            }),
        }
    }
    (images, errors)
}
