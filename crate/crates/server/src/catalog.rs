//! The set of projects a service instance offers.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use thiserror::Error;

use brickstage_core::assets::load_costume_sizes;
use brickstage_core::{parse_project, project_digest, CostumeSizes, ParseError, Project};

use crate::protocol::{CostumeInfo, StageInfo};

pub const PROJECT_SUFFIX: &str = ".catproj.json";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read project directory {}: {source}", path.display())]
    Dir {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("project name {name:?} is used by both {} and {}", first.display(), second.display())]
    Duplicate {
        name: String,
        first: PathBuf,
        second: PathBuf,
    },
}

#[derive(Debug)]
pub struct CatalogEntry {
    pub name: String,
    pub path: PathBuf,
    pub project: Arc<Project>,
    pub sizes: Arc<CostumeSizes>,
    pub digest: String,
}

impl CatalogEntry {
    pub fn load(name: &str, path: &Path) -> Result<Self, CatalogError> {
        let bytes = fs::read(path).map_err(|source| CatalogError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let project = parse_project(&bytes).map_err(|source| CatalogError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let digest = project_digest(&project).expect("parsed projects are valid");
        let (sizes, errors) = load_costume_sizes(&project, &base_dir(path));
        for e in errors {
            tracing::warn!("{name}: {e}");
        }
        Ok(CatalogEntry {
            name: name.to_string(),
            path: path.to_path_buf(),
            project: Arc::new(project),
            sizes: Arc::new(sizes),
            digest,
        })
    }

    pub fn asset_dir(&self) -> PathBuf {
        base_dir(&self.path)
    }

    pub fn stage_info(&self) -> StageInfo {
        let s = &self.project.stage;
        StageInfo {
            w: s.width,
            h: s.height,
            tick_rate: s.tick_rate,
        }
    }

    pub fn costumes(&self) -> Vec<CostumeInfo> {
        let enc = |s: &str| utf8_percent_encode(s, NON_ALPHANUMERIC).to_string();
        self.project
            .sprites
            .iter()
            .flat_map(|sprite| {
                sprite.costumes.iter().map(move |c| CostumeInfo {
                    sprite: sprite.name.clone(),
                    costume_id: c.id.clone(),
                    file: format!(
                        "/assets/{}/{}?project={}",
                        enc(&sprite.name),
                        enc(&c.id),
                        enc(&self.name)
                    ),
                })
            })
            .collect()
    }

    /// File backing a costume, if the project has it.
    pub fn costume_file(&self, sprite: &str, costume_id: &str) -> Option<PathBuf> {
        let s = self.project.sprites.iter().find(|s| s.name == sprite)?;
        let c = s.costumes.iter().find(|c| c.id == costume_id)?;
        Some(self.asset_dir().join(&c.file))
    }
}

fn base_dir(project_file: &Path) -> PathBuf {
    project_file
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

#[derive(Debug, Default)]
pub struct Catalog {
    entries: BTreeMap<String, Arc<CatalogEntry>>,
}

impl Catalog {
    /// Loads every `*.catproj.json` in `dir` and in its immediate
    /// subdirectories. A project is named after its file without the suffix.
    pub fn load_dir(dir: &Path) -> Result<Self, CatalogError> {
        let dir_err = |source| CatalogError::Dir {
            path: dir.to_path_buf(),
            source,
        };
        let mut files = Vec::new();
        for entry in fs::read_dir(dir).map_err(dir_err)? {
            let path = entry.map_err(dir_err)?.path();
            if path.is_dir() {
                let sub = fs::read_dir(&path).map_err(|source| CatalogError::Dir {
                    path: path.clone(),
                    source,
                })?;
                for e in sub.flatten() {
                    files.push(e.path());
                }
            } else {
                files.push(path);
            }
        }
        files.sort();

        let mut catalog = Catalog::default();
        for path in files {
            let Some(name) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(PROJECT_SUFFIX))
            else {
                continue;
            };
            if name.is_empty() || !path.is_file() {
                continue;
            }
            if let Some(first) = catalog.entries.get(name) {
                return Err(CatalogError::Duplicate {
                    name: name.to_string(),
                    first: first.path.clone(),
                    second: path,
                });
            }
            let entry = CatalogEntry::load(name, &path)?;
            catalog.entries.insert(name.to_string(), Arc::new(entry));
        }
        Ok(catalog)
    }

    pub fn insert(&mut self, entry: CatalogEntry) {
        self.entries.insert(entry.name.clone(), Arc::new(entry));
    }

    pub fn get(&self, name: &str) -> Option<&Arc<CatalogEntry>> {
        self.entries.get(name)
    }

    /// Project names in sorted order.
    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
