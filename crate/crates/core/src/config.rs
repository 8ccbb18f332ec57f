//! `palace.yaml` loading.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::DistanceMetric;
use crate::error::{PalaceError, Result};
use crate::vindex::HnswParams;

pub const CONFIG_FILE: &str = "palace.yaml";

pub const DEFAULT_EMBEDDING_DIM: usize = 384;
pub const DEFAULT_CHUNK_SIZE: usize = 800;
pub const DEFAULT_CHUNK_OVERLAP: usize = 100;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Builtin,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PalaceConfig {
    #[serde(skip)]
    pub palace_path: PathBuf,
    pub embedding_dim: usize,
    pub distance_metric: DistanceMetric,
    pub chunk_size: usize,
    pub chunk_overlap: usize,
    /// Room name -> keywords, used by the ingest classifier.
    pub room_keywords: BTreeMap<String, Vec<String>>,
    /// Extra names the entity extractor always recognizes.
    pub entity_keywords: Vec<String>,
    pub embedding_provider: ProviderKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_url: Option<String>,
    pub hnsw: HnswParams,
}

impl Default for PalaceConfig {
    fn default() -> Self {
        PalaceConfig {
            palace_path: PathBuf::new(),
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            distance_metric: DistanceMetric::Cosine,
            chunk_size: DEFAULT_CHUNK_SIZE,
            chunk_overlap: DEFAULT_CHUNK_OVERLAP,
            room_keywords: BTreeMap::new(),
            entity_keywords: Vec::new(),
            embedding_provider: ProviderKind::Builtin,
            embedding_url: None,
            hnsw: HnswParams::default(),
        }
    }
}

impl PalaceConfig {
    pub fn with_path(palace_path: impl Into<PathBuf>) -> Self {
        PalaceConfig {
            palace_path: palace_path.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(PalaceError::Config("embedding_dim must be positive".into()));
        }
        if self.chunk_size == 0 {
            return Err(PalaceError::Config("chunk_size must be positive".into()));
        }
        if self.chunk_overlap >= self.chunk_size {
            return Err(PalaceError::Config(format!(
                "chunk_overlap ({}) must be smaller than chunk_size ({})",
                self.chunk_overlap, self.chunk_size
            )));
        }
        if self.embedding_provider == ProviderKind::Http && self.embedding_url.is_none() {
            return Err(PalaceError::Config(
                "embedding_provider http requires embedding_url".into(),
            ));
        }
        self.hnsw
            .validate()
            .map_err(|e| PalaceError::Config(e.to_string()))?;
        for room in self.room_keywords.keys() {
            if !crate::types::is_identifier(room) {
                return Err(PalaceError::Config(format!(
                    "room_keywords key {room:?} is not a valid identifier"
                )));
            }
        }
        Ok(())
    }

    pub fn parse(yaml: &str, palace_path: &Path) -> Result<Self> {
        let mut cfg: PalaceConfig = if yaml.trim().is_empty() {
            PalaceConfig::default()
        } else {
            serde_yaml::from_str(yaml).map_err(|e| PalaceError::Config(e.to_string()))?
        };
        cfg.palace_path = palace_path.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_yaml(&self) -> Result<String> {
        serde_yaml::to_string(self).map_err(|e| PalaceError::Config(e.to_string()))
    }

    pub fn save(&self) -> Result<()> {
        fs::create_dir_all(&self.palace_path)?;
        fs::write(self.palace_path.join(CONFIG_FILE), self.to_yaml()?)?;
        Ok(())
    }
}

/// Reads `palace.yaml` from the palace root; absent keys take defaults.
pub fn load_config(palace_path: impl AsRef<Path>) -> Result<PalaceConfig> {
    let palace_path = palace_path.as_ref();
    let file = palace_path.join(CONFIG_FILE);
    if !file.is_file() {
        return Err(PalaceError::NotFound(format!(
            "no palace at {} (missing {CONFIG_FILE})",
            palace_path.display()
        )));
    }
    let text = fs::read_to_string(&file)?;
    PalaceConfig::parse(&text, palace_path)
}
