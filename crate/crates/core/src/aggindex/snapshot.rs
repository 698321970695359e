//! JSON snapshots of persistent indexes. Floats are written with shortest
//! round-trip formatting, so a reloaded forest answers bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DynamicRangeForest, RangeForest};
use crate::error::{Error, Result};

pub const SNAPSHOT_FORMAT: &str = "tnkde-index";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Per-edge indexes of a whole network; `None` marks edges without events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "edges", rename_all = "lowercase")]
pub enum Snapshot {
    Rfs(Vec<Option<RangeForest>>),
    Drfs(Vec<Option<DynamicRangeForest>>),
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: Snapshot,
}

pub fn save_snapshot(path: &Path, snapshot: &Snapshot) -> Result<()> {
    let env = Envelope {
        format: SNAPSHOT_FORMAT.to_string(),
        version: SNAPSHOT_VERSION,
        body: snapshot.clone(),
    };
    let text = serde_json::to_string(&env).map_err(|e| Error::Snapshot(e.to_string()))?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let head: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Snapshot(e.to_string()))?;
    if head.get("format").and_then(|f| f.as_str()) != Some(SNAPSHOT_FORMAT) {
        return Err(Error::Snapshot("not an index snapshot".into()));
    }
    match head.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(SNAPSHOT_VERSION) => {}
        other => return Err(Error::Snapshot(format!("unsupported snapshot version {other:?}"))),
    }
    let env: Envelope = serde_json::from_value(head).map_err(|e| Error::Snapshot(e.to_string()))?;
    Ok(env.body)
}
