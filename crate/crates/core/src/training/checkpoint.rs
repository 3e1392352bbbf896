//! Checkpoints: an SRW1 weight file plus a JSON sidecar of epoch records at
//! `<weights path>.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EpochRecord;
use crate::error::{Error, Result};
use crate::model::{load_weights, load_weights_for, save_weights, Model, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub epochs: Vec<EpochRecord>,
}

pub fn sidecar_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn checkpoint(model: &Model, records: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    save_weights(model, path)?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&Telemetry {
        epochs: records.to_vec(),
    })?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

#[derive(Debug)]
pub struct Resumed {
    pub model: Model,
    /// `None` when the sidecar is absent; see `warning`.
    pub records: Option<Vec<EpochRecord>>,
    pub warning: Option<String>,
}

pub const MISSING_TELEMETRY: &str = "telemetry missing, weights loaded";

fn finish(model: Model, path: &Path) -> Result<Resumed> {
    let side = sidecar_path(path);
    match std::fs::read_to_string(&side) {
        Ok(text) => {
            let t: Telemetry = serde_json::from_str(&text)?;
            Ok(Resumed {
                model,
                records: Some(t.epochs),
                warning: None,
            })
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let warning = format!("{MISSING_TELEMETRY} ({} not found)", side.display());
            log::warn!("{warning}");
            Ok(Resumed {
                model,
                records: None,
                warning: Some(warning),
            })
        }
        Err(e) => Err(Error::io(side, e)),
    }
}

/// Loads a checkpoint, inferring the model configuration from the stored
/// shapes (mirror padding).
pub fn resume(path: impl AsRef<Path>) -> Result<Resumed> {
    let path = path.as_ref();
    finish(load_weights(path)?, path)
}

/// Loads a checkpoint into a model of configuration `cfg`.
pub fn resume_for(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<Resumed> {
    let path = path.as_ref();
    finish(load_weights_for(path, cfg)?, path)
}
