//! Run records written next to every output so a run can be reproduced.

use std::path::{Path, PathBuf};

use pan_core::fsio::{read, write_atomic};
use pan_core::network::PanConfig;
use pan_core::retrieval::RerankParams;
use pan_core::PanError;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const RUN_FILE: &str = "run.json";

pub fn version() -> String {
    format!("pan {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRun {
    pub version: String,
    pub corpus: PathBuf,
    pub stage: String,
    pub init: Option<PathBuf>,
    pub network: PanConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankRun {
    pub version: String,
    pub query: PathBuf,
    pub gallery: PathBuf,
    pub alpha: f64,
    pub rerank: Option<RerankParams>,
    pub cross_camera_only: bool,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PanError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PanError> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| PanError::Format {
        path: path.to_path_buf(),
        msg: format!("invalid JSON: {e}"),
    })
}

/// The training record of the run directory holding `ckpt`.
pub fn train_run_for(ckpt: &Path) -> Result<TrainRun, PanError> {
    let dir = ckpt.parent().unwrap_or(Path::new("."));
    read_json(&dir.join(RUN_FILE))
}
