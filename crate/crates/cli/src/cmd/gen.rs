use std::path::Path;

use pan_core::corpus::{generate, GenSpec};

use crate::error::{usage, CliError};
use crate::run::{read_json, version, write_json};

pub fn run(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec: GenSpec = match spec {
        Some(p) => read_json(p)?,
        None => GenSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| usage(format!("--spec: {e}")))?;
    let corpus = generate(&spec, out)?;
    write_json(
        &out.join("gen.json"),
        &serde_json::json!({ "version": version(), "spec": spec }),
    )?;
    eprintln!("wrote {} images to {}", corpus.samples.len(), out.display());
    Ok(())
}
