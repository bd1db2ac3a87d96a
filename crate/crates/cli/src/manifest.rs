use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::commands::Run;

/// Provenance record for one invocation. Written to stderr so that stdout
/// stays identical across reruns.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario: Option<PathBuf>,
    pub scenario_sha256: Option<String>,
    pub version: String,
    pub elapsed_seconds: f64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, run: Run, elapsed: Duration) -> Self {
        let (scenario, scenario_sha256) = match run.scenario {
            Some(src) => (Some(src.path), Some(src.sha256)),
            None => (None, None),
        };
        RunManifest {
            command: command.to_string(),
            scenario,
            scenario_sha256,
            version: env!("CARGO_PKG_VERSION").to_string(),
            elapsed_seconds: elapsed.as_secs_f64(),
            outputs: run.outputs,
        }
    }

    pub fn emit(&self, file: Option<&Path>) -> Result<()> {
        let json = serde_json::to_string(self)?;
        eprintln!("{json}");
        if let Some(path) = file {
            std::fs::write(path, format!("{json}\n"))
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}
