use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::args::{EvalArgs, ExplainArgs, MakeDemoArgs, MasksArgs};

/// Everything needed to repeat a run. Paths are absolute.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    #[serde(flatten)]
    pub run: Run,
    /// sha256 of the model file contents; absent for adapter models.
    pub model_hash: Option<String>,
    pub provider: Option<String>,
    pub image_ids: Vec<String>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Run {
    Explain(ExplainArgs),
    Eval(EvalArgs),
    MakeDemo(MakeDemoArgs),
    Masks(MasksArgs),
}

impl RunManifest {
    pub fn new(run: Run) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            run,
            model_hash: None,
            provider: None,
            image_ids: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
