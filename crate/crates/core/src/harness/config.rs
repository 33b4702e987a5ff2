use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::HarnessError;
use crate::engine::SearchBudget;
use crate::gateway::BackendConfig;
use crate::pipeline::Method;
use crate::world::GoalMode;

/// `[run]` table. Every field is optional; command-line flags win.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub dataset: Option<PathBuf>,
    pub method: Option<Method>,
    pub parallelism: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub run_seed: Option<u64>,
    pub text_only: Option<bool>,
    pub three_call: Option<bool>,
    pub goal_mode: Option<GoalMode>,
}

/// A TOML run configuration:
///
/// ```toml
/// [run]
/// method = "neuroground"
/// parallelism = 4
///
/// [budget]
/// max_expanded_nodes = 200000
/// wall_timeout = 10.0
///
/// [backend]
/// kind = "noisy"
/// corruption_prob = 0.3
/// seed = 1
/// ```
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub run: RunSection,
    pub budget: Option<SearchBudget>,
    pub backend: Option<BackendConfig>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| e.to_string())?;
        if let Some(b) = &file.budget {
            SearchBudget::new(b.max_expanded_nodes, b.wall_timeout).map_err(|e| e.to_string())?;
        }
        if let Some(b) = &file.backend {
            b.validate().map_err(|e| e.to_string())?;
        }
        Ok(file)
    }
}

pub fn load_config(path: &Path) -> Result<ConfigFile, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ConfigFile::parse(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}
