//! Run configuration file (TOML).
//!
//! ```toml
//! seed = 42
//!
//! [corpus]
//! tasks_dir = "data/tasks"
//! manifest = "data/splits/test_tasks.txt"
//! instructions = "out/instructions.jsonl"
//! transcripts_dir = "out/transcripts"
//!
//! [backend]
//! mode = "replay"
//! fixtures_dir = "fixtures/transcripts"
//!
//! [assembly]
//! position = "prepend"
//! max_input_tokens = 1224
//! max_positive_examples = 2
//!
//! [eval]
//! instances_per_task = 100
//! macro = "tasks"
//! tie_threshold = 0.0
//!
//! [campaign]
//! annotators = ["a1", "a2", "a3"]
//! consensus = "majority"
//! incomplete = "warn"
//! ```
//!
//! Every section is optional. Relative paths are resolved against the
//! directory holding the config file. Command-line flags win over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::annotate::{ConsensusRule, IncompletePolicy};
use crate::assembler::Position;
use crate::evalkit::MacroMode;
use crate::llm_client::BackendConfig;

pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub tasks_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
    pub transcripts_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblySection {
    pub position: Option<Position>,
    pub max_input_tokens: Option<usize>,
    pub max_positive_examples: Option<usize>,
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub instances_per_task: Option<usize>,
    #[serde(rename = "macro")]
    pub macro_mode: Option<MacroMode>,
    pub tie_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    #[serde(default)]
    pub annotators: Vec<String>,
    pub consensus: Option<ConsensusRule>,
    pub incomplete: Option<IncompletePolicy>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub backend: Option<BackendConfig>,
    #[serde(default)]
    pub assembly: AssemblySection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub campaign: CampaignSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            corpus: CorpusSection::default(),
            backend: None,
            assembly: AssemblySection::default(),
            eval: EvalSection::default(),
            campaign: CampaignSection::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.corpus.tasks_dir);
        rebase(base, &mut cfg.corpus.manifest);
        rebase(base, &mut cfg.corpus.instructions);
        rebase(base, &mut cfg.corpus.transcripts_dir);
        if let Some(b) = &mut cfg.backend {
            rebase(base, &mut b.fixtures_dir);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        RunConfig::parse(&text, path)
    }
}
