use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::ingest::UnknownTagPolicy;

/// How a source file is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFormat {
    /// JSON lines with `tokens` and `labels` (BIO strings); `id` optional.
    BioJsonl,
    /// JSON lines whose text field carries inline `<TYPE>..</TYPE>` tags.
    TaggedJsonl,
    /// One tagged text per line.
    TaggedText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnError {
    /// Abort on the first malformed record.
    #[default]
    Fail,
    /// Drop malformed records, counting them in the summary.
    Skip,
    /// Like `skip`, and also log each dropped record.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub name: String,
    pub path: PathBuf,
    pub format: SourceFormat,
    #[serde(default = "default_text_field")]
    pub text_field: String,
}

fn default_text_field() -> String {
    "text".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn parts(&self) -> [(&'static str, f64); 3] {
        [("train", self.train), ("validation", self.validation), ("test", self.test)]
    }
}

pub const DEFAULT_RARE_LABEL_THRESHOLD: u64 = 100;

fn default_threshold() -> u64 {
    DEFAULT_RARE_LABEL_THRESHOLD
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

/// The declarative pipeline configuration (TOML).
///
/// ```toml
/// seed = 42
/// taxonomy = "taxonomy.tsv"
/// rare_label_threshold = 100
/// on_error = "skip"
///
/// [splits]
/// train = 0.8
/// validation = 0.1
/// test = 0.1
///
/// [[sources]]
/// name = "nemotron"
/// path = "nemotron.jsonl"
/// format = "tagged-jsonl"
///
/// [rebalance]
/// nemotron = 0.10
///
/// [caps]
/// finer_139 = 150000
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub rare_label_threshold: u64,
    #[serde(default)]
    pub on_error: OnError,
    #[serde(default)]
    pub unknown_tag: UnknownTagPolicy,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub splits: SplitFractions,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    /// Target share of the corpus per source.
    #[serde(default)]
    pub rebalance: BTreeMap<String, f64>,
    /// Maximum record count per source.
    #[serde(default)]
    pub caps: BTreeMap<String, u64>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut config = Self::from_toml_str(&text)?;
        config.base_dir = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Ok(config)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_relative() {
            self.base_dir.join(path)
        } else {
            path.to_path_buf()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for (source, f) in &self.rebalance {
            if !(*f > 0.0 && *f < 1.0) {
                return bad(format!("rebalance fraction for {source} must be in (0,1), got {f}"));
            }
        }
        let s = self.splits;
        let parts = s.parts();
        if parts.iter().any(|(_, f)| !(*f > 0.0 && *f < 1.0)) {
            return bad(format!("split fractions must be in (0,1), got {s:?}"));
        }
        if (parts.iter().map(|(_, f)| f).sum::<f64>() - 1.0).abs() > 1e-6 {
            return bad(format!("split fractions must sum to 1, got {s:?}"));
        }
        let mut names = std::collections::HashSet::new();
        for source in &self.sources {
            if !names.insert(&source.name) {
                return bad(format!("source {} listed twice", source.name));
            }
            if source.format != SourceFormat::BioJsonl && self.taxonomy.is_none() {
                return bad(format!("source {} is tagged text and needs a taxonomy", source.name));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the configuration, paths as
    /// written and the output directory left out.
    pub fn digest(&self) -> String {
        let mut content = self.clone();
        content.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&content).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}
