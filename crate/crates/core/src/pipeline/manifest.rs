use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, GENERATOR};
use crate::biospan::{extract_spans, orphan_positions};
use crate::labelspace::BioLabel;
use crate::record::{JsonLines, Record};

/// Summary of one JSON-lines artifact, stored next to it as
/// `<artifact>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// File name of the artifact, relative to the manifest.
    pub path: String,
    pub sha256: String,
    pub records: u64,
    pub gold_spans: u64,
    pub entity_types: u64,
    pub sources: u64,
    pub per_source_records: BTreeMap<String, u64>,
    pub per_type_b_mentions: BTreeMap<String, u64>,
    pub orphan_continuations: u64,
    pub orphan_continuations_by_source: BTreeMap<String, u64>,
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
    pub rare_label_threshold: Option<u64>,
    pub generator: String,
}

/// Run parameters recorded alongside the computed counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManifestContext {
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
    pub rare_label_threshold: Option<u64>,
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

/// Lowercase hex SHA-256 of the exact file bytes.
pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl Manifest {
    /// Computes the manifest of an artifact in one streaming pass.
    pub fn compute(artifact: &Path, context: &ManifestContext) -> Result<Self, PipelineError> {
        let io_err = |e| PipelineError::Io {
            path: artifact.to_path_buf(),
            source: e,
        };
        let sha256 = sha256_file(artifact).map_err(io_err)?;
        let mut records = 0;
        let mut gold_spans = 0;
        let mut types = BTreeSet::new();
        let mut per_source_records: BTreeMap<String, u64> = BTreeMap::new();
        let mut per_type_b_mentions: BTreeMap<String, u64> = BTreeMap::new();
        let mut orphans: BTreeMap<String, u64> = BTreeMap::new();
        for record in JsonLines::<_, Record>::open(artifact)? {
            let record = record?;
            record.validate()?;
            records += 1;
            *per_source_records.entry(record.source.clone()).or_default() += 1;
            for span in extract_spans(&record.labels) {
                gold_spans += 1;
                types.insert(span.entity);
            }
            for label in &record.labels {
                if let BioLabel::Begin(t) = label {
                    *per_type_b_mentions.entry(t.to_string()).or_default() += 1;
                }
            }
            let n = orphan_positions(&record.labels).len() as u64;
            if n > 0 {
                *orphans.entry(record.source).or_default() += n;
            }
        }
        Ok(Manifest {
            path: artifact
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256,
            records,
            gold_spans,
            entity_types: types.len() as u64,
            sources: per_source_records.len() as u64,
            per_source_records,
            per_type_b_mentions,
            orphan_continuations: orphans.values().sum(),
            orphan_continuations_by_source: orphans,
            seed: context.seed,
            config_digest: context.config_digest.clone(),
            rare_label_threshold: context.rare_label_threshold,
            generator: GENERATOR.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Names of the count fields that disagree with `other`, ignoring run parameters.
    pub fn count_mismatches(&self, other: &Manifest) -> Vec<&'static str> {
        let mut out = Vec::new();
        let checks: [(&'static str, bool); 9] = [
            ("sha256", self.sha256 == other.sha256),
            ("records", self.records == other.records),
            ("gold_spans", self.gold_spans == other.gold_spans),
            ("entity_types", self.entity_types == other.entity_types),
            ("sources", self.sources == other.sources),
            ("per_source_records", self.per_source_records == other.per_source_records),
            ("per_type_b_mentions", self.per_type_b_mentions == other.per_type_b_mentions),
            ("orphan_continuations", self.orphan_continuations == other.orphan_continuations),
            (
                "orphan_continuations_by_source",
                self.orphan_continuations_by_source == other.orphan_continuations_by_source,
            ),
        ];
        for (name, ok) in checks {
            if !ok {
                out.push(name);
            }
        }
        out
    }
}

/// Computes the manifest of `artifact` and writes it to `<artifact>.manifest.json`.
pub fn write_manifest(artifact: &Path, context: &ManifestContext) -> Result<Manifest, PipelineError> {
    let manifest = Manifest::compute(artifact, context)?;
    let path = manifest_path(artifact);
    std::fs::write(&path, manifest.to_json()).map_err(|e| PipelineError::Io { path, source: e })?;
    Ok(manifest)
}
