//! Corpus preparation: consolidate sources, re-parse tagged text, rebalance,
//! cap, drop rare entity types, split, sample and describe artifacts.
//!
//! Steps run in a fixed order (consolidate, rebalance, cap, rare-label filter,
//! split). Each rebalance target is measured against the corpus as it stands
//! after consolidation.

mod alloc;
mod config;
mod manifest;
mod rng;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alloc::{allocate_fractions, largest_remainder_allocate, AllocError};
pub use config::{
    OnError, PipelineConfig, SourceFormat, SourceSpec, SplitFractions, DEFAULT_RARE_LABEL_THRESHOLD,
};
pub use manifest::{manifest_path, sha256_file, write_manifest, Manifest, ManifestContext};
pub use rng::{sub_rng, GENERATOR};
pub use split::{sample_subset, stratified_split, Splits};

use crate::biospan::extract_spans;
use crate::ingest::{ingest_record, IngestError};
use crate::labelspace::{BioLabel, EntityType, LabelError, LabelSpace};
use crate::record::{write_records, JsonLines, Record, RecordError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("source {source_name}: {error}")]
    Ingest { source_name: String, error: IngestError },
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("duplicate record id {0}")]
    DuplicateId(String),
}

impl PipelineError {
    /// True for failures reading or writing files, as opposed to bad data or config.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            PipelineError::Io { .. } | PipelineError::Record(RecordError::Io { .. })
        )
    }
}

/// Per-source record, token and `B-` mention counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub records: u64,
    pub tokens: u64,
    pub b_mentions: BTreeMap<String, u64>,
}

pub fn source_stats(records: &[Record]) -> BTreeMap<String, SourceStats> {
    let mut stats: BTreeMap<String, SourceStats> = BTreeMap::new();
    for record in records {
        let s = stats.entry(record.source.clone()).or_default();
        s.records += 1;
        s.tokens += record.tokens.len() as u64;
        for label in &record.labels {
            if let BioLabel::Begin(t) = label {
                *s.b_mentions.entry(t.to_string()).or_default() += 1;
            }
        }
    }
    stats
}

/// A record dropped under the `skip`/`log` error policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedRecord {
    pub source: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct Consolidated {
    pub records: Vec<Record>,
    pub skipped: Vec<SkippedRecord>,
    /// Tagged records without any entity, per source.
    pub untagged_dropped: BTreeMap<String, u64>,
}

#[derive(Deserialize)]
struct BioLine {
    #[serde(default)]
    id: Option<String>,
    tokens: Vec<String>,
    labels: Vec<BioLabel>,
}

fn read_bio_source(spec: &SourceSpec, path: &Path) -> Result<Vec<Result<Record, String>>, PipelineError> {
    let mut lines = JsonLines::<_, BioLine>::open(path)?;
    let mut out = Vec::new();
    while let Some(item) = lines.next() {
        let line_no = lines.line();
        let record = item.map_err(|e| e.to_string()).and_then(|b| {
            let record = Record {
                id: b.id.unwrap_or_else(|| format!("{}-{}", spec.name, line_no)),
                tokens: b.tokens,
                labels: b.labels,
                source: spec.name.clone(),
            };
            record.validate().map(|_| record).map_err(|e| e.to_string())
        });
        out.push(record);
    }
    Ok(out)
}

fn read_tagged_source(
    spec: &SourceSpec,
    path: &Path,
    space: &LabelSpace,
    config: &PipelineConfig,
    untagged: &mut u64,
) -> Result<Vec<Result<Record, String>>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw = match spec.format {
            SourceFormat::TaggedText => Ok(line.to_string()),
            _ => serde_json::from_str::<serde_json::Value>(line)
                .map_err(|e| e.to_string())
                .and_then(|v| {
                    v.get(&spec.text_field)
                        .and_then(|t| t.as_str())
                        .map(str::to_string)
                        .ok_or_else(|| format!("missing string field {:?}", spec.text_field))
                }),
        };
        let result = raw.and_then(|raw| {
            ingest_record(&raw, &spec.name, i + 1, space, config.unknown_tag).map_err(|e| e.to_string())
        });
        match result {
            Ok(Some(record)) => out.push(Ok(record)),
            Ok(None) => *untagged += 1,
            Err(e) => out.push(Err(e)),
        }
    }
    Ok(out)
}

/// Reads every configured source in order, stamping each record with its
/// source name. Tagged sources go through [`ingest_record`]; records without
/// entities are dropped.
pub fn consolidate(config: &PipelineConfig, space: Option<&LabelSpace>) -> Result<Consolidated, PipelineError> {
    let mut out = Consolidated::default();
    let mut ids = HashSet::new();
    for spec in &config.sources {
        let path = config.resolve(&spec.path);
        let items = match spec.format {
            SourceFormat::BioJsonl => read_bio_source(spec, &path)?,
            _ => {
                let space = space.ok_or_else(|| {
                    PipelineError::Config(format!("source {} needs a taxonomy", spec.name))
                })?;
                let mut untagged = 0;
                let items = read_tagged_source(spec, &path, space, config, &mut untagged)?;
                if untagged > 0 {
                    out.untagged_dropped.insert(spec.name.clone(), untagged);
                }
                items
            }
        };
        for (i, item) in items.into_iter().enumerate() {
            match item {
                Ok(record) => {
                    if !ids.insert(record.id.clone()) {
                        return Err(PipelineError::DuplicateId(record.id));
                    }
                    out.records.push(record);
                }
                Err(message) => {
                    let skipped = SkippedRecord {
                        source: spec.name.clone(),
                        line: i + 1,
                        message,
                    };
                    match config.on_error {
                        OnError::Fail => {
                            return Err(PipelineError::Config(format!(
                                "source {} record {}: {}",
                                skipped.source, skipped.line, skipped.message
                            )))
                        }
                        OnError::Log => warn!(
                            "skipping {} record {}: {}",
                            skipped.source, skipped.line, skipped.message
                        ),
                        OnError::Skip => {}
                    }
                    out.skipped.push(skipped);
                }
            }
        }
    }
    Ok(out)
}

/// The most frequent span type of a record (ties to the smallest name), or
/// `O` when it has no spans. Used as the sampling stratum.
fn primary_type(record: &Record) -> String {
    let mut counts: BTreeMap<EntityType, u64> = BTreeMap::new();
    for span in extract_spans(&record.labels) {
        *counts.entry(span.entity).or_default() += 1;
    }
    let mut best: Option<(&EntityType, u64)> = None;
    for (t, n) in &counts {
        if best.map_or(true, |(_, b)| *n > b) {
            best = Some((t, *n));
        }
    }
    best.map_or_else(|| "O".to_string(), |(t, _)| t.to_string())
}

/// Samples `k` of the given record indices without replacement, stratified by
/// primary entity type. Returns the kept indices in ascending order.
fn stratified_keep(records: &[Record], members: &[usize], k: u64, seed: u64, purpose: &str) -> Vec<usize> {
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in members {
        strata.entry(primary_type(&records[i])).or_default().push(i);
    }
    let sizes: BTreeMap<String, u64> = strata.iter().map(|(s, v)| (s.clone(), v.len() as u64)).collect();
    let quota = largest_remainder_allocate(&sizes, k).expect("k never exceeds the member count");
    let mut kept = Vec::with_capacity(k as usize);
    for (stratum, idx) in &strata {
        let take = quota[stratum] as usize;
        let source = &records[idx[0]].source;
        let mut rng = sub_rng(seed, purpose, &format!("{source}/{stratum}"));
        kept.extend(index::sample(&mut rng, idx.len(), take).into_iter().map(|j| idx[j]));
    }
    kept.sort_unstable();
    kept
}

fn keep_indices(records: Vec<Record>, keep: &HashSet<usize>) -> Vec<Record> {
    records
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, r)| r)
        .collect()
}

#[derive(Debug)]
pub struct Rebalanced {
    pub records: Vec<Record>,
    pub before: u64,
    pub kept: u64,
    /// Achieved share of the named source in the output.
    pub share: f64,
    pub warning: Option<String>,
}

/// Number of target records `k` that brings `k / (others + k)` closest to `fraction`.
fn rebalance_count(others: u64, fraction: f64) -> u64 {
    let exact = fraction * others as f64 / (1.0 - fraction);
    let lo = exact.floor().max(0.0) as u64;
    let share = |k: u64| if others + k == 0 { 0.0 } else { k as f64 / (others + k) as f64 };
    if (share(lo + 1) - fraction).abs() < (share(lo) - fraction).abs() {
        lo + 1
    } else {
        lo
    }
}

/// Downsamples `source` so that it makes up `target_fraction` of the corpus.
/// Sampling is without replacement and stratified by primary entity type;
/// other sources pass through. When the source is too small to reach the
/// target, all of it is kept and a warning is returned.
pub fn rebalance_source(records: Vec<Record>, source: &str, target_fraction: f64, seed: u64) -> Rebalanced {
    let members: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.source == source)
        .map(|(i, _)| i)
        .collect();
    let n = members.len() as u64;
    let others = records.len() as u64 - n;
    let finish = |records: Vec<Record>, kept: u64, warning: Option<String>| {
        if let Some(w) = &warning {
            warn!("{w}");
        }
        let total = others + kept;
        Rebalanced {
            records,
            before: n,
            kept,
            share: if total == 0 { 0.0 } else { kept as f64 / total as f64 },
            warning,
        }
    };
    if n == 0 {
        let w = format!("rebalance: source {source} is absent, corpus unchanged");
        return finish(records, 0, Some(w));
    }
    let k = rebalance_count(others, target_fraction);
    if k >= n {
        let warning = (k > n).then(|| {
            format!(
                "rebalance: source {source} has {n} records, {k} needed for a {:.1}% share; kept all",
                target_fraction * 100.0
            )
        });
        return finish(records, n, warning);
    }
    let mut keep: HashSet<usize> = (0..records.len()).filter(|i| records[*i].source != source).collect();
    keep.extend(stratified_keep(&records, &members, k, seed, "rebalance"));
    finish(keep_indices(records, &keep), k, None)
}

/// Keeps at most `cap` records of `source`, chosen uniformly with a seeded
/// generator. Order is preserved; other sources are untouched.
pub fn cap_source(records: Vec<Record>, source: &str, cap: u64, seed: u64) -> Vec<Record> {
    let members: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.source == source)
        .map(|(i, _)| i)
        .collect();
    if members.len() as u64 <= cap {
        return records;
    }
    let mut rng = sub_rng(seed, "cap", source);
    let mut keep: HashSet<usize> = (0..records.len()).filter(|i| records[*i].source != source).collect();
    keep.extend(index::sample(&mut rng, members.len(), cap as usize).into_iter().map(|j| members[j]));
    keep_indices(records, &keep)
}

#[derive(Debug)]
pub struct Filtered {
    pub records: Vec<Record>,
    /// Types rewritten to `O`, sorted by name.
    pub removed: Vec<EntityType>,
    /// Corpus-wide `B-` mentions per type before filtering.
    pub b_mentions: BTreeMap<EntityType, u64>,
}

/// Rewrites every label of a type with fewer than `threshold` corpus-wide
/// `B-` mentions to `O`. Records and tokens are never dropped.
pub fn filter_rare_labels(mut records: Vec<Record>, threshold: u64) -> Filtered {
    let mut b_mentions: BTreeMap<EntityType, u64> = BTreeMap::new();
    let mut seen: BTreeSet<EntityType> = BTreeSet::new();
    for record in &records {
        for label in &record.labels {
            if let Some(t) = label.entity() {
                if !seen.contains(t) {
                    seen.insert(t.clone());
                }
            }
            if let BioLabel::Begin(t) = label {
                *b_mentions.entry(t.clone()).or_default() += 1;
            }
        }
    }
    let removed: BTreeSet<EntityType> = seen
        .into_iter()
        .filter(|t| b_mentions.get(t).copied().unwrap_or(0) < threshold)
        .collect();
    if !removed.is_empty() {
        for record in &mut records {
            for label in &mut record.labels {
                if label.entity().is_some_and(|t| removed.contains(t)) {
                    *label = BioLabel::Outside;
                }
            }
        }
    }
    Filtered {
        records,
        removed: removed.into_iter().collect(),
        b_mentions,
    }
}

/// Source tag used for sources the model was not conditioned on.
pub const GENERAL_SOURCE: &str = "general";

/// Prepends a `[SRC=<source>]` token labelled `O`; unknown sources map to
/// `[SRC=general]`. Every span shifts right by one.
pub fn prepend_source_token(record: &Record, known_sources: &HashSet<String>) -> Record {
    let tag = if known_sources.contains(&record.source) {
        record.source.as_str()
    } else {
        GENERAL_SOURCE
    };
    let mut tokens = Vec::with_capacity(record.tokens.len() + 1);
    tokens.push(format!("[SRC={tag}]"));
    tokens.extend(record.tokens.iter().cloned());
    let mut labels = Vec::with_capacity(record.labels.len() + 1);
    labels.push(BioLabel::Outside);
    labels.extend(record.labels.iter().cloned());
    Record {
        id: record.id.clone(),
        tokens,
        labels,
        source: record.source.clone(),
    }
}

/// Per-step statistics and outputs of a full preparation run.
#[derive(Debug, Serialize)]
pub struct PrepareSummary {
    pub steps: Vec<(String, BTreeMap<String, SourceStats>)>,
    pub skipped: Vec<SkippedRecord>,
    pub untagged_dropped: BTreeMap<String, u64>,
    pub removed_types: Vec<String>,
    pub warnings: Vec<String>,
    pub manifests: Vec<Manifest>,
    pub outputs: Vec<PathBuf>,
}

/// Runs the whole preparation and writes `train.jsonl`, `validation.jsonl`,
/// `test.jsonl` and their manifests into `out_dir`.
pub fn run_prepare(config: &PipelineConfig, out_dir: &Path) -> Result<PrepareSummary, PipelineError> {
    let space = match &config.taxonomy {
        Some(p) => Some(LabelSpace::load(config.resolve(p))?),
        None => None,
    };
    let mut steps = Vec::new();
    let mut warnings = Vec::new();

    let consolidated = consolidate(config, space.as_ref())?;
    let mut records = consolidated.records;
    steps.push(("consolidate".to_string(), source_stats(&records)));

    for (source, fraction) in &config.rebalance {
        let outcome = rebalance_source(records, source, *fraction, config.seed);
        warnings.extend(outcome.warning);
        records = outcome.records;
    }
    steps.push(("rebalance".to_string(), source_stats(&records)));

    for (source, cap) in &config.caps {
        records = cap_source(records, source, *cap, config.seed);
    }
    steps.push(("cap".to_string(), source_stats(&records)));

    let filtered = filter_rare_labels(records, config.rare_label_threshold);
    records = filtered.records;
    steps.push(("filter".to_string(), source_stats(&records)));

    let splits = stratified_split(records, config.splits, config.seed)?;
    warnings.extend(splits.warnings.iter().cloned());

    let context = ManifestContext {
        seed: Some(config.seed),
        config_digest: Some(config.digest()),
        rare_label_threshold: Some(config.rare_label_threshold),
    };
    let mut manifests = Vec::new();
    let mut outputs = Vec::new();
    for (name, part) in [
        ("train", &splits.train),
        ("validation", &splits.validation),
        ("test", &splits.test),
    ] {
        let path = out_dir.join(format!("{name}.jsonl"));
        write_records(&path, part.iter())?;
        steps.push((format!("split:{name}"), source_stats(part)));
        manifests.push(write_manifest(&path, &context)?);
        outputs.push(path.clone());
        outputs.push(manifest_path(&path));
    }

    Ok(PrepareSummary {
        steps,
        skipped: consolidated.skipped,
        untagged_dropped: consolidated.untagged_dropped,
        removed_types: filtered.removed.iter().map(|t| t.to_string()).collect(),
        warnings,
        manifests,
        outputs,
    })
}

/// Source names in order of first appearance.
pub fn source_order(records: &[Record]) -> Vec<String> {
    let mut seen = HashMap::new();
    let mut order = Vec::new();
    for r in records {
        if seen.insert(r.source.as_str(), ()).is_none() {
            order.push(r.source.clone());
        }
    }
    order
}
