//! Span-level exact-match scoring with chunked, memory-bounded accumulation.
//!
//! A predicted span counts as a true positive only when its start, end and
//! entity type all equal those of a gold span. Micro metrics are computed from
//! summed counters, never by averaging per-type values.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biospan::for_each_span;
use crate::labelspace::{BioLabel, EntityType, LabelSpace};
use crate::record::{JsonLines, RecordError};

pub const DEFAULT_CHUNK_SIZE: usize = 5000;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("{which} file: {source}")]
    Read {
        which: &'static str,
        #[source]
        source: RecordError,
    },
    #[error("record {id}: gold has {gold} labels, prediction has {pred}")]
    LengthMismatch { id: String, gold: usize, pred: usize },
    #[error("record {index}: gold id {gold_id} but prediction id {pred_id}")]
    IdMismatch {
        index: u64,
        gold_id: String,
        pred_id: String,
    },
    #[error("no prediction for record {0}")]
    MissingPrediction(String),
    #[error("prediction {0} has no gold record")]
    ExtraPrediction(String),
    #[error("duplicate prediction id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub pred: u64,
    pub gold: u64,
}

impl Counts {
    fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.pred += other.pred;
        self.gold += other.gold;
    }
}

/// Per-entity-type `(tp, pred, gold)` span counts. A commutative monoid under
/// [`merge`] with the empty map as identity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounters(BTreeMap<EntityType, Counts>);

impl TypeCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, t: &EntityType) -> Counts {
        self.0.get(t).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityType, &Counts)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> Counts {
        let mut total = Counts::default();
        for c in self.0.values() {
            total.add(c);
        }
        total
    }

    pub fn insert(&mut self, t: EntityType, counts: Counts) {
        self.0.insert(t, counts);
    }

    fn entry(&mut self, t: &EntityType) -> &mut Counts {
        if !self.0.contains_key(t) {
            self.0.insert(t.clone(), Counts::default());
        }
        self.0.get_mut(t).expect("inserted above")
    }

    /// Adds the counts of one aligned gold/prediction pair.
    pub fn add_pair(&mut self, gold: &[BioLabel], pred: &[BioLabel]) {
        let mut gold_spans = Vec::new();
        for_each_span(gold, |s, e, t| gold_spans.push((s, e, t)));
        for (_, _, t) in &gold_spans {
            self.entry(t).gold += 1;
        }
        // Both span lists are ordered by start and disjoint, so a single
        // forward walk finds every exact match.
        let mut g = 0;
        for_each_span(pred, |s, e, t| {
            let counts = self.entry(t);
            counts.pred += 1;
            while g < gold_spans.len() && gold_spans[g].0 < s {
                g += 1;
            }
            if let Some(&(gs, ge, gt)) = gold_spans.get(g) {
                if gs == s && ge == e && gt == t {
                    counts.tp += 1;
                }
            }
        });
    }

    pub fn merge_from(&mut self, other: &TypeCounters) {
        for (t, c) in &other.0 {
            self.entry(t).add(c);
        }
    }
}

/// Fieldwise sum of two counter sets.
pub fn merge(a: &TypeCounters, b: &TypeCounters) -> TypeCounters {
    let mut out = a.clone();
    out.merge_from(b);
    out
}

/// Counters for a single aligned pair.
pub fn score_pair(gold: &[BioLabel], pred: &[BioLabel]) -> Result<TypeCounters, ScoreError> {
    if gold.len() != pred.len() {
        return Err(ScoreError::LengthMismatch {
            id: String::new(),
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut counters = TypeCounters::new();
    counters.add_pair(gold, pred);
    Ok(counters)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub pred: u64,
    pub gold: u64,
}

impl MicroMetrics {
    pub fn from_counts(c: Counts) -> Self {
        let precision = ratio(c.tp, c.pred);
        let recall = ratio(c.tp, c.gold);
        Self {
            precision,
            recall,
            f1: f1_score(precision, recall),
            tp: c.tp,
            pred: c.pred,
            gold: c.gold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of gold spans.
    pub support: u64,
    pub tp: u64,
    pub pred: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro: MicroMetrics,
    pub per_type: BTreeMap<String, TypeMetrics>,
    pub records: u64,
    pub chunks: u64,
}

/// Derives micro and per-type metrics from summed counters.
pub fn finalize(counters: &TypeCounters) -> MetricsReport {
    let per_type = counters
        .iter()
        .map(|(t, c)| {
            let precision = ratio(c.tp, c.pred);
            let recall = ratio(c.tp, c.gold);
            let metrics = TypeMetrics {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: c.gold,
                tp: c.tp,
                pred: c.pred,
            };
            (t.to_string(), metrics)
        })
        .collect();
    MetricsReport {
        micro: MicroMetrics::from_counts(counters.total()),
        per_type,
        records: 0,
        chunks: 0,
    }
}

impl MetricsReport {
    /// Per-type CSV with columns `type,group,support,precision,recall,f1`.
    /// The group column is empty for types outside `space`.
    pub fn to_csv(&self, space: Option<&LabelSpace>) -> String {
        let mut out = String::from("type,group,support,precision,recall,f1\n");
        for (name, m) in &self.per_type {
            let group = space
                .and_then(|s| EntityType::new(name.as_str()).ok().and_then(|t| s.coarse_of(&t).ok()))
                .map(|g| g.as_str())
                .unwrap_or("");
            out.push_str(&format!(
                "{name},{group},{},{:.6},{:.6},{:.6}\n",
                m.support, m.precision, m.recall, m.f1
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamOptions {
    pub chunk_size: usize,
    /// Index predictions by id instead of requiring the gold order. Holds the
    /// whole prediction file in memory.
    pub unordered: bool,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            unordered: false,
        }
    }
}

#[derive(Deserialize)]
struct LabeledLine {
    id: String,
    labels: Vec<BioLabel>,
}

fn next_line<R: BufRead>(
    lines: &mut JsonLines<R, LabeledLine>,
    which: &'static str,
) -> Result<Option<LabeledLine>, ScoreError> {
    lines
        .next()
        .transpose()
        .map_err(|source| ScoreError::Read { which, source })
}

/// Scores a gold JSON-lines stream against a prediction stream, `chunk_size`
/// records at a time. Only the running counters survive a chunk, so memory
/// depends on the chunk size and the number of types, not the corpus size.
pub fn stream_score<G: BufRead, P: BufRead>(
    gold: G,
    pred: P,
    options: StreamOptions,
) -> Result<MetricsReport, ScoreError> {
    let chunk_size = options.chunk_size.max(1);
    let mut gold_lines = JsonLines::<_, LabeledLine>::new(gold);
    let mut pred_lines = JsonLines::<_, LabeledLine>::new(pred);

    let mut index: Option<HashMap<String, Vec<BioLabel>>> = None;
    if options.unordered {
        let mut map = HashMap::new();
        while let Some(line) = next_line(&mut pred_lines, "prediction")? {
            if map.insert(line.id.clone(), line.labels).is_some() {
                return Err(ScoreError::DuplicateId(line.id));
            }
        }
        index = Some(map);
    }

    let mut total = TypeCounters::new();
    let mut records = 0u64;
    let mut chunks = 0u64;
    let mut chunk: Vec<(LabeledLine, Vec<BioLabel>)> = Vec::with_capacity(chunk_size.min(65_536));
    loop {
        chunk.clear();
        while chunk.len() < chunk_size {
            let Some(g) = next_line(&mut gold_lines, "gold")? else {
                break;
            };
            let labels = match index.as_mut() {
                Some(map) => map
                    .remove(&g.id)
                    .ok_or_else(|| ScoreError::MissingPrediction(g.id.clone()))?,
                None => {
                    let p = next_line(&mut pred_lines, "prediction")?
                        .ok_or_else(|| ScoreError::MissingPrediction(g.id.clone()))?;
                    if p.id != g.id {
                        return Err(ScoreError::IdMismatch {
                            index: records + chunk.len() as u64,
                            gold_id: g.id,
                            pred_id: p.id,
                        });
                    }
                    p.labels
                }
            };
            if labels.len() != g.labels.len() {
                return Err(ScoreError::LengthMismatch {
                    id: g.id,
                    gold: g.labels.len(),
                    pred: labels.len(),
                });
            }
            chunk.push((g, labels));
        }
        if chunk.is_empty() {
            break;
        }
        let mut counters = TypeCounters::new();
        for (g, p) in &chunk {
            counters.add_pair(&g.labels, p);
        }
        total.merge_from(&counters);
        records += chunk.len() as u64;
        chunks += 1;
    }

    match index {
        Some(map) => {
            if let Some(id) = map.into_keys().min() {
                return Err(ScoreError::ExtraPrediction(id));
            }
        }
        None => {
            if let Some(p) = next_line(&mut pred_lines, "prediction")? {
                return Err(ScoreError::ExtraPrediction(p.id));
            }
        }
    }

    let mut report = finalize(&total);
    report.records = records;
    report.chunks = chunks;
    Ok(report)
}

pub fn stream_score_files(
    gold: impl AsRef<Path>,
    pred: impl AsRef<Path>,
    options: StreamOptions,
) -> Result<MetricsReport, ScoreError> {
    let open = |path: &Path, which| {
        File::open(path)
            .map(BufReader::new)
            .map_err(|e| ScoreError::Read {
                which,
                source: RecordError::io(path, e),
            })
    };
    stream_score(open(gold.as_ref(), "gold")?, open(pred.as_ref(), "prediction")?, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelspace::parse_bio_label;
    use proptest::prelude::*;

    fn seq(labels: &[&str]) -> Vec<BioLabel> {
        labels.iter().map(|l| parse_bio_label(l).unwrap()).collect()
    }

    fn t(name: &str) -> EntityType {
        EntityType::new(name).unwrap()
    }

    #[test]
    fn perfect_match() {
        let c = score_pair(&seq(&["B-A", "I-A", "O"]), &seq(&["B-A", "I-A", "O"])).unwrap();
        assert_eq!(c.get(&t("A")), Counts { tp: 1, pred: 1, gold: 1 });
    }

    #[test]
    fn boundary_mismatch_scores_zero() {
        let c = score_pair(&seq(&["B-A", "I-A", "O"]), &seq(&["B-A", "O", "O"])).unwrap();
        assert_eq!(c.get(&t("A")), Counts { tp: 0, pred: 1, gold: 1 });
    }

    #[test]
    fn type_mismatch() {
        let c = score_pair(&seq(&["B-A"]), &seq(&["B-B"])).unwrap();
        assert_eq!(c.get(&t("A")), Counts { tp: 0, pred: 0, gold: 1 });
        assert_eq!(c.get(&t("B")), Counts { tp: 0, pred: 1, gold: 0 });
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            score_pair(&seq(&["O"]), &seq(&["O", "O"])),
            Err(ScoreError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn finalize_arithmetic() {
        let mut c = TypeCounters::new();
        c.insert(t("A"), Counts { tp: 3, pred: 4, gold: 6 });
        let r = finalize(&c);
        assert_eq!(r.micro.precision, 0.75);
        assert_eq!(r.micro.recall, 0.5);
        assert!((r.micro.f1 - 0.6).abs() < 1e-12);

        let mut c = TypeCounters::new();
        c.insert(t("A"), Counts { tp: 0, pred: 0, gold: 5 });
        let r = finalize(&c);
        assert_eq!((r.micro.precision, r.micro.recall, r.micro.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn micro_is_from_summed_counters() {
        let mut c = TypeCounters::new();
        c.insert(t("A"), Counts { tp: 1, pred: 1, gold: 1 });
        c.insert(t("B"), Counts { tp: 0, pred: 9, gold: 9 });
        let r = finalize(&c);
        assert_eq!(r.micro.precision, 0.1);
        assert_eq!(r.per_type["A"].f1, 1.0);
    }

    #[test]
    fn empty_streams() {
        let r = stream_score(&b""[..], &b""[..], StreamOptions::default()).unwrap();
        assert_eq!(r.micro.tp + r.micro.pred + r.micro.gold, 0);
        assert_eq!(r.micro.f1, 0.0);
        assert_eq!((r.records, r.chunks), (0, 0));
    }

    #[test]
    fn csv_report_has_group_column() {
        let space = crate::labelspace::build_label_space(&["A"], &[("A", "MISC")]).unwrap();
        let c = score_pair(&seq(&["B-A", "B-Z"]), &seq(&["B-A", "O"])).unwrap();
        let csv = finalize(&c).to_csv(Some(&space));
        assert_eq!(
            csv,
            "type,group,support,precision,recall,f1\nA,MISC,1,1.000000,1.000000,1.000000\nZ,,1,0.000000,0.000000,0.000000\n"
        );
    }

    fn arb_counters() -> impl Strategy<Value = TypeCounters> {
        prop::collection::btree_map(0usize..5, (0u64..50, 0u64..50, 0u64..50), 0..5).prop_map(|m| {
            let mut c = TypeCounters::new();
            for (k, (a, b, d)) in m {
                let tp = a.min(b).min(d);
                c.insert(t(["A", "B", "C", "D", "E"][k]), Counts { tp, pred: b, gold: d });
            }
            c
        })
    }

    proptest! {
        #[test]
        fn merge_is_a_commutative_monoid(a in arb_counters(), b in arb_counters(), c in arb_counters()) {
            prop_assert_eq!(merge(&a, &TypeCounters::new()), a.clone());
            prop_assert_eq!(merge(&a, &b), merge(&b, &a));
            prop_assert_eq!(merge(&merge(&a, &b), &c), merge(&a, &merge(&b, &c)));
            for (_, x) in merge(&a, &b).iter() {
                prop_assert!(x.tp <= x.pred.min(x.gold));
            }
        }

        #[test]
        fn micro_f1_between_precision_and_recall(tp in 0u64..100, fp in 0u64..100, fn_ in 0u64..100) {
            let mut c = TypeCounters::new();
            c.insert(t("A"), Counts { tp, pred: tp + fp, gold: tp + fn_ });
            let m = finalize(&c).micro;
            if m.precision > 0.0 && m.recall > 0.0 {
                prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12);
                prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
            }
            prop_assert_eq!(m.f1 == 0.0, tp == 0);
        }
    }
}
