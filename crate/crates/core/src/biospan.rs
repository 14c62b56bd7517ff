//! BIO sequence semantics.
//!
//! Span extraction follows the lenient (non-strict) IOB2 reading used by
//! common span-level NER scorers: an `I-X` that does not continue an open `X`
//! span opens a new one instead of being discarded.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::labelspace::{BioLabel, EntityType, LabelError, LabelSpace};
use crate::record::Record;

/// Half-open token interval `[start, end)` carrying an entity type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity: EntityType,
}

impl Span {
    pub fn new(start: usize, end: usize, entity: EntityType) -> Self {
        debug_assert!(start < end);
        Self { start, end, entity }
    }
}

/// True when `label` continues the span opened or continued by `prev`.
fn continues(prev: Option<&BioLabel>, label: &BioLabel) -> bool {
    match (prev, label) {
        (Some(BioLabel::Begin(p) | BioLabel::Inside(p)), BioLabel::Inside(t)) => p == t,
        _ => false,
    }
}

/// Extracts entity spans, ordered by start.
///
/// `B-X` always opens a span, `I-X` continues an open `X` span and otherwise
/// opens a new one, `O` closes whatever is open.
pub fn extract_spans(labels: &[BioLabel]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &EntityType)> = None;
    let mut prev: Option<&BioLabel> = None;
    for (i, label) in labels.iter().enumerate() {
        if !continues(prev, label) {
            if let Some((start, entity)) = open.take() {
                spans.push(Span::new(start, i, entity.clone()));
            }
            if let Some(entity) = label.entity() {
                open = Some((i, entity));
            }
        }
        prev = Some(label);
    }
    if let Some((start, entity)) = open {
        spans.push(Span::new(start, labels.len(), entity.clone()));
    }
    spans
}

/// Calls `f` once per span without allocating the span list.
pub(crate) fn for_each_span<'a>(labels: &'a [BioLabel], mut f: impl FnMut(usize, usize, &'a EntityType)) {
    let mut open: Option<(usize, &EntityType)> = None;
    let mut prev: Option<&BioLabel> = None;
    for (i, label) in labels.iter().enumerate() {
        if !continues(prev, label) {
            if let Some((start, entity)) = open.take() {
                f(start, i, entity);
            }
            if let Some(entity) = label.entity() {
                open = Some((i, entity));
            }
        }
        prev = Some(label);
    }
    if let Some((start, entity)) = open {
        f(start, labels.len(), entity);
    }
}

/// Positions holding an `I-X` whose predecessor is neither `B-X` nor `I-X`.
pub fn orphan_positions(labels: &[BioLabel]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(i, label)| {
            matches!(label, BioLabel::Inside(_))
                && !continues(i.checked_sub(1).map(|p| &labels[p]), label)
        })
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OrphanReport {
    pub total: u64,
    pub by_source: BTreeMap<String, u64>,
}

/// Counts orphan continuations across records, attributed per source.
pub fn count_orphan_continuations<'a>(records: impl IntoIterator<Item = &'a Record>) -> OrphanReport {
    let mut report = OrphanReport::default();
    for record in records {
        let n = orphan_positions(&record.labels).len() as u64;
        if n > 0 {
            report.total += n;
            *report.by_source.entry(record.source.clone()).or_default() += n;
        }
    }
    report
}

/// Rewrites every orphan `I-X` to `B-X`. The extracted span set is unchanged.
pub fn normalize_bio(labels: &[BioLabel]) -> Vec<BioLabel> {
    let mut out = labels.to_vec();
    for i in orphan_positions(labels) {
        if let BioLabel::Inside(t) = &labels[i] {
            out[i] = BioLabel::Begin(t.clone());
        }
    }
    out
}

/// Maps every label onto its coarse group.
///
/// `I-X` becomes `I-G` except where the previous token belongs to a different
/// fine type of the same group; there it becomes `B-G`, so that coarse span
/// boundaries coincide with fine ones.
pub fn project_to_coarse(labels: &[BioLabel], space: &LabelSpace) -> Result<Vec<BioLabel>, LabelError> {
    let mut out = Vec::with_capacity(labels.len());
    let mut prev: Option<&BioLabel> = None;
    for label in labels {
        let projected = match label {
            BioLabel::Outside => BioLabel::Outside,
            BioLabel::Begin(t) => BioLabel::Begin(space.coarse_of(t)?.entity_type()),
            BioLabel::Inside(t) => {
                let group = space.coarse_of(t)?;
                let merges_neighbour = match prev.and_then(BioLabel::entity) {
                    Some(p) if p != t => space.coarse_of(p)? == group,
                    _ => false,
                };
                if merges_neighbour {
                    BioLabel::Begin(group.entity_type())
                } else {
                    BioLabel::Inside(group.entity_type())
                }
            }
        };
        out.push(projected);
        prev = Some(label);
    }
    Ok(out)
}
