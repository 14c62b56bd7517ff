use std::collections::BTreeMap;

use log::warn;
use rand::seq::{index, SliceRandom};

use super::{allocate_fractions, largest_remainder_allocate, source_order, sub_rng, PipelineError, SplitFractions};
use crate::record::Record;

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Record>,
    pub validation: Vec<Record>,
    pub test: Vec<Record>,
    pub warnings: Vec<String>,
}

fn group_by_source(records: &[Record]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.source.as_str()).or_default().push(i);
    }
    groups
}

/// Partitions records into train/validation/test. Each source is shuffled
/// with its own sub-seed and cut by largest-remainder allocation of the
/// fractions; within a split, records keep their input order.
pub fn stratified_split(records: Vec<Record>, fractions: SplitFractions, seed: u64) -> Result<Splits, PipelineError> {
    let parts = fractions.parts();
    let mut assignment = vec![0usize; records.len()];
    let mut warnings = Vec::new();
    for (source, mut members) in group_by_source(&records) {
        let counts = allocate_fractions(members.len() as u64, &parts)?;
        if members.len() < parts.len() {
            let w = format!(
                "split: source {source} has {} records, fewer than {} splits",
                members.len(),
                parts.len()
            );
            warn!("{w}");
            warnings.push(w);
        }
        members.shuffle(&mut sub_rng(seed, "split", source));
        let mut it = members.into_iter();
        for (part, n) in counts.iter().enumerate() {
            for i in it.by_ref().take(*n as usize) {
                assignment[i] = part;
            }
        }
    }
    let mut out = Splits {
        warnings,
        ..Splits::default()
    };
    for (record, part) in records.into_iter().zip(assignment) {
        match part {
            0 => out.train.push(record),
            1 => out.validation.push(record),
            _ => out.test.push(record),
        }
    }
    Ok(out)
}

/// Draws `target_total` records with per-source quotas from
/// [`largest_remainder_allocate`] and uniform seeded sampling inside each
/// source. Output is grouped by source (in `order`, else first appearance),
/// then original order.
pub fn sample_subset(
    records: &[Record],
    target_total: u64,
    seed: u64,
    order: Option<&[String]>,
) -> Result<Vec<Record>, PipelineError> {
    let groups = group_by_source(records);
    let counts: BTreeMap<&str, u64> = groups.iter().map(|(s, v)| (*s, v.len() as u64)).collect();
    let quota = largest_remainder_allocate(&counts, target_total)?;

    let mut sequence: Vec<String> = match order {
        Some(o) => o.iter().filter(|s| groups.contains_key(s.as_str())).cloned().collect(),
        None => Vec::new(),
    };
    for s in source_order(records) {
        if !sequence.contains(&s) {
            sequence.push(s);
        }
    }

    let mut out = Vec::with_capacity(target_total as usize);
    for source in &sequence {
        let members = &groups[source.as_str()];
        let take = quota[source.as_str()] as usize;
        let mut rng = sub_rng(seed, "sample", source);
        let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), take)
            .into_iter()
            .map(|j| members[j])
            .collect();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| records[i].clone()));
    }
    Ok(out)
}
