//! Largest-remainder apportionment.
//!
//! Quotas are computed in exact integer arithmetic: bucket `s` gets
//! `target * count_s / total`, floored, and leftover units go to the largest
//! fractional remainders. Equal remainders are broken by larger count first,
//! then by key order.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("target {target} exceeds total count {total}")]
    TargetTooLarge { target: u64, total: u64 },
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions(Vec<f64>),
}

/// Apportions `target` units over weighted buckets. With `capped`, a bucket
/// never receives more than its own weight.
fn apportion<K: Ord + Clone>(buckets: &[(K, u64)], target: u64, capped: bool) -> Vec<u64> {
    let total: u128 = buckets.iter().map(|(_, w)| *w as u128).sum();
    if total == 0 {
        return vec![0; buckets.len()];
    }
    let mut alloc = Vec::with_capacity(buckets.len());
    let mut remainders = Vec::with_capacity(buckets.len());
    for (i, (_, w)) in buckets.iter().enumerate() {
        let num = target as u128 * *w as u128;
        alloc.push((num / total) as u64);
        remainders.push((num % total, i));
    }
    let assigned: u64 = alloc.iter().sum();
    let mut leftover = target - assigned;

    remainders.sort_by(|(ra, ia), (rb, ib)| {
        rb.cmp(ra)
            .then_with(|| buckets[*ib].1.cmp(&buckets[*ia].1))
            .then_with(|| buckets[*ia].0.cmp(&buckets[*ib].0))
    });
    // One pass in remainder order; a second pass only matters when the cap
    // pushed units past the buckets that had a remainder.
    while leftover > 0 {
        let before = leftover;
        for &(_, i) in &remainders {
            if leftover == 0 {
                break;
            }
            if capped && alloc[i] >= buckets[i].1 {
                continue;
            }
            alloc[i] += 1;
            leftover -= 1;
        }
        if leftover == before {
            break;
        }
    }
    alloc
}

/// Integer allocation of `target_total` units proportional to `counts`, never
/// exceeding any bucket's count.
pub fn largest_remainder_allocate<K: Ord + Clone>(
    counts: &BTreeMap<K, u64>,
    target_total: u64,
) -> Result<BTreeMap<K, u64>, AllocError> {
    let total: u64 = counts.values().sum();
    if target_total > total {
        return Err(AllocError::TargetTooLarge {
            target: target_total,
            total,
        });
    }
    let buckets: Vec<(K, u64)> = counts.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let alloc = apportion(&buckets, target_total, true);
    Ok(buckets.into_iter().map(|(k, _)| k).zip(alloc).collect())
}

/// Resolution used to turn fractions into integer weights.
const FRACTION_SCALE: f64 = 1e9;

/// Divides `n` items between named parts in proportion to `fractions`, with the
/// same remainder and tie rules as [`largest_remainder_allocate`] (parts with
/// equal fractions are ordered by name).
pub fn allocate_fractions(n: u64, parts: &[(&str, f64)]) -> Result<Vec<u64>, AllocError> {
    let fractions: Vec<f64> = parts.iter().map(|(_, f)| *f).collect();
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0 + 1e-12)) || (sum - 1.0).abs() > 1e-6 {
        return Err(AllocError::BadFractions(fractions));
    }
    let buckets: Vec<(&str, u64)> = parts
        .iter()
        .map(|(name, f)| (*name, (f * FRACTION_SCALE).round() as u64))
        .collect();
    Ok(apportion(&buckets, n, false))
}
