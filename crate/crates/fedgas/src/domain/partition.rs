use std::collections::BTreeSet;

use ndarray::Axis;

use crate::domain::TimeSeriesDataset;
use crate::error::{Error, Result};

const SHARE_SUM_TOLERANCE: f64 = 1e-9;

/// Split a dataset into contiguous date-ordered blocks with row counts
/// proportional to `shares`, using largest-remainder rounding. The blocks
/// concatenated in order reproduce the input exactly.
pub fn partition_horizontal(
    dataset: &TimeSeriesDataset,
    shares: &[f64],
) -> Result<Vec<TimeSeriesDataset>> {
    if shares.is_empty() {
        return Err(Error::Config("no shares given".into()));
    }
    if let Some(s) = shares.iter().find(|s| **s <= 0.0 || !s.is_finite()) {
        return Err(Error::Config(format!(
            "share {s} must be a positive finite fraction"
        )));
    }
    let total: f64 = shares.iter().sum();
    if (total - 1.0).abs() > SHARE_SUM_TOLERANCE {
        return Err(Error::Config(format!("shares sum to {total}, expected 1")));
    }

    let counts = largest_remainder_counts(dataset.rows(), shares);
    let mut out = Vec::with_capacity(counts.len());
    let mut start = 0;
    for count in counts {
        out.push(dataset.slice_rows(start, start + count));
        start += count;
    }
    Ok(out)
}

/// Apportion `n` rows over the shares: floor of each quota, then one extra
/// row to the largest fractional remainders (ties to the earlier share).
fn largest_remainder_counts(n: usize, shares: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Split a dataset by feature into one block per column group. Groups must
/// be disjoint and cover every feature column. The first block keeps the
/// target (the active participant's view); the rest carry features only.
pub fn partition_vertical(
    dataset: &TimeSeriesDataset,
    column_groups: &[Vec<String>],
) -> Result<Vec<TimeSeriesDataset>> {
    if column_groups.is_empty() {
        return Err(Error::Config("no column groups given".into()));
    }
    let known: BTreeSet<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    let mut claimed = BTreeSet::new();
    for group in column_groups {
        for name in group {
            if !known.contains(name.as_str()) {
                return Err(Error::Config(format!("unknown feature column `{name}`")));
            }
            if !claimed.insert(name.as_str()) {
                return Err(Error::Config(format!(
                    "feature column `{name}` appears in more than one group"
                )));
            }
        }
    }
    if claimed.len() != known.len() {
        let missing: Vec<&str> = known.difference(&claimed).copied().collect();
        return Err(Error::Config(format!(
            "column groups do not cover features: {}",
            missing.join(", ")
        )));
    }

    let index_of = |name: &str| {
        dataset
            .feature_names()
            .iter()
            .position(|n| n == name)
            .unwrap()
    };
    column_groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let indices: Vec<usize> = group.iter().map(|n| index_of(n)).collect();
            let features = dataset.features().select(Axis(1), &indices);
            let target = if g == 0 {
                dataset.target().map(<[f64]>::to_vec)
            } else {
                None
            };
            TimeSeriesDataset::new(dataset.dates().to_vec(), group.clone(), features, target)
        })
        .collect()
}
