use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.75, seed: 0, stratified: true }
    }
}

/// Sorted index sets of a train/validation partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Split {
    pub fn select<T: Clone>(&self, data: &[T]) -> (Vec<T>, Vec<T>) {
        (
            self.train.iter().map(|&i| data[i].clone()).collect(),
            self.val.iter().map(|&i| data[i].clone()).collect(),
        )
    }
}

/// Largest-remainder allocation of `round(fraction · Σ sizes)` across classes.
/// Each class gets `⌊fraction · size⌋`; the leftover units go to the largest
/// fractional parts, earlier classes first on ties.
pub fn allocate_train_counts(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let quotas: Vec<f64> = sizes.iter().map(|&n| fraction * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = target.saturating_sub(counts.iter().sum());
    for &c in order.iter().cycle().take(sizes.len() * 2) {
        if left == 0 {
            break;
        }
        if counts[c] < sizes[c] {
            counts[c] += 1;
            left -= 1;
        }
    }
    counts
}

/// Seeded train/validation split. With stratification each class is split
/// separately using [`allocate_train_counts`].
pub fn stratified_split<K: Ord + Copy>(labels: &[K], spec: &SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!("train_fraction {} outside (0, 1)", spec.train_fraction)));
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    if spec.stratified {
        let mut by_class: BTreeMap<K, Vec<usize>> = BTreeMap::new();
        for (i, &k) in labels.iter().enumerate() {
            by_class.entry(k).or_default().push(i);
        }
        if let Some((_, members)) = by_class.iter().find(|(_, m)| m.len() < 2) {
            return Err(Error::Stratification(format!(
                "a class has {} sample(s); stratification needs at least 2",
                members.len()
            )));
        }
        let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
        let counts = allocate_train_counts(&sizes, spec.train_fraction);
        for (mut members, k) in by_class.into_values().zip(counts) {
            members.shuffle(&mut rng);
            train.extend_from_slice(&members[..k]);
            val.extend_from_slice(&members[k..]);
        }
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        let k = (spec.train_fraction * labels.len() as f64).round() as usize;
        train.extend_from_slice(&all[..k]);
        val.extend_from_slice(&all[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(Split { train, val })
}
