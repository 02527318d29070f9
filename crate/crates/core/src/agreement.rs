//! Partition agreement.

use std::collections::HashMap;

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Adjusted Rand index between two labelings of the same items.
///
/// Identical partitions score exactly 1.0. When both partitions are trivial
/// in the same way (the index is undefined) the score is 1.0 if they are
/// identical and 0.0 otherwise.
pub fn adjusted_rand_index<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Eq + std::hash::Hash,
    B: Eq + std::hash::Hash,
{
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let mut joint: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: u64 = joint.values().map(|&c| pairs(c)).sum();
    let sum_a: u64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: u64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(a.len() as u64);

    if 2 * index == sum_a + sum_b {
        return 1.0;
    }
    if total == 0 {
        return 0.0;
    }
    let expected = sum_a as f64 * sum_b as f64 / total as f64;
    let max = (sum_a + sum_b) as f64 / 2.0;
    if max == expected {
        return 0.0;
    }
    (index as f64 - expected) / (max - expected)
}
