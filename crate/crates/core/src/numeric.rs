//! Order-fixed floating point reductions.

/// Sums a multiset of values in ascending `total_cmp` order.
///
/// The result depends only on the multiset, not on the input order, so
/// permuted inputs give bit-identical sums.
pub fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn squared_norm(a: &[f32]) -> f64 {
    a.iter().map(|&x| x as f64 * x as f64).sum()
}

/// Softmax with the maximum logit subtracted first.
pub fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let denom = ordered_sum(&mut exps.clone());
    exps.into_iter().map(|e| e / denom).collect()
}
