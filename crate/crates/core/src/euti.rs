//! Attention-free token importance: a global-query softmax per head, averaged
//! over heads and scaled by the hidden-state norm, followed by a percentile
//! split into important and unimportant tokens.
//!
//! Keys and queries passed here must be taken before any rotary embedding.
//! All token-axis reductions go through [`ordered_sum`], which makes scores
//! exactly permutation-equivariant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PactError, Result};
use crate::numeric::{ordered_sum, squared_norm};
use crate::tensor::TokenTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSplit {
    pub scores: Vec<f64>,
    /// Ascending token indices.
    pub important: Vec<usize>,
    /// Ascending token indices.
    pub unimportant: Vec<usize>,
    pub lambda: f64,
}

/// Per-head mean of all query vectors, shape `(n_h, d_h)`.
pub fn global_query(queries: &TokenTensor) -> Result<Vec<Vec<f64>>> {
    let (heads, head_dim) = queries.heads()?;
    let n = queries.n_tokens();
    if n == 0 {
        return Err(PactError::EmptyTokenSet);
    }
    let stride = heads * head_dim;
    let data = queries.data();
    let out = (0..heads)
        .map(|h| {
            (0..head_dim)
                .map(|c| {
                    let mut column: Vec<f64> = (0..n)
                        .map(|i| data[i * stride + h * head_dim + c] as f64)
                        .collect();
                    ordered_sum(&mut column) / n as f64
                })
                .collect()
        })
        .collect();
    Ok(out)
}

/// Softmax over tokens of `k_i · Q_global` for each head, indexed `[head][token]`.
pub fn head_attention_terms(keys: &TokenTensor, queries: &TokenTensor) -> Result<Vec<Vec<f64>>> {
    check_same_shape("queries", keys, queries)?;
    let (heads, head_dim) = keys.heads()?;
    let q_global = global_query(queries)?;
    let n = keys.n_tokens();
    let stride = heads * head_dim;
    let data = keys.data();

    let terms = q_global
        .par_iter()
        .enumerate()
        .map(|(h, q)| {
            let logits: Vec<f64> = (0..n)
                .map(|i| {
                    let k = &data[i * stride + h * head_dim..i * stride + (h + 1) * head_dim];
                    k.iter().zip(q).map(|(&a, &b)| a as f64 * b).sum()
                })
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
            let denom = ordered_sum(&mut exps.clone());
            exps.into_iter().map(|e| e / denom).collect()
        })
        .collect();
    Ok(terms)
}

/// Importance score per token:
/// `s_i = mean_over_heads(softmax_i(k_i · Q_global)) * ||h_i||_2`.
pub fn euti_scores(
    hidden: &TokenTensor,
    keys: &TokenTensor,
    queries: &TokenTensor,
) -> Result<Vec<f64>> {
    hidden.expect_rank(2)?;
    if hidden.n_tokens() != keys.n_tokens() {
        return Err(PactError::Shape(format!(
            "hidden states have {} tokens, keys have {}",
            hidden.n_tokens(),
            keys.n_tokens()
        )));
    }
    let terms = head_attention_terms(keys, queries)?;
    let heads = terms.len() as f64;
    let scores = (0..hidden.n_tokens())
        .into_par_iter()
        .map(|i| {
            let attn: f64 = terms.iter().map(|head| head[i]).sum::<f64>() / heads;
            attn * squared_norm(hidden.row(i)).sqrt()
        })
        .collect();
    Ok(scores)
}

/// Number of tokens labelled unimportant: `floor(lambda * n)`.
///
/// A 1e-9 guard absorbs representation error so that e.g. `0.29 * 100`
/// yields 29 rather than 28.
pub fn pruned_count(lambda: f64, n: usize) -> usize {
    ((lambda * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Splits tokens at the `lambda` percentile (nearest rank). The
/// `floor(lambda * n)` lowest scores are unimportant; equal scores are pruned
/// lowest index first.
pub fn split_tokens(scores: &[f64], lambda: f64) -> Result<ImportanceSplit> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(PactError::InvalidPruningPercentage(lambda));
    }
    let n = scores.len();
    let m = pruned_count(lambda, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    let mut unimportant = order[..m].to_vec();
    let mut important = order[m..].to_vec();
    unimportant.sort_unstable();
    important.sort_unstable();
    Ok(ImportanceSplit {
        scores: scores.to_vec(),
        important,
        unimportant,
        lambda,
    })
}

pub(crate) fn check_same_shape(what: &str, keys: &TokenTensor, other: &TokenTensor) -> Result<()> {
    keys.heads()?;
    if keys.shape() != other.shape() {
        return Err(PactError::Shape(format!(
            "keys {:?} and {} {:?} differ",
            keys.shape(),
            what,
            other.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t3(n: usize, h: usize, d: usize, data: Vec<f32>) -> TokenTensor {
        TokenTensor::new("x", vec![n, h, d], data).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
        (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    }

    /// Plain nested loops, no shared helpers.
    fn naive_scores(h: &TokenTensor, k: &TokenTensor, q: &TokenTensor) -> Vec<f64> {
        let (n, nh, dh) = (k.shape()[0], k.shape()[1], k.shape()[2]);
        let at = |t: &TokenTensor, i: usize, j: usize, c: usize| t.data()[(i * nh + j) * dh + c] as f64;
        let mut s = vec![0.0; n];
        for j in 0..nh {
            let mut qg = vec![0.0; dh];
            for c in 0..dh {
                for i in 0..n {
                    qg[c] += at(q, i, j, c);
                }
                qg[c] /= n as f64;
            }
            let logits: Vec<f64> = (0..n)
                .map(|i| (0..dh).map(|c| at(k, i, j, c) * qg[c]).sum())
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for i in 0..n {
                s[i] += logits[i].exp() / z / nh as f64;
            }
        }
        for i in 0..n {
            let norm: f64 = h.row(i).iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            s[i] *= norm;
        }
        s
    }

    #[test]
    fn global_query_of_one_token() {
        let q = t3(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(global_query(&q).unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn opposite_queries_cancel() {
        let q = t3(2, 1, 3, vec![0.3, -2.0, 5.0, -0.3, 2.0, -5.0]);
        assert_eq!(global_query(&q).unwrap(), vec![vec![0.0, 0.0, 0.0]]);
    }

    #[test]
    fn global_query_matches_brute_force_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = t3(3, 2, 4, random(&mut rng, 24));
        let g = global_query(&q).unwrap();
        for h in 0..2 {
            for c in 0..4 {
                let mean = (0..3).map(|i| q.data()[i * 8 + h * 4 + c] as f64).sum::<f64>() / 3.0;
                assert!((g[h][c] - mean).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn empty_queries() {
        let q = t3(0, 1, 2, vec![]);
        assert!(matches!(global_query(&q), Err(PactError::EmptyTokenSet)));
    }

    #[test]
    fn identical_keys_give_uniform_attention() {
        let h = TokenTensor::new("h", vec![2, 2], vec![2.0, 0.0, 0.0, 4.0]).unwrap();
        let k = t3(2, 1, 2, vec![0.7, -0.2, 0.7, -0.2]);
        let q = t3(2, 1, 2, vec![1.0, 3.0, -2.0, 0.5]);
        assert_eq!(euti_scores(&h, &k, &q).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_hidden_states_score_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = TokenTensor::zeros("h", vec![5, 3]).unwrap();
        let k = t3(5, 2, 2, random(&mut rng, 20));
        let q = t3(5, 2, 2, random(&mut rng, 20));
        assert!(euti_scores(&h, &k, &q).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = TokenTensor::new("h", vec![4, 5], random(&mut rng, 20)).unwrap();
        let k = t3(4, 2, 3, random(&mut rng, 24));
        let q = t3(4, 2, 3, random(&mut rng, 24));
        let got = euti_scores(&h, &k, &q).unwrap();
        let want = naive_scores(&h, &k, &q);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn shape_mismatch() {
        let h = TokenTensor::zeros("h", vec![3, 2]).unwrap();
        let k = t3(2, 1, 2, vec![0.0; 4]);
        let q = t3(2, 1, 2, vec![0.0; 4]);
        let err = euti_scores(&h, &k, &q).unwrap_err();
        assert!(err.to_string().starts_with("shape error"));
        let q = t3(2, 2, 1, vec![0.0; 4]);
        let h = TokenTensor::zeros("h", vec![2, 2]).unwrap();
        assert!(matches!(euti_scores(&h, &k, &q), Err(PactError::Shape(_))));
    }

    #[test]
    fn split_bottom_two() {
        let s = split_tokens(&[0.1, 0.4, 0.2, 0.3], 0.5).unwrap();
        assert_eq!(s.unimportant, vec![0, 2]);
        assert_eq!(s.important, vec![1, 3]);
    }

    #[test]
    fn split_without_pruning() {
        let s = split_tokens(&[0.5, 0.1, 0.9], 0.0).unwrap();
        assert_eq!(s.important, vec![0, 1, 2]);
        assert!(s.unimportant.is_empty());
    }

    #[test]
    fn split_ties_prune_lowest_index() {
        let s = split_tokens(&[1.0; 4], 0.5).unwrap();
        assert_eq!(s.unimportant, vec![0, 1]);
    }

    #[test]
    fn split_rejects_bad_lambda() {
        for l in [-0.1, 1.2, f64::NAN] {
            let err = split_tokens(&[1.0], l).unwrap_err();
            assert!(err.to_string().starts_with("invalid pruning percentage"));
        }
    }

    #[test]
    fn pruned_count_absorbs_representation_error() {
        assert_eq!(pruned_count(0.29, 100), 29);
        assert_eq!(pruned_count(0.55, 20), 11);
        assert_eq!(pruned_count(1.0, 7), 7);
    }

    #[test]
    fn larger_norm_raises_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut hd = random(&mut rng, 12);
        let k = t3(4, 1, 2, random(&mut rng, 8));
        let q = t3(4, 1, 2, random(&mut rng, 8));
        let before = euti_scores(&TokenTensor::new("h", vec![4, 3], hd.clone()).unwrap(), &k, &q).unwrap();
        for v in &mut hd[3..6] {
            *v *= 2.5;
        }
        let after = euti_scores(&TokenTensor::new("h", vec![4, 3], hd).unwrap(), &k, &q).unwrap();
        assert!(after[1] > before[1]);
        assert_eq!(after[0], before[0]);
    }

    proptest! {
        #[test]
        fn split_partitions(scores in prop::collection::vec(0.0f64..10.0, 0..64), lambda in 0.0f64..=1.0) {
            let s = split_tokens(&scores, lambda).unwrap();
            let n = scores.len();
            prop_assert_eq!(s.unimportant.len(), pruned_count(lambda, n));
            let mut all: Vec<usize> = s.important.iter().chain(&s.unimportant).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            if let (Some(lo), Some(hi)) = (
                s.important.iter().map(|&i| scores[i]).reduce(f64::min),
                s.unimportant.iter().map(|&i| scores[i]).reduce(f64::max),
            ) {
                prop_assert!(lo >= hi);
            }
        }

        #[test]
        fn scores_are_permutation_equivariant(seed in any::<u64>(), n in 1usize..24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = TokenTensor::new("h", vec![n, 3], random(&mut rng, n * 3)).unwrap();
            let k = t3(n, 2, 2, random(&mut rng, n * 4));
            let q = t3(n, 2, 2, random(&mut rng, n * 4));
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let base = euti_scores(&h, &k, &q).unwrap();
            let permuted = euti_scores(
                &h.select_rows(&perm).unwrap(),
                &k.select_rows(&perm).unwrap(),
                &q.select_rows(&perm).unwrap(),
            ).unwrap();
            for (j, &i) in perm.iter().enumerate() {
                prop_assert_eq!(permuted[j].to_bits(), base[i].to_bits());
            }
        }

        #[test]
        fn head_terms_sum_to_one(seed in any::<u64>(), n in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = t3(n, 3, 4, random(&mut rng, n * 12).into_iter().map(|v| v * 20.0).collect());
            let q = t3(n, 3, 4, random(&mut rng, n * 12));
            for head in head_attention_terms(&k, &q).unwrap() {
                prop_assert!((head.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }
}
