//! Proportional attention for merged tokens.
//!
//! A key standing for `w` merged tokens receives `log w` on its attention
//! logit. Under softmax this is exactly equivalent to repeating that key (and
//! its value) `w` times. Text tokens are never merged and get a zero bias.

use crate::error::{PactError, Result};
use crate::numeric::stable_softmax;

/// Additive per-key logit bias: `log w_j` for each visual key followed by
/// `text_len` zeros.
///
/// The bias does not depend on the query row; callers broadcast it across
/// rows and add it to `QK^T / sqrt(d)` together with their causal mask.
pub fn proportional_attention_bias(weights: &[u32], text_len: usize) -> Result<Vec<f64>> {
    let mut bias = Vec::with_capacity(weights.len() + text_len);
    for (index, &w) in weights.iter().enumerate() {
        if w == 0 {
            return Err(PactError::InvalidClusterSize {
                index,
                size: w as u64,
            });
        }
        bias.push((w as f64).ln());
    }
    bias.resize(weights.len() + text_len, 0.0);
    Ok(bias)
}

/// `softmax(logits + bias)`.
pub fn biased_softmax(logits: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    if logits.len() != bias.len() {
        return Err(PactError::Shape(format!(
            "{} logits with {} bias terms",
            logits.len(),
            bias.len()
        )));
    }
    let shifted: Vec<f64> = logits.iter().zip(bias).map(|(l, b)| l + b).collect();
    Ok(stable_softmax(&shifted))
}

fn check_attention_inputs(query: &[f64], keys: &[Vec<f64>], values: &[Vec<f64>], weights: &[u32]) -> Result<()> {
    if keys.is_empty() {
        return Err(PactError::EmptyTokenSet);
    }
    if keys.len() != values.len() || keys.len() != weights.len() {
        return Err(PactError::Shape(format!(
            "{} keys, {} values, {} weights",
            keys.len(),
            values.len(),
            weights.len()
        )));
    }
    if keys.iter().any(|k| k.len() != query.len()) {
        return Err(PactError::Shape("key width differs from query width".into()));
    }
    let width = values[0].len();
    if values.iter().any(|v| v.len() != width) {
        return Err(PactError::Shape("ragged value rows".into()));
    }
    Ok(())
}

fn scaled_logits(query: &[f64], keys: &[Vec<f64>]) -> Vec<f64> {
    let scale = (query.len().max(1) as f64).sqrt();
    keys.iter()
        .map(|k| k.iter().zip(query).map(|(a, b)| a * b).sum::<f64>() / scale)
        .collect()
}

fn mix(probs: &[f64], values: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; values[0].len()];
    for (p, v) in probs.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += p * x;
        }
    }
    out
}

/// Single-row attention over weighted keys, using the log-weight bias.
pub fn proportional_attention(
    query: &[f64],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    weights: &[u32],
) -> Result<Vec<f64>> {
    check_attention_inputs(query, keys, values, weights)?;
    let bias = proportional_attention_bias(weights, 0)?;
    let probs = biased_softmax(&scaled_logits(query, keys), &bias)?;
    Ok(mix(&probs, values))
}

/// Plain attention after physically repeating key/value `j` `weights[j]` times.
pub fn duplicated_attention(
    query: &[f64],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    weights: &[u32],
) -> Result<Vec<f64>> {
    check_attention_inputs(query, keys, values, weights)?;
    proportional_attention_bias(weights, 0)?;
    let mut dup_keys = Vec::new();
    let mut dup_values = Vec::new();
    for ((k, v), &w) in keys.iter().zip(values).zip(weights) {
        for _ in 0..w {
            dup_keys.push(k.clone());
            dup_values.push(v.clone());
        }
    }
    let probs = stable_softmax(&scaled_logits(query, &dup_keys));
    Ok(mix(&probs, &dup_values))
}

/// Both formulations side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCheck {
    pub biased: Vec<f64>,
    pub duplicated: Vec<f64>,
}

impl AttentionCheck {
    pub fn max_abs_diff(&self) -> f64 {
        self.biased
            .iter()
            .zip(&self.duplicated)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Computes attention through the bias and through duplication.
pub fn proportional_attention_oracle(
    query: &[f64],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    weights: &[u32],
) -> Result<AttentionCheck> {
    Ok(AttentionCheck {
        biased: proportional_attention(query, keys, values, weights)?,
        duplicated: duplicated_attention(query, keys, values, weights)?,
    })
}
