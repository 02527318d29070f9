//! Rotary positional embedding, rotate-half layout.

use serde::{Deserialize, Serialize};

use crate::error::{PactError, Result};
use crate::tensor::{PositionIds, TokenTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RopeLayout {
    /// Dimension `k` pairs with `k + d_h/2`.
    #[default]
    HalfSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeConfig {
    pub base: f64,
    pub enabled: bool,
    pub layout: RopeLayout,
}

impl Default for RopeConfig {
    fn default() -> Self {
        Self {
            base: 10_000.0,
            enabled: true,
            layout: RopeLayout::HalfSplit,
        }
    }
}

impl RopeConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.base.is_finite()) {
            return Err(PactError::InvalidParameter(format!(
                "rope base must be positive, got {}",
                self.base
            )));
        }
        Ok(())
    }

    /// Angular frequency of rotation pair `k` for head dimension `head_dim`.
    pub fn frequency(&self, k: usize, head_dim: usize) -> f64 {
        self.base.powf(-2.0 * k as f64 / head_dim as f64)
    }
}

/// Rotates every head of a `(n, n_h, d_h)` tensor by its token's position.
///
/// Returns an unchanged copy when `cfg.enabled` is false.
pub fn apply_rope(t: &TokenTensor, pos: &PositionIds, cfg: &RopeConfig) -> Result<TokenTensor> {
    let (heads, head_dim) = t.heads()?;
    if pos.len() != t.n_tokens() {
        return Err(PactError::Shape(format!(
            "{} position ids for {} tokens",
            pos.len(),
            t.n_tokens()
        )));
    }
    if !cfg.enabled {
        return Ok(t.clone());
    }
    cfg.validate()?;
    if head_dim % 2 != 0 {
        return Err(PactError::OddHeadDim(head_dim));
    }
    let half = head_dim / 2;
    let freqs: Vec<f64> = (0..half).map(|k| cfg.frequency(k, head_dim)).collect();

    let mut out = t.data().to_vec();
    for (token, chunk) in out.chunks_exact_mut(heads * head_dim).enumerate() {
        let p = pos.as_slice()[token] as f64;
        let sin_cos: Vec<(f64, f64)> = freqs.iter().map(|f| (p * f).sin_cos()).collect();
        for head in chunk.chunks_exact_mut(head_dim) {
            let (xs, ys) = head.split_at_mut(half);
            for ((x, y), &(sin, cos)) in xs.iter_mut().zip(ys.iter_mut()).zip(&sin_cos) {
                let (x0, y0) = (*x as f64, *y as f64);
                *x = (x0 * cos - y0 * sin) as f32;
                *y = (x0 * sin + y0 * cos) as f32;
            }
        }
    }
    TokenTensor::new(t.name(), t.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(v: &[f32]) -> TokenTensor {
        TokenTensor::new("k", vec![1, 1, v.len()], v.to_vec()).unwrap()
    }

    fn norm(v: &[f32]) -> f64 {
        v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn position_zero_is_identity() {
        let t = single(&[0.3, -1.2, 4.0, 0.5]);
        let r = apply_rope(&t, &PositionIds(vec![0]), &RopeConfig::default()).unwrap();
        assert_eq!(r, t);
    }

    #[test]
    fn unit_vector_rotates_by_one_radian() {
        let t = single(&[1.0, 0.0]);
        let r = apply_rope(&t, &PositionIds(vec![1]), &RopeConfig::default()).unwrap();
        assert!((r.data()[0] as f64 - 0.540302).abs() < 1e-6);
        assert!((r.data()[1] as f64 - 0.841471).abs() < 1e-6);
    }

    #[test]
    fn odd_head_dim_rejected() {
        let t = single(&[1.0, 0.0, 2.0]);
        let err = apply_rope(&t, &PositionIds(vec![1]), &RopeConfig::default()).unwrap_err();
        assert!(err.to_string().contains("rope requires even head dim"));
    }

    #[test]
    fn disabled_is_passthrough() {
        let t = single(&[1.0, 2.0]);
        let r = apply_rope(&t, &PositionIds(vec![9]), &RopeConfig::disabled()).unwrap();
        assert_eq!(r, t);
    }

    #[test]
    fn position_count_must_match() {
        let t = single(&[1.0, 2.0]);
        assert!(apply_rope(&t, &PositionIds(vec![1, 2]), &RopeConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(
            v in prop::collection::vec(-10.0f32..10.0, 8),
            p in 0u32..4096,
        ) {
            let r = apply_rope(&single(&v), &PositionIds(vec![p]), &RopeConfig::default()).unwrap();
            let (a, b) = (norm(&v), norm(r.data()));
            prop_assert!((a - b).abs() <= 1e-6 * a.max(1e-12) + 1e-12);
        }

        #[test]
        fn dot_product_depends_on_offset_only(
            u in prop::collection::vec(-1.0f32..1.0, 8),
            v in prop::collection::vec(-1.0f32..1.0, 8),
            p1 in 0u32..200,
            p2 in 0u32..200,
            shift in 0u32..200,
        ) {
            let cfg = RopeConfig::default();
            let dot = |a: u32, b: u32| {
                let ru = apply_rope(&single(&u), &PositionIds(vec![a]), &cfg).unwrap();
                let rv = apply_rope(&single(&v), &PositionIds(vec![b]), &cfg).unwrap();
                ru.data().iter().zip(rv.data()).map(|(x, y)| *x as f64 * *y as f64).sum::<f64>()
            };
            prop_assert!((dot(p1, p2) - dot(p1 + shift, p2 + shift)).abs() < 1e-5);
        }
    }
}
