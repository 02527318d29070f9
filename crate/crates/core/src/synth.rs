//! Deterministic synthetic tensor dumps with planted key structure.
//!
//! Keys of `clusters` groups sit within cosine distance `noise` of one of a
//! set of orthonormal directions; each of the `outliers` tokens gets a
//! direction of its own. Key content is confined to the rotary pairs whose
//! rotation over the whole position range stays under [`ROTATION_BUDGET`]
//! radians, so the planted structure survives the rotary embedding. Queries
//! live in the remaining coordinates, which makes the global-query softmax
//! uniform and leaves importance to the hidden-state norms. Planted tokens'
//! hidden states are scaled by `1 + norm_spread`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{PactError, Result};
use crate::rope::RopeConfig;
use crate::tensor::{PositionIds, TokenTensor};

/// Largest rotary angle (radians) a key coordinate pair may accumulate
/// across the position range.
pub const ROTATION_BUDGET: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub tokens: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub hidden_dim: usize,
    pub clusters: usize,
    pub outliers: usize,
    pub noise: f64,
    pub norm_spread: f64,
    pub seed: u64,
    pub rope_base: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            tokens: 64,
            heads: 4,
            head_dim: 32,
            hidden_dim: 64,
            clusters: 3,
            outliers: 2,
            noise: 0.02,
            norm_spread: 0.0,
            seed: 0,
            rope_base: RopeConfig::default().base,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDump {
    pub hidden: TokenTensor,
    pub keys: TokenTensor,
    pub queries: TokenTensor,
    pub positions: PositionIds,
    pub labels: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Group per token: `0..clusters` planted, then one group per outlier.
    pub labels: Vec<usize>,
    pub clusters: usize,
    pub outliers: usize,
    pub config: SynthConfig,
}

impl GroundTruth {
    pub fn groups(&self) -> usize {
        self.clusters + self.outliers
    }
}

/// Worst-case cosine distance between two keys of one planted group.
pub fn max_intra_distance(noise: f64) -> f64 {
    2.0 * noise * (2.0 - noise)
}

/// Lower bound on the cosine distance between keys of different groups.
pub fn min_inter_distance(noise: f64) -> f64 {
    let sin = (1.0 - (1.0 - noise).powi(2)).max(0.0).sqrt();
    1.0 - (2.0 * sin + sin * sin)
}

fn key_coordinates(cfg: &SynthConfig) -> (Vec<usize>, Vec<usize>) {
    let rope = RopeConfig {
        base: cfg.rope_base,
        ..RopeConfig::default()
    };
    let half = cfg.head_dim / 2;
    let span = cfg.tokens.saturating_sub(1) as f64;
    let mut planted = Vec::new();
    let mut free = Vec::new();
    for h in 0..cfg.heads {
        for k in 0..half {
            let coords = [h * cfg.head_dim + k, h * cfg.head_dim + k + half];
            if span * rope.frequency(k, cfg.head_dim) <= ROTATION_BUDGET {
                planted.extend(coords);
            } else {
                free.extend(coords);
            }
        }
    }
    (planted, free)
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PactError::InvalidParameter(m));
        if self.tokens == 0 || self.heads == 0 || self.head_dim == 0 || self.hidden_dim == 0 {
            return bad("tokens, heads, head dim and hidden dim must be positive".into());
        }
        if !self.head_dim.is_multiple_of(2) {
            return Err(PactError::OddHeadDim(self.head_dim));
        }
        if !(self.noise >= 0.0 && self.noise < 1.0) {
            return bad(format!("noise must be in [0, 1), got {}", self.noise));
        }
        if !(self.norm_spread >= 0.0 && self.norm_spread.is_finite()) {
            return bad(format!("norm spread must be >= 0, got {}", self.norm_spread));
        }
        if !(self.rope_base > 0.0 && self.rope_base.is_finite()) {
            return bad(format!("rope base must be positive, got {}", self.rope_base));
        }
        let groups = self.clusters + self.outliers;
        if groups == 0 {
            return Err(PactError::InfeasibleGeometry("no groups requested".into()));
        }
        if self.tokens < groups || (self.clusters == 0 && self.tokens != self.outliers) {
            return Err(PactError::InfeasibleGeometry(format!(
                "{} tokens cannot hold {} clusters and {} outliers",
                self.tokens, self.clusters, self.outliers
            )));
        }
        let (planted, _) = key_coordinates(self);
        if planted.len() < groups.max(2) {
            return Err(PactError::InfeasibleGeometry(format!(
                "{} directions requested but only {} key dimensions stay rotation-stable \
                 over {} positions ({} heads x {} head dim)",
                groups,
                planted.len(),
                self.tokens,
                self.heads,
                self.head_dim
            )));
        }
        // Rotary drift can add up to the budget to angles inside a group and
        // remove as much between groups.
        let drift = 1.0 - ROTATION_BUDGET.cos();
        if max_intra_distance(self.noise) + 2.0 * drift >= min_inter_distance(self.noise) - 2.0 * drift {
            return Err(PactError::InfeasibleGeometry(format!(
                "noise {} does not keep groups separated",
                self.noise
            )));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

fn remove_component(v: &mut [f64], unit: &[f64]) {
    let proj: f64 = v.iter().zip(unit).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(unit).for_each(|(a, b)| *a -= proj * b);
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDump> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.tokens;
    let key_width = cfg.heads * cfg.head_dim;
    let groups = cfg.clusters + cfg.outliers;
    let (planted, free) = key_coordinates(cfg);
    let dim = planted.len();

    // Orthonormal group directions by Gram-Schmidt.
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(groups);
    while directions.len() < groups {
        let mut v = gaussian(&mut rng, dim);
        for d in &directions {
            remove_component(&mut v, d);
        }
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            normalize(&mut v);
            directions.push(v);
        }
    }

    let mut labels: Vec<usize> = (0..n.saturating_sub(cfg.outliers))
        .map(|i| i % cfg.clusters.max(1))
        .chain(cfg.clusters..groups)
        .collect();
    labels.shuffle(&mut rng);

    let mut keys = vec![0f32; n * key_width];
    for (i, &g) in labels.iter().enumerate() {
        let dir = &directions[g];
        let mut v = dir.clone();
        if g < cfg.clusters && cfg.noise > 0.0 {
            let mut w = gaussian(&mut rng, dim);
            remove_component(&mut w, dir);
            normalize(&mut w);
            let cos = 1.0 - cfg.noise * rng.random::<f64>();
            let sin = (1.0 - cos * cos).sqrt();
            v = dir.iter().zip(&w).map(|(a, b)| cos * a + sin * b).collect();
        }
        let scale = rng.random_range(0.5..2.0);
        for (&c, x) in planted.iter().zip(&v) {
            keys[i * key_width + c] = (x * scale) as f32;
        }
    }

    let mut queries = vec![0f32; n * key_width];
    for i in 0..n {
        if free.is_empty() {
            for c in 0..key_width {
                queries[i * key_width + c] = (0.1 * rng.sample::<f64, _>(StandardNormal)) as f32;
            }
        } else {
            for &c in &free {
                queries[i * key_width + c] = rng.sample::<f64, _>(StandardNormal) as f32;
            }
        }
    }

    let mut hidden = Vec::with_capacity(n * cfg.hidden_dim);
    for &g in &labels {
        let mut v = gaussian(&mut rng, cfg.hidden_dim);
        normalize(&mut v);
        let mut norm = 1.0 + 0.1 * rng.random::<f64>();
        if g < cfg.clusters {
            norm *= 1.0 + cfg.norm_spread;
        }
        hidden.extend(v.into_iter().map(|x| (x * norm) as f32));
    }

    let shape3 = vec![n, cfg.heads, cfg.head_dim];
    Ok(SynthDump {
        hidden: TokenTensor::new("hidden", vec![n, cfg.hidden_dim], hidden)?,
        keys: TokenTensor::new("keys", shape3.clone(), keys)?,
        queries: TokenTensor::new("queries", shape3, queries)?,
        positions: PositionIds::sequential(n),
        labels: GroundTruth {
            labels,
            clusters: cfg.clusters,
            outliers: cfg.outliers,
            config: cfg.clone(),
        },
    })
}
