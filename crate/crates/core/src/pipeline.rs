//! The full reduction: importance split, clustering of the important tokens
//! on rotated keys, recovery of pruned tokens lying near a center, merging of
//! hidden states and position-id assignment.

use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, ClusterSet};
use crate::dbdpc::{cluster_distances, CenterSelection, DbdpcParams};
use crate::distance::{pairwise_distance, DistanceMatrix, Metric};
use crate::error::{PactError, Result};
use crate::euti::{check_same_shape, euti_scores, split_tokens, ImportanceSplit};
use crate::rope::{apply_rope, RopeConfig};
use crate::tensor::{PositionIds, TokenTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionMode {
    /// Each merged token keeps its center's position id.
    #[default]
    Center,
    /// Rounded mean of the members' ids (ablation).
    MeanOfMembers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub d_c: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub d_n: f64,
    /// Layer the dumps were taken at. Informational; the pipeline reduces
    /// whatever tensors it is handed.
    pub layer: usize,
    pub rope: RopeConfig,
    pub metric: Metric,
    pub fallback_threshold: usize,
    pub selection: CenterSelection,
    pub position_mode: PositionMode,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            d_c: 0.21,
            lambda: 0.55,
            alpha: 1.5,
            d_n: 2.0,
            layer: 4,
            rope: RopeConfig::default(),
            metric: Metric::Cosine,
            fallback_threshold: 10,
            selection: CenterSelection::Recursive,
            position_mode: PositionMode::Center,
        }
    }
}

impl ReductionConfig {
    pub fn dbdpc_params(&self) -> DbdpcParams {
        DbdpcParams {
            d_c: self.d_c,
            d_n: self.d_n,
            metric: self.metric,
            fallback_threshold: self.fallback_threshold,
            selection: self.selection,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(PactError::InvalidPruningPercentage(self.lambda));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(PactError::InvalidParameter(format!(
                "tolerance coefficient must be >= 0, got {}",
                self.alpha
            )));
        }
        self.dbdpc_params().validate()?;
        self.rope.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    /// `(n', d)`, one row per cluster in center-selection order.
    pub merged_hidden: TokenTensor,
    pub position_ids: PositionIds,
    /// Cluster sizes; the proportional-attention weights.
    pub weights: Vec<u32>,
    pub clusters: ClusterSet,
    pub split: ImportanceSplit,
    /// Unimportant tokens that were not recovered into any cluster.
    pub discarded: Vec<usize>,
    pub reduction_ratio: f64,
}

impl ReductionResult {
    pub fn n_output(&self) -> usize {
        self.weights.len()
    }
}

/// Adds each unimportant token to its nearest center's cluster when that
/// distance is strictly below `alpha * d_c`; other tokens stay out.
///
/// `dist` must cover all tokens in the representation used for clustering.
pub fn recover_pruned(
    unimportant: &[usize],
    dist: &DistanceMatrix,
    alpha: f64,
    d_c: f64,
    clusters: &ClusterSet,
) -> ClusterSet {
    let mut out = clusters.clone();
    if clusters.is_empty() {
        return out;
    }
    let threshold = alpha * d_c;
    for &i in unimportant {
        let mut best = 0;
        for (slot, c) in clusters.clusters.iter().enumerate().skip(1) {
            if dist.get(i, c.center) < dist.get(i, clusters.clusters[best].center) {
                best = slot;
            }
        }
        if dist.get(i, clusters.clusters[best].center) < threshold {
            out.clusters[best].members.push(i);
        }
    }
    for c in &mut out.clusters {
        c.members.sort_unstable();
    }
    out
}

/// Mean hidden state of every cluster, in cluster order.
pub fn merge_clusters(hidden: &TokenTensor, clusters: &ClusterSet) -> Result<TokenTensor> {
    hidden.expect_rank(2)?;
    let d = hidden.shape()[1];
    let mut data = Vec::with_capacity(clusters.len() * d);
    for Cluster { members, .. } in &clusters.clusters {
        if members.is_empty() {
            return Err(PactError::InvalidParameter("empty cluster".into()));
        }
        let mut acc = vec![0.0f64; d];
        for &m in members {
            if m >= hidden.n_tokens() {
                return Err(PactError::Shape(format!(
                    "member {m} out of range for {} tokens",
                    hidden.n_tokens()
                )));
            }
            for (a, &v) in acc.iter_mut().zip(hidden.row(m)) {
                *a += v as f64;
            }
        }
        let count = members.len() as f64;
        data.extend(acc.into_iter().map(|a| (a / count) as f32));
    }
    TokenTensor::new("merged_hidden", vec![clusters.len(), d], data)
}

pub fn assign_position_ids(
    pos: &PositionIds,
    clusters: &ClusterSet,
    mode: PositionMode,
) -> PositionIds {
    let ids = pos.as_slice();
    PositionIds(
        clusters
            .clusters
            .iter()
            .map(|c| match mode {
                PositionMode::Center => ids[c.center],
                PositionMode::MeanOfMembers => {
                    let sum: u64 = c.members.iter().map(|&m| ids[m] as u64).sum();
                    (sum as f64 / c.members.len() as f64).round() as u32
                }
            })
            .collect(),
    )
}

/// Reduces `n` visual tokens to one token per cluster.
///
/// `keys` and `queries` are the pre-rotary tensors; importance is scored on
/// them directly while clustering and recovery use the rotated keys.
pub fn pact_reduce(
    hidden: &TokenTensor,
    keys: &TokenTensor,
    queries: &TokenTensor,
    pos: &PositionIds,
    cfg: &ReductionConfig,
) -> Result<ReductionResult> {
    cfg.validate()?;
    hidden.expect_rank(2)?;
    check_same_shape("queries", keys, queries)?;
    let n = hidden.n_tokens();
    if n == 0 {
        return Err(PactError::EmptyTokenSet);
    }
    if keys.n_tokens() != n || pos.len() != n {
        return Err(PactError::Shape(format!(
            "token counts differ: hidden {}, keys {}, positions {}",
            n,
            keys.n_tokens(),
            pos.len()
        )));
    }

    let scores = euti_scores(hidden, keys, queries)?;
    let split = split_tokens(&scores, cfg.lambda)?;

    let rotated = apply_rope(keys, pos, &cfg.rope)?;
    let dist = pairwise_distance(&rotated, cfg.metric)?;
    let clusters = if split.important.is_empty() {
        ClusterSet {
            clusters: Vec::new(),
            d_c: Some(cfg.d_c),
        }
    } else {
        let sub = dist.submatrix(&split.important);
        cluster_distances(&sub, &cfg.dbdpc_params())?.remap(&split.important)
    };
    let clusters = recover_pruned(&split.unimportant, &dist, cfg.alpha, cfg.d_c, &clusters);

    let merged_hidden = merge_clusters(hidden, &clusters)?;
    let position_ids = assign_position_ids(pos, &clusters, cfg.position_mode);
    let weights = clusters.sizes().into_iter().map(|s| s as u32).collect();
    let labels = clusters.labels(n);
    let discarded = split
        .unimportant
        .iter()
        .copied()
        .filter(|&i| labels[i].is_none())
        .collect();
    let reduction_ratio = 1.0 - clusters.len() as f64 / n as f64;

    Ok(ReductionResult {
        merged_hidden,
        position_ids,
        weights,
        clusters,
        split,
        discarded,
        reduction_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpread {
    /// Maximum pairwise cosine distance between keys, per layer.
    pub spreads: Vec<f64>,
    pub tau: f64,
    /// Earliest layer whose spread reaches `tau`.
    pub selected: Option<usize>,
}

/// Key spread per layer for choosing the reduction layer. Keys are the
/// pre-rotary dumps, heads flattened. `tau` defaults to 0.9 times the largest
/// spread observed.
pub fn layer_key_spread(layers: &[TokenTensor], tau: Option<f64>) -> Result<LayerSpread> {
    if layers.is_empty() {
        return Err(PactError::InvalidParameter("no layers given".into()));
    }
    let spreads = layers
        .iter()
        .map(|k| pairwise_distance(k, Metric::Cosine).map(|d| d.max()))
        .collect::<Result<Vec<f64>>>()?;
    let tau = tau.unwrap_or_else(|| 0.9 * spreads.iter().copied().fold(0.0, f64::max));
    let selected = spreads.iter().position(|&s| s >= tau);
    Ok(LayerSpread {
        spreads,
        tau,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(clusters: &[(usize, &[usize])]) -> ClusterSet {
        ClusterSet {
            clusters: clusters
                .iter()
                .map(|&(center, m)| Cluster {
                    center,
                    members: m.to_vec(),
                })
                .collect(),
            d_c: None,
        }
    }

    fn line(points: &[f64]) -> DistanceMatrix {
        let n = points.len();
        let values = (0..n * n)
            .map(|k| (points[k / n] - points[k % n]).abs())
            .collect();
        DistanceMatrix::from_rows(n, values).unwrap()
    }

    #[test]
    fn recovery_below_threshold() {
        // center 0 at 0.0, unimportant token 1 at 0.25; 1.5 * 0.2 = 0.3
        let d = line(&[0.0, 0.25]);
        let out = recover_pruned(&[1], &d, 1.5, 0.2, &set(&[(0, &[0])]));
        assert_eq!(out.clusters[0].members, vec![0, 1]);
    }

    #[test]
    fn zero_alpha_recovers_nothing() {
        let d = line(&[0.0, 0.0, 0.1]);
        let base = set(&[(0, &[0])]);
        assert_eq!(recover_pruned(&[1, 2], &d, 0.0, 0.2, &base), base);
    }

    #[test]
    fn boundary_distance_not_recovered() {
        let d = line(&[0.0, 1.5 * 0.2]);
        assert_eq!(d.get(0, 1), 1.5 * 0.2);
        let out = recover_pruned(&[1], &d, 1.5, 0.2, &set(&[(0, &[0])]));
        assert_eq!(out.clusters[0].members, vec![0]);
    }

    #[test]
    fn recovery_joins_nearest_center() {
        let d = line(&[0.0, 1.0, 0.8]);
        let out = recover_pruned(&[2], &d, 2.0, 0.5, &set(&[(0, &[0]), (1, &[1])]));
        assert_eq!(out.clusters[1].members, vec![1, 2]);
        assert_eq!(out.clusters[0].members, vec![0]);
    }

    #[test]
    fn merge_means() {
        let h = TokenTensor::new("h", vec![3, 2], vec![1.0, 1.0, 3.0, 3.0, 9.0, -1.0]).unwrap();
        let m = merge_clusters(&h, &set(&[(1, &[0, 1]), (2, &[2])])).unwrap();
        assert_eq!(m.shape(), &[2, 2]);
        assert_eq!(m.data(), &[2.0, 2.0, 9.0, -1.0]);
    }

    #[test]
    fn singleton_merge_is_row_selection() {
        let h = TokenTensor::new("h", vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let m = merge_clusters(&h, &set(&[(2, &[2]), (0, &[0])])).unwrap();
        assert_eq!(m.data(), &[5.0, 6.0, 1.0, 2.0]);
    }

    #[test]
    fn positions_from_centers() {
        let pos = PositionIds(vec![10, 11, 12]);
        let ids = assign_position_ids(&pos, &set(&[(2, &[1, 2]), (0, &[0])]), PositionMode::Center);
        assert_eq!(ids.0, vec![12, 10]);
        let ids = assign_position_ids(&pos, &set(&[(0, &[0, 1, 2])]), PositionMode::Center);
        assert_eq!(ids.0, vec![10]);
    }

    #[test]
    fn positions_mean_of_members() {
        let pos = PositionIds(vec![10, 11, 12, 20]);
        let ids = assign_position_ids(
            &pos,
            &set(&[(0, &[0, 1]), (2, &[2, 3])]),
            PositionMode::MeanOfMembers,
        );
        // (10+11)/2 = 10.5 -> 11, (12+20)/2 = 16
        assert_eq!(ids.0, vec![11, 16]);
    }

    #[test]
    fn config_validation() {
        let cfg = ReductionConfig { lambda: 1.2, ..Default::default() };
        assert!(cfg.validate().unwrap_err().to_string().starts_with("invalid pruning percentage"));
        assert!(ReductionConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
        assert!(ReductionConfig::default().validate().is_ok());
    }

    #[test]
    fn defaults() {
        let c = ReductionConfig::default();
        assert_eq!((c.d_c, c.lambda, c.alpha, c.d_n, c.layer), (0.21, 0.55, 1.5, 2.0, 4));
    }

    fn keys_layer(rows: &[[f32; 2]]) -> TokenTensor {
        TokenTensor::new("k", vec![rows.len(), 1, 2], rows.concat()).unwrap()
    }

    #[test]
    fn key_spread_examples() {
        let same = keys_layer(&[[1.0, 1.0], [2.0, 2.0]]);
        let ortho = keys_layer(&[[1.0, 0.0], [0.0, 1.0]]);
        let s = layer_key_spread(&[same.clone(), ortho.clone()], Some(0.5)).unwrap();
        assert_eq!(s.spreads, vec![0.0, 1.0]);
        assert_eq!(s.selected, Some(1));
        assert_eq!(layer_key_spread(&[same.clone(), ortho.clone()], Some(0.0)).unwrap().selected, Some(0));
        assert_eq!(layer_key_spread(&[same.clone()], Some(0.5)).unwrap().selected, None);
        assert!(layer_key_spread(&[], None).is_err());
    }

    #[test]
    fn key_spread_selects_first_layer_over_tau() {
        // cosine distance 1 - cos(theta) at chosen angles
        let layer = |spread: f64| {
            let theta = (1.0 - spread).acos() as f32;
            keys_layer(&[[1.0, 0.0], [theta.cos(), theta.sin()]])
        };
        let layers = [layer(0.1), layer(0.3), layer(0.8)];
        let s = layer_key_spread(&layers, Some(0.5)).unwrap();
        for (got, want) in s.spreads.iter().zip([0.1, 0.3, 0.8]) {
            assert!((got - want).abs() < 1e-6);
        }
        assert_eq!(s.selected, Some(2));
        // default tau = 0.9 * 0.8
        assert_eq!(layer_key_spread(&layers, None).unwrap().selected, Some(2));
    }
}
