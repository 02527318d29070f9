//! Baseline clusterers sharing the [`ClusterSet`] contract: classic density
//! peaks clustering and seeded k-means with a medoid-like representative.
//!
//! Neither gives DBDPC's member-to-center bound; `ClusterSet::d_c` is `None`
//! on their output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, ClusterSet};
use crate::dbdpc::density_order;
use crate::distance::{pairwise_distance, DistanceMatrix, Metric};
use crate::error::{PactError, Result};
use crate::numeric::{ordered_sum, squared_norm};
use crate::tensor::TokenTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpcDensity {
    /// `sum_j exp(-(d_ij / d_c)^2)`
    #[default]
    Gaussian,
    /// Number of other points closer than `d_c`.
    CutoffCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpcCenterRule {
    /// Centers are points with `rho * delta >= t * max(rho * delta)`.
    Threshold(f64),
    /// The `ceil(f * q)` points with largest `rho * delta`.
    TopFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpcParams {
    pub d_c: f64,
    pub center_rule: DpcCenterRule,
    pub density: DpcDensity,
    pub metric: Metric,
}

impl DpcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_c > 0.0 && self.d_c.is_finite()) {
            return Err(PactError::InvalidParameter(format!(
                "DPC cutoff must be > 0, got {}",
                self.d_c
            )));
        }
        let (name, v) = match self.center_rule {
            DpcCenterRule::Threshold(t) => ("threshold", t),
            DpcCenterRule::TopFraction(f) => ("top fraction", f),
        };
        if !(v > 0.0 && v <= 1.0) {
            return Err(PactError::InvalidParameter(format!(
                "DPC {name} must be in (0, 1], got {v}"
            )));
        }
        Ok(())
    }
}

pub fn dpc_cluster(points: &TokenTensor, params: &DpcParams) -> Result<ClusterSet> {
    params.validate()?;
    if points.n_tokens() == 0 {
        return Err(PactError::EmptyTokenSet);
    }
    let dist = pairwise_distance(points, params.metric)?;
    dpc_cluster_distances(&dist, params)
}

pub fn dpc_cluster_distances(dist: &DistanceMatrix, params: &DpcParams) -> Result<ClusterSet> {
    params.validate()?;
    let q = dist.len();
    if q == 0 {
        return Err(PactError::EmptyTokenSet);
    }
    let d_c = params.d_c;
    let rho: Vec<f64> = (0..q)
        .into_par_iter()
        .map(|i| match params.density {
            DpcDensity::Gaussian => {
                let mut terms: Vec<f64> =
                    dist.row(i).iter().map(|&d| (-(d / d_c).powi(2)).exp()).collect();
                ordered_sum(&mut terms)
            }
            DpcDensity::CutoffCount => dist
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, &d)| j != i && d < d_c)
                .count() as f64,
        })
        .collect();

    let order = density_order(&rho);
    // For the densest point delta is its largest distance, the usual DPC
    // convention; an infinite delta would make the threshold rule degenerate.
    let mut delta = vec![0.0; q];
    let mut parent = vec![usize::MAX; q];
    let top = order[0];
    delta[top] = dist.row(top).iter().copied().fold(0.0, f64::max);
    for (r, &i) in order.iter().enumerate().skip(1) {
        let mut best = order[0];
        for &j in &order[1..r] {
            if dist.get(i, j) < dist.get(i, best) {
                best = j;
            }
        }
        delta[i] = dist.get(i, best);
        parent[i] = best;
    }

    let gamma: Vec<f64> = rho.iter().zip(&delta).map(|(r, d)| r * d).collect();
    let mut is_center = vec![false; q];
    is_center[top] = true;
    match params.center_rule {
        DpcCenterRule::Threshold(t) => {
            let max = gamma.iter().copied().fold(0.0, f64::max);
            for i in 0..q {
                if gamma[i] >= t * max {
                    is_center[i] = true;
                }
            }
        }
        DpcCenterRule::TopFraction(f) => {
            let k = ((f * q as f64).ceil() as usize).clamp(1, q);
            let mut by_gamma: Vec<usize> = (0..q).filter(|&i| i != top).collect();
            by_gamma.sort_by(|&a, &b| gamma[b].total_cmp(&gamma[a]).then(a.cmp(&b)));
            for &i in by_gamma.iter().take(k - 1) {
                is_center[i] = true;
            }
        }
    }

    // Descending density: every non-center inherits from a denser point
    // that has already been labelled.
    let mut label = vec![usize::MAX; q];
    let mut clusters: Vec<Cluster> = Vec::new();
    for &i in &order {
        if is_center[i] {
            label[i] = clusters.len();
            clusters.push(Cluster {
                center: i,
                members: Vec::new(),
            });
        } else {
            label[i] = label[parent[i]];
        }
    }
    for (i, &l) in label.iter().enumerate() {
        clusters[l].members.push(i);
    }
    Ok(ClusterSet { clusters, d_c: None })
}

fn rows_f64(points: &TokenTensor) -> Vec<Vec<f64>> {
    points
        .rows()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect()
}

fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Member with the highest cosine similarity to the members' mean; ties go
/// to the lowest index.
pub fn representative_center(points: &TokenTensor, members: &[usize]) -> Result<usize> {
    if members.is_empty() {
        return Err(PactError::InvalidParameter("empty member list".into()));
    }
    if let Some(&m) = members.iter().find(|&&m| m >= points.n_tokens()) {
        return Err(PactError::Shape(format!("member {m} out of range")));
    }
    let width = points.row_len();
    let mut mean = vec![0.0; width];
    for &m in members {
        for (acc, &v) in mean.iter_mut().zip(points.row(m)) {
            *acc += v as f64;
        }
    }
    for v in &mut mean {
        *v /= members.len() as f64;
    }
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    let mut best = (f64::NEG_INFINITY, sorted[0]);
    for &m in &sorted {
        let row: Vec<f64> = points.row(m).iter().map(|&v| v as f64).collect();
        let sim = cosine_similarity(&row, &mean);
        if sim > best.0 {
            best = (sim, m);
        }
    }
    Ok(best.1)
}

/// Lloyd's k-means from `k` distinct seeded starting points.
///
/// Under the cosine metric the points are L2-normalised first. Empty
/// clusters keep their previous centroid and are dropped from the output.
/// Clusters are ordered by representative index.
pub fn kmeans_cluster(
    points: &TokenTensor,
    k: usize,
    max_iters: usize,
    seed: u64,
    metric: Metric,
) -> Result<ClusterSet> {
    let q = points.n_tokens();
    if q == 0 {
        return Err(PactError::EmptyTokenSet);
    }
    if k == 0 || k > q {
        return Err(PactError::InvalidParameter(format!(
            "k must be in 1..={q}, got {k}"
        )));
    }
    let mut rows = rows_f64(points);
    if metric == Metric::Cosine {
        for (i, row) in rows.iter_mut().enumerate() {
            let norm = squared_norm(points.row(i)).sqrt();
            if norm == 0.0 {
                return Err(PactError::UndefinedCosineDistance(i));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = rand::seq::index::sample(&mut rng, q, k).into_vec();
    init.sort_unstable();
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| rows[i].clone()).collect();

    let nearest = |row: &[f64], centroids: &[Vec<f64>]| -> usize {
        let mut best = (f64::INFINITY, 0);
        for (c, centroid) in centroids.iter().enumerate() {
            let d: f64 = row.iter().zip(centroid).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    };

    let mut assignment: Vec<usize> = rows.par_iter().map(|r| nearest(r, &centroids)).collect();
    for _ in 0..max_iters {
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = rows
                .iter()
                .zip(&assignment)
                .filter_map(|(r, &a)| (a == c).then_some(r))
                .collect();
            if members.is_empty() {
                continue;
            }
            for (d, v) in centroid.iter_mut().enumerate() {
                *v = members.iter().map(|r| r[d]).sum::<f64>() / members.len() as f64;
            }
        }
        let next: Vec<usize> = rows.par_iter().map(|r| nearest(r, &centroids)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignment.iter().enumerate() {
        groups[a].push(i);
    }
    let mut clusters = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|members| {
            Ok(Cluster {
                center: representative_center(points, &members)?,
                members,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    clusters.sort_by_key(|c| c.center);
    Ok(ClusterSet { clusters, d_c: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[[f32; 2]]) -> TokenTensor {
        TokenTensor::new("u", vec![rows.len(), 2], rows.concat()).unwrap()
    }

    fn blobs() -> (TokenTensor, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..8 {
            let t = i as f32 * 0.05;
            rows.push([t, 0.1 * t]);
            labels.push(0);
            rows.push([10.0 + t, 10.0 - t]);
            labels.push(1);
        }
        (pts(&rows), labels)
    }

    fn same_partition(set: &ClusterSet, labels: &[usize]) -> bool {
        set.clusters.iter().all(|c| {
            let l = labels[c.members[0]];
            c.members.iter().all(|&m| labels[m] == l)
        }) && set.len() == labels.iter().max().unwrap() + 1
    }

    fn dpc(d_c: f64, t: f64) -> DpcParams {
        DpcParams {
            d_c,
            center_rule: DpcCenterRule::Threshold(t),
            density: DpcDensity::Gaussian,
            metric: Metric::Euclidean,
        }
    }

    #[test]
    fn dpc_single_point() {
        let set = dpc_cluster(&pts(&[[1.0, 2.0]]), &dpc(0.5, 0.5)).unwrap();
        assert_eq!(set.centers(), vec![0]);
    }

    #[test]
    fn dpc_separates_blobs() {
        let (u, labels) = blobs();
        let set = dpc_cluster(&u, &dpc(1.0, 0.3)).unwrap();
        set.check_partition(u.n_tokens()).unwrap();
        assert!(same_partition(&set, &labels), "{set:?}");
    }

    #[test]
    fn dpc_chain_collapses_to_one_cluster() {
        // 30 points spaced 0.1 apart: each within d_c of the next, total length 2.9
        let rows: Vec<[f32; 2]> = (0..30).map(|i| [i as f32 * 0.1, 0.0]).collect();
        let u = pts(&rows);
        let set = dpc_cluster(&u, &dpc(0.25, 0.5)).unwrap();
        assert_eq!(set.len(), 1);
        let d = pairwise_distance(&u, Metric::Euclidean).unwrap();
        assert!(set.max_intra_distance(&d) > 0.25);
    }

    #[test]
    fn dpc_top_fraction_and_cutoff_density() {
        let (u, labels) = blobs();
        let params = DpcParams {
            d_c: 1.0,
            center_rule: DpcCenterRule::TopFraction(2.0 / 16.0),
            density: DpcDensity::CutoffCount,
            metric: Metric::Euclidean,
        };
        let set = dpc_cluster(&u, &params).unwrap();
        assert!(same_partition(&set, &labels), "{set:?}");
    }

    #[test]
    fn dpc_rejects_bad_params() {
        let u = pts(&[[0.0, 1.0]]);
        assert!(dpc_cluster(&u, &dpc(0.0, 0.5)).is_err());
        assert!(dpc_cluster(&u, &dpc(1.0, 0.0)).is_err());
        assert!(dpc_cluster(&pts(&[]), &dpc(1.0, 0.5)).is_err());
    }

    #[test]
    fn kmeans_k_equals_q() {
        let u = pts(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.3], [0.2, -1.0]]);
        let set = kmeans_cluster(&u, 4, 20, 7, Metric::Cosine).unwrap();
        assert_eq!(set.len(), 4);
        assert!(set.clusters.iter().all(|c| c.members == vec![c.center]));
    }

    #[test]
    fn kmeans_single_cluster() {
        let u = pts(&[[1.0, 0.0], [0.8, 0.6], [0.6, 0.8], [0.0, 1.0]]);
        let set = kmeans_cluster(&u, 1, 20, 0, Metric::Cosine).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.clusters[0].center, representative_center(&u, &[0, 1, 2, 3]).unwrap());
    }

    #[test]
    fn kmeans_two_blobs_and_determinism() {
        let (u, labels) = blobs();
        let a = kmeans_cluster(&u, 2, 50, 3, Metric::Euclidean).unwrap();
        assert!(same_partition(&a, &labels));
        assert_eq!(a, kmeans_cluster(&u, 2, 50, 3, Metric::Euclidean).unwrap());
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let u = pts(&[[1.0, 0.0]]);
        assert!(kmeans_cluster(&u, 0, 5, 0, Metric::Cosine).is_err());
        assert!(kmeans_cluster(&u, 2, 5, 0, Metric::Cosine).is_err());
    }

    #[test]
    fn representative_examples() {
        let u = pts(&[[1.0, 0.0], [0.0, 1.0], [0.9, 0.1]]);
        assert_eq!(representative_center(&u, &[1]).unwrap(), 1);
        assert_eq!(representative_center(&u, &[1, 0]).unwrap(), 0);
        assert!(representative_center(&u, &[]).is_err());
    }

    #[test]
    fn representative_matches_brute_force() {
        let u = pts(&[[0.3, 0.9], [1.0, 0.2], [0.5, 0.5]]);
        let mean = [0.6f64, 1.6 / 3.0];
        let sims: Vec<f64> = (0..3)
            .map(|i| {
                let r = u.row(i);
                let (a, b) = (r[0] as f64, r[1] as f64);
                (a * mean[0] + b * mean[1]) / ((a * a + b * b).sqrt() * (mean[0].powi(2) + mean[1].powi(2)).sqrt())
            })
            .collect();
        let want = (0..3).max_by(|&a, &b| sims[a].total_cmp(&sims[b])).unwrap();
        assert_eq!(representative_center(&u, &[0, 1, 2]).unwrap(), want);
    }
}
