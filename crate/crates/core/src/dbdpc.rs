//! Distance-bounded density peak clustering.
//!
//! Points are visited in descending density; a point becomes a center when it
//! is farther than `d_c` from every center chosen before it, and every point
//! then joins its nearest center. The result guarantees
//!
//! * every member lies within `d_c` of its center,
//! * distinct centers are more than `d_c` apart,
//! * under the cosine metric with `d_c <= 1`, two members of one cluster are
//!   at most `2 d_c (2 - d_c)` apart.
//!
//! Center selection comes in two equivalent forms. The iterative form is the
//! sequential scan above. The recursive form replaces densities by their rank,
//! takes every point with no higher-ranked neighbour within `d_c` as a center
//! in one parallel sweep, drops everything within `d_c` of those centers, and
//! repeats on the rest until a sweep yields fewer than `fallback_threshold`
//! centers, at which point it finishes with the sequential scan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, ClusterSet};
use crate::distance::{pairwise_distance, DistanceMatrix, Metric};
use crate::error::{PactError, Result};
use crate::numeric::ordered_sum;
use crate::tensor::TokenTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterSelection {
    #[default]
    Recursive,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbdpcParams {
    pub d_c: f64,
    pub d_n: f64,
    pub metric: Metric,
    pub fallback_threshold: usize,
    pub selection: CenterSelection,
}

impl Default for DbdpcParams {
    fn default() -> Self {
        Self {
            d_c: 0.21,
            d_n: 2.0,
            metric: Metric::Cosine,
            fallback_threshold: 10,
            selection: CenterSelection::Recursive,
        }
    }
}

impl DbdpcParams {
    pub fn validate(&self) -> Result<()> {
        // d_c = 0 is accepted: it degenerates to "every distinct point is a center".
        if !(self.d_c >= 0.0 && self.d_c.is_finite()) {
            return Err(PactError::InvalidParameter(format!(
                "cutoff distance must be >= 0, got {}",
                self.d_c
            )));
        }
        if !(self.d_n > 0.0 && self.d_n.is_finite()) {
            return Err(PactError::InvalidParameter(format!(
                "normalization factor must be > 0, got {}",
                self.d_n
            )));
        }
        if self.fallback_threshold == 0 {
            return Err(PactError::InvalidParameter(
                "fallback threshold must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// `rho_i = sum_j exp(-d_ij / d_n)`, self term included.
pub fn local_density(dist: &DistanceMatrix, d_n: f64) -> Vec<f64> {
    (0..dist.len())
        .into_par_iter()
        .map(|i| {
            let mut terms: Vec<f64> = dist.row(i).iter().map(|&d| (-d / d_n).exp()).collect();
            ordered_sum(&mut terms)
        })
        .collect()
}

/// Indices by descending density, ties by ascending index.
pub fn density_order(rho: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]).then(a.cmp(&b)));
    order
}

fn check_inputs(dist: &DistanceMatrix, rho: &[f64]) -> Result<()> {
    if rho.is_empty() {
        return Err(PactError::EmptyTokenSet);
    }
    if rho.len() != dist.len() {
        return Err(PactError::Shape(format!(
            "{} densities for {} points",
            rho.len(),
            dist.len()
        )));
    }
    if let Some(i) = rho.iter().position(|r| !r.is_finite()) {
        return Err(PactError::InvalidParameter(format!("density {i} is not finite")));
    }
    Ok(())
}

/// Appends to `centers` every candidate (in the given order) that is farther
/// than `d_c` from all centers selected so far.
fn scan_candidates(
    dist: &DistanceMatrix,
    candidates: &[usize],
    d_c: f64,
    mut centers: Vec<usize>,
) -> Vec<usize> {
    for &i in candidates {
        if centers.iter().all(|&s| dist.get(i, s) > d_c) {
            centers.push(i);
        }
    }
    centers
}

/// Sequential center selection in density order. Output is in selection order.
pub fn select_centers_iterative(dist: &DistanceMatrix, rho: &[f64], d_c: f64) -> Result<Vec<usize>> {
    check_inputs(dist, rho)?;
    Ok(scan_candidates(dist, &density_order(rho), d_c, Vec::new()))
}

/// Recursive center selection. Returns exactly the centers of
/// [`select_centers_iterative`], in the same (selection) order.
pub fn select_centers_recursive(
    dist: &DistanceMatrix,
    rho: &[f64],
    d_c: f64,
    fallback_threshold: usize,
) -> Result<Vec<usize>> {
    check_inputs(dist, rho)?;
    let order = density_order(rho);
    let mut rank = vec![0usize; order.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    // Kept sorted by rank throughout.
    let mut remaining = order;
    let mut centers = Vec::new();
    while !remaining.is_empty() {
        // delta_i > d_c  <=>  no higher-ranked remaining point within d_c.
        // The top remaining point has delta = +inf.
        let is_new: Vec<bool> = (0..remaining.len())
            .into_par_iter()
            .map(|p| {
                let i = remaining[p];
                remaining[..p].iter().all(|&j| dist.get(i, j) > d_c)
            })
            .collect();
        let new: Vec<usize> = remaining
            .iter()
            .zip(&is_new)
            .filter_map(|(&i, &n)| n.then_some(i))
            .collect();

        let keep: Vec<bool> = remaining
            .par_iter()
            .zip(&is_new)
            .map(|(&k, &n)| !n && new.iter().all(|&c| dist.get(c, k) > d_c))
            .collect();
        remaining = remaining
            .iter()
            .zip(&keep)
            .filter_map(|(&k, &keep)| keep.then_some(k))
            .collect();

        let found = new.len();
        centers.extend(new);
        if found < fallback_threshold {
            centers = scan_candidates(dist, &remaining, d_c, centers);
            break;
        }
    }
    centers.sort_by_key(|&c| rank[c]);
    Ok(centers)
}

/// Assigns every point to its nearest center, ties to the earliest center.
pub fn assign_to_centers(dist: &DistanceMatrix, centers: &[usize]) -> Result<ClusterSet> {
    if centers.is_empty() {
        return Err(PactError::InvalidParameter("no cluster centers".into()));
    }
    if let Some(&c) = centers.iter().find(|&&c| c >= dist.len()) {
        return Err(PactError::Shape(format!(
            "center {c} out of range for {} points",
            dist.len()
        )));
    }
    let mut center_slot = vec![None; dist.len()];
    for (slot, &c) in centers.iter().enumerate() {
        center_slot[c].get_or_insert(slot);
    }

    let assignment: Vec<usize> = (0..dist.len())
        .into_par_iter()
        .map(|i| {
            if let Some(slot) = center_slot[i] {
                return slot;
            }
            let mut best = 0;
            for (slot, &c) in centers.iter().enumerate().skip(1) {
                if dist.get(i, c) < dist.get(i, centers[best]) {
                    best = slot;
                }
            }
            best
        })
        .collect();

    let mut clusters: Vec<Cluster> = centers
        .iter()
        .map(|&center| Cluster {
            center,
            members: Vec::new(),
        })
        .collect();
    for (i, slot) in assignment.into_iter().enumerate() {
        clusters[slot].members.push(i);
    }
    Ok(ClusterSet {
        clusters,
        d_c: None,
    })
}

/// Runs density, center selection and assignment on a precomputed matrix.
pub fn cluster_distances(dist: &DistanceMatrix, params: &DbdpcParams) -> Result<ClusterSet> {
    params.validate()?;
    if dist.is_empty() {
        return Err(PactError::EmptyTokenSet);
    }
    let rho = local_density(dist, params.d_n);
    let centers = match params.selection {
        CenterSelection::Recursive => {
            select_centers_recursive(dist, &rho, params.d_c, params.fallback_threshold)?
        }
        CenterSelection::Iterative => select_centers_iterative(dist, &rho, params.d_c)?,
    };
    let mut set = assign_to_centers(dist, &centers)?;
    set.d_c = Some(params.d_c);
    Ok(set)
}

/// Clusters the rows of `points` (trailing axes flattened).
pub fn dbdpc_cluster(points: &TokenTensor, params: &DbdpcParams) -> Result<ClusterSet> {
    params.validate()?;
    if points.n_tokens() == 0 {
        return Err(PactError::EmptyTokenSet);
    }
    let dist = pairwise_distance(points, params.metric)?;
    cluster_distances(&dist, params)
}
