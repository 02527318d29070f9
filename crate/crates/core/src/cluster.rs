use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{PactError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: usize,
    /// Ascending member indices, including the center.
    pub members: Vec<usize>,
}

/// Clusters in center-selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    /// Cutoff the producer ran with, if it has one.
    pub d_c: Option<f64>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn centers(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.center).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.members.len()).collect()
    }

    pub fn member_count(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }

    /// Cluster position of every index in `0..n`, `None` when unassigned.
    pub fn labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut labels = vec![None; n];
        for (c, cluster) in self.clusters.iter().enumerate() {
            for &m in &cluster.members {
                if m < n {
                    labels[m] = Some(c);
                }
            }
        }
        labels
    }

    /// Rewrites every index through `map` (local index -> global index).
    pub fn remap(&self, map: &[usize]) -> Self {
        let clusters = self
            .clusters
            .iter()
            .map(|c| {
                let mut members: Vec<usize> = c.members.iter().map(|&m| map[m]).collect();
                members.sort_unstable();
                Cluster {
                    center: map[c.center],
                    members,
                }
            })
            .collect();
        Self {
            clusters,
            d_c: self.d_c,
        }
    }

    /// Checks that every index in `0..n` appears in exactly one member list
    /// and that each center belongs to its own cluster.
    pub fn check_partition(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for c in &self.clusters {
            if !c.members.contains(&c.center) {
                return Err(PactError::InvalidParameter(format!(
                    "center {} missing from its cluster",
                    c.center
                )));
            }
            for &m in &c.members {
                if m >= n || std::mem::replace(&mut seen[m], true) {
                    return Err(PactError::InvalidParameter(format!(
                        "index {m} out of range or assigned twice"
                    )));
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(PactError::InvalidParameter(format!("index {i} unassigned"))),
            None => Ok(()),
        }
    }

    /// Largest distance between two members of the same cluster.
    pub fn max_intra_distance(&self, dist: &DistanceMatrix) -> f64 {
        let mut max = 0.0f64;
        for c in &self.clusters {
            for (a, &i) in c.members.iter().enumerate() {
                for &j in &c.members[a + 1..] {
                    max = max.max(dist.get(i, j));
                }
            }
        }
        max
    }

    /// Largest member-to-own-center distance.
    pub fn max_member_center_distance(&self, dist: &DistanceMatrix) -> f64 {
        self.clusters
            .iter()
            .flat_map(|c| c.members.iter().map(move |&m| dist.get(m, c.center)))
            .fold(0.0, f64::max)
    }

    /// Smallest distance between two distinct centers, `+inf` with fewer than two.
    pub fn min_center_separation(&self, dist: &DistanceMatrix) -> f64 {
        let centers = self.centers();
        let mut min = f64::INFINITY;
        for (a, &i) in centers.iter().enumerate() {
            for &j in &centers[a + 1..] {
                min = min.min(dist.get(i, j));
            }
        }
        min
    }
}
