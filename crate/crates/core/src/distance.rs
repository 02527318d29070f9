use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PactError, Result};
use crate::numeric::{dot, squared_norm};
use crate::tensor::TokenTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// `1 - cos(u, v)`, in `[0, 2]`.
    #[default]
    Cosine,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = PactError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(PactError::InvalidParameter(format!("unknown metric {other:?}"))),
        }
    }
}

/// Dense symmetric distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds from a full row-major matrix, checking symmetry, zero diagonal
    /// and finiteness.
    pub fn from_rows(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(PactError::Shape(format!(
                "{} values for a {n}x{n} distance matrix",
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(PactError::InvalidParameter(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = values[i * n + j];
                if !v.is_finite() || v < 0.0 || v != values[j * n + i] {
                    return Err(PactError::InvalidParameter(format!(
                        "distance ({i}, {j}) is not a finite symmetric non-negative value"
                    )));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Restriction to `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let m = indices.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in indices {
            let row = self.row(i);
            values.extend(indices.iter().map(|&j| row[j]));
        }
        Self { n: m, values }
    }

    /// Largest off-diagonal entry, 0 for fewer than two points.
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Pairwise distances between token rows (trailing axes flattened).
pub fn pairwise_distance(points: &TokenTensor, metric: Metric) -> Result<DistanceMatrix> {
    let n = points.n_tokens();
    let rows: Vec<&[f32]> = points.rows().collect();
    let sq: Vec<f64> = rows.iter().map(|r| squared_norm(r)).collect();
    if metric == Metric::Cosine {
        if let Some(i) = sq.iter().position(|&s| s == 0.0) {
            return Err(PactError::UndefinedCosineDistance(i));
        }
    }

    // Each entry is computed once for i < j and mirrored, so the matrix is
    // exactly symmetric. Rows are independent; the result does not depend on
    // the thread count.
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| match metric {
                    Metric::Cosine => {
                        // sqrt(a*a) == a exactly, so identical rows land on 0
                        let cos = dot(rows[i], rows[j]) / (sq[i] * sq[j]).sqrt();
                        (1.0 - cos).clamp(0.0, 2.0)
                    }
                    Metric::Euclidean => rows[i]
                        .iter()
                        .zip(rows[j])
                        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                        .sum::<f64>()
                        .sqrt(),
                })
                .collect()
        })
        .collect();

    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, values })
}
