use crate::{Error, Result};

/// A validated symmetric distance matrix with zero diagonal and finite,
/// non-negative entries. Stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::shape(format!(
                "distance matrix of order {n} needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::invalid(format!(
                    "distance matrix diagonal ({i},{i}) is not zero"
                )));
            }
            for j in 0..n {
                let d = data[i * n + j];
                if !d.is_finite() {
                    return Err(Error::NonFinite(format!("distance matrix entry ({i},{j})")));
                }
                if d < 0.0 {
                    return Err(Error::invalid(format!("negative distance at ({i},{j})")));
                }
                if d != data[j * n + i] {
                    return Err(Error::invalid(format!(
                        "distance matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape("distance matrix rows must all have length n"));
        }
        Self::new(n, rows.concat())
    }

    /// Euclidean distances between the rows of an `n × dim` row-major matrix.
    pub fn euclidean(points: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(Error::shape(format!(
                "{} coordinates do not form points of dimension {dim}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "point {} coordinate {}",
                i / dim,
                i % dim
            )));
        }
        let n = points.len() / dim;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = euclidean(
                    &points[i * dim..(i + 1) * dim],
                    &points[j * dim..(j + 1) * dim],
                );
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
