//! Zero-dimensional persistence of Euclidean point clouds.
//!
//! Every point is a component born at radius 0. Two components merge when
//! disks of radius `r` around their closest points touch, i.e. at half the
//! shortest edge joining them, so the finite deaths are exactly the halved
//! edge weights of a minimum spanning tree. `r_f` is the last of them.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::homology::{DistanceMatrix, PersistenceDiagram};
use crate::{Error, Result};

/// `n` points in `R^dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be at least 1"));
        }
        if coords.is_empty() {
            return Err(Error::invalid("point cloud is empty"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::shape(format!(
                "{} coordinates are not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "point {} coordinate {}",
                i / dim,
                i % dim
            )));
        }
        Ok(PointCloud { dim, coords })
    }

    /// A cloud of scalars: one point per value on the real line.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), 1)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn distance_matrix(&self) -> DistanceMatrix {
        DistanceMatrix::euclidean(&self.coords, self.dim).expect("validated cloud")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroDimResult {
    /// The `n - 1` finite merge radii, ascending.
    pub deaths: Vec<f64>,
    /// Smallest radius at which the whole cloud is one component.
    pub r_f: f64,
}

impl ZeroDimResult {
    fn from_deaths(mut deaths: Vec<f64>) -> Self {
        deaths.sort_by(f64::total_cmp);
        let r_f = deaths.last().copied().unwrap_or(0.0);
        ZeroDimResult { deaths, r_f }
    }

    /// Birth–death points: every class is born at 0; one never dies.
    pub fn birth_death_points(&self) -> Vec<(f64, f64)> {
        self.deaths
            .iter()
            .map(|&d| (0.0, d))
            .chain(std::iter::once((0.0, f64::INFINITY)))
            .collect()
    }

    pub fn to_diagram(&self) -> PersistenceDiagram {
        PersistenceDiagram::from_triples(
            self.birth_death_points()
                .into_iter()
                .map(|(b, d)| (0, b, d)),
            0,
        )
    }
}

pub fn birth_death_points(result: &ZeroDimResult) -> Vec<(f64, f64)> {
    result.birth_death_points()
}

pub fn zero_persistence(cloud: &PointCloud) -> ZeroDimResult {
    if cloud.dim() == 1 {
        return sorted_gaps(cloud.coords());
    }
    let n = cloud.len();
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((
                crate::homology::distance_euclidean(cloud.point(i), cloud.point(j)),
                i,
                j,
            ));
        }
    }
    kruskal(n, edges)
}

/// Scalar fast path: on the line the minimum spanning tree links neighbours in
/// sorted order, so the deaths are the halved consecutive gaps.
pub fn zero_persistence_scalars(values: &[f64]) -> Result<ZeroDimResult> {
    if values.is_empty() {
        return Err(Error::invalid("point cloud is empty"));
    }
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("point {i}")));
    }
    Ok(sorted_gaps(values))
}

fn sorted_gaps(values: &[f64]) -> ZeroDimResult {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    ZeroDimResult::from_deaths(
        sorted
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / 2.0)
            .collect(),
    )
}

pub fn zero_persistence_from_distances(distances: &DistanceMatrix) -> Result<ZeroDimResult> {
    let n = distances.len();
    if n == 0 {
        return Err(Error::invalid("distance matrix is empty"));
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((distances.get(i, j), i, j));
        }
    }
    Ok(kruskal(n, edges))
}

fn kruskal(n: usize, mut edges: Vec<(f64, usize, usize)>) -> ZeroDimResult {
    edges.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let mut components = UnionFind::new(n);
    let mut deaths = Vec::with_capacity(n.saturating_sub(1));
    for (w, i, j) in edges {
        if components.union(i, j) {
            deaths.push(w / 2.0);
            if deaths.len() + 1 == n {
                break;
            }
        }
    }
    ZeroDimResult::from_deaths(deaths)
}

/// Disjoint sets with path compression and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] = self.rank[a].saturating_add(1);
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_of_three() {
        let r = zero_persistence(&PointCloud::from_scalars(&[0.0, 1.0, 3.0]).unwrap());
        assert_eq!(r.deaths, vec![0.5, 1.0]);
        assert_eq!(r.r_f, 1.0);
    }

    #[test]
    fn single_point_is_degenerate() {
        let r = zero_persistence(&PointCloud::from_scalars(&[4.2]).unwrap());
        assert!(r.deaths.is_empty());
        assert_eq!(r.r_f, 0.0);
        assert_eq!(r.birth_death_points(), vec![(0.0, f64::INFINITY)]);
    }

    #[test]
    fn invalid_clouds() {
        assert!(PointCloud::new(vec![], 1).is_err());
        assert!(PointCloud::new(vec![0.0, f64::NAN], 1).is_err());
        assert!(PointCloud::new(vec![0.0, 1.0, 2.0], 2).is_err());
        assert!(zero_persistence_scalars(&[]).is_err());
        assert!(zero_persistence_scalars(&[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn from_distances() {
        let dm = DistanceMatrix::from_rows(&[
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 2.0],
            vec![3.0, 2.0, 0.0],
        ])
        .unwrap();
        assert_eq!(
            zero_persistence_from_distances(&dm).unwrap().deaths,
            vec![0.5, 1.0]
        );

        let equal = DistanceMatrix::from_rows(&[
            vec![0.0, 2.0, 2.0],
            vec![2.0, 0.0, 2.0],
            vec![2.0, 2.0, 0.0],
        ])
        .unwrap();
        let r = zero_persistence_from_distances(&equal).unwrap();
        assert_eq!(r.deaths, vec![1.0, 1.0]);
        assert_eq!(r.r_f, 1.0);
    }

    #[test]
    fn duplicates_die_at_zero() {
        let r = zero_persistence(&PointCloud::new(vec![1.0, 1.0, 1.0, 1.0, 4.0, 5.0], 2).unwrap());
        assert_eq!(r.deaths.len(), 2);
        assert_eq!(r.deaths[0], 0.0);
    }

    #[test]
    fn birth_death_all_born_at_zero() {
        let r = ZeroDimResult::from_deaths(vec![1.0, 0.5]);
        assert_eq!(
            r.birth_death_points(),
            vec![(0.0, 0.5), (0.0, 1.0), (0.0, f64::INFINITY)]
        );
    }

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(4);
        assert!(uf.union(0, 1));
        assert!(uf.union(2, 3));
        assert!(!uf.union(1, 0));
        assert!(uf.union(1, 3));
        assert_eq!(uf.find(0), uf.find(2));
    }
}
