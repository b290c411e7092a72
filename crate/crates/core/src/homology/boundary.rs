use super::Filtration;
use crate::{Error, Result};

/// Sparse matrix over Z/2 stored by column; each column holds the ascending
/// row indices of its non-zero entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMatrix {
    pub rows: usize,
    pub columns: Vec<Vec<usize>>,
}

impl BoundaryMatrix {
    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    /// `self · rhs` over Z/2.
    pub fn compose(&self, rhs: &BoundaryMatrix) -> Result<BoundaryMatrix> {
        if self.cols() != rhs.rows {
            return Err(Error::shape(format!(
                "cannot compose {}x{} with {}x{}",
                self.rows,
                self.cols(),
                rhs.rows,
                rhs.cols()
            )));
        }
        let columns = rhs
            .columns
            .iter()
            .map(|col| {
                let mut acc = vec![false; self.rows];
                for &k in col {
                    for &r in &self.columns[k] {
                        acc[r] ^= true;
                    }
                }
                acc.iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(|(r, _)| r)
                    .collect()
            })
            .collect();
        Ok(BoundaryMatrix {
            rows: self.rows,
            columns,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.columns.iter().all(Vec::is_empty)
    }
}

/// The boundary map from `p`-chains to `(p-1)`-chains. Columns follow the
/// filtration order of the `p`-simplices; rows follow the filtration order of
/// the `(p-1)`-simplices.
pub fn boundary_matrix(filtration: &Filtration, p: usize) -> Result<BoundaryMatrix> {
    let top = filtration.max_dimension().unwrap_or(0);
    if p == 0 || p > top {
        return Err(Error::invalid(format!(
            "boundary dimension {p} outside 1..={top}"
        )));
    }
    let mut row_of = vec![usize::MAX; filtration.len()];
    let mut rows = 0;
    for (pos, s) in filtration.simplices().iter().enumerate() {
        if s.dimension() == p - 1 {
            row_of[pos] = rows;
            rows += 1;
        }
    }
    let columns = filtration
        .simplices()
        .iter()
        .filter(|s| s.dimension() == p)
        .map(|s| {
            let mut col: Vec<usize> = s
                .faces()
                .map(|face| row_of[filtration.position(&face).expect("closed under faces")])
                .collect();
            col.sort_unstable();
            col
        })
        .collect();
    Ok(BoundaryMatrix { rows, columns })
}
