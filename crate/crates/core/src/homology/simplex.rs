use std::fmt;

use crate::{Error, Result};

/// An abstract simplex: a strictly ascending, non-empty list of vertex ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Simplex(Vec<usize>);

impl Simplex {
    pub fn new(vertices: Vec<usize>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::invalid("simplex must have at least one vertex"));
        }
        if vertices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "simplex vertices must be strictly ascending, got {vertices:?}"
            )));
        }
        Ok(Simplex(vertices))
    }

    pub fn vertex(v: usize) -> Self {
        Simplex(vec![v])
    }

    pub(crate) fn from_sorted(vertices: Vec<usize>) -> Self {
        debug_assert!(!vertices.is_empty() && vertices.windows(2).all(|w| w[0] < w[1]));
        Simplex(vertices)
    }

    pub fn vertices(&self) -> &[usize] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len() - 1
    }

    /// The codimension-one faces, each obtained by omitting one vertex. Empty
    /// for a vertex.
    pub fn faces(&self) -> impl Iterator<Item = Simplex> + '_ {
        let n = if self.0.len() > 1 { self.0.len() } else { 0 };
        (0..n).map(move |skip| {
            Simplex(
                self.0
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect(),
            )
        })
    }
}

impl fmt::Display for Simplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "v{v}")?;
        }
        write!(f, "]")
    }
}
