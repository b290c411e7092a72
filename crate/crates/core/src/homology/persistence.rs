use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DeathScale, Filtration};

/// A point of a persistence diagram. `death` is `f64::INFINITY` for classes
/// that never die.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub dimension: usize,
    pub birth: f64,
    pub death: f64,
    pub multiplicity: usize,
}

impl PersistencePair {
    pub fn is_essential(&self) -> bool {
        self.death.is_infinite()
    }

    /// Born and killed by simplices entering at the same value. Kept so that
    /// Betti and Euler bookkeeping stays exact; hidden from rendering.
    pub fn is_zero_persistence(&self) -> bool {
        self.death == self.birth
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pairs: Vec<PersistencePair>,
    max_dimension: usize,
}

impl PersistenceDiagram {
    /// Builds a diagram from unmerged `(dimension, birth, death)` triples.
    pub fn from_triples(
        triples: impl IntoIterator<Item = (usize, f64, f64)>,
        max_dimension: usize,
    ) -> Self {
        let mut merged: BTreeMap<(usize, u64, u64), PersistencePair> = BTreeMap::new();
        for (dimension, birth, death) in triples {
            merged
                .entry((dimension, ordered_bits(birth), ordered_bits(death)))
                .and_modify(|p| p.multiplicity += 1)
                .or_insert(PersistencePair {
                    dimension,
                    birth,
                    death,
                    multiplicity: 1,
                });
        }
        PersistenceDiagram {
            pairs: merged.into_values().collect(),
            max_dimension,
        }
    }

    /// All pairs including zero-persistence ones, sorted by
    /// `(dimension, birth, death)`.
    pub fn pairs(&self) -> &[PersistencePair] {
        &self.pairs
    }

    /// Pairs shown when rendering: zero-persistence pairs are omitted.
    pub fn visible_pairs(&self) -> impl Iterator<Item = &PersistencePair> {
        self.pairs.iter().filter(|p| !p.is_zero_persistence())
    }

    pub fn max_dimension(&self) -> usize {
        self.max_dimension
    }

    pub fn in_dimension(&self, p: usize) -> impl Iterator<Item = &PersistencePair> {
        self.pairs.iter().filter(move |x| x.dimension == p)
    }

    /// Finite death values of dimension `p`, one entry per unit of
    /// multiplicity, ascending.
    pub fn finite_deaths(&self, p: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .in_dimension(p)
            .filter(|x| !x.is_essential())
            .flat_map(|x| std::iter::repeat_n(x.death, x.multiplicity))
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    /// Number of `p`-classes born at or before `born_by` that are still alive
    /// after `alive_after`. With `born_by == alive_after` this is the ordinary
    /// Betti number of the complex at that value.
    pub fn persistent_betti(&self, p: usize, born_by: f64, alive_after: f64) -> usize {
        self.in_dimension(p)
            .filter(|x| x.birth <= born_by && x.death > alive_after)
            .map(|x| x.multiplicity)
            .sum()
    }

    /// Betti numbers `β_0..=β_max` of the sublevel complex at `value`.
    pub fn betti_at(&self, value: f64) -> Vec<usize> {
        (0..=self.max_dimension)
            .map(|p| self.persistent_betti(p, value, value))
            .collect()
    }

    pub fn scaled(&self, scale: DeathScale) -> PersistenceDiagram {
        let k = scale.factor();
        PersistenceDiagram {
            pairs: self
                .pairs
                .iter()
                .map(|p| PersistencePair {
                    birth: p.birth * k,
                    death: p.death * k,
                    ..*p
                })
                .collect(),
            max_dimension: self.max_dimension,
        }
    }
}

fn ordered_bits(x: f64) -> u64 {
    // Monotone map from f64 to u64 so BTreeMap keys sort numerically.
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Standard left-to-right column reduction of the full boundary matrix, with
/// the lowest non-zero row as pivot.
pub fn compute_persistence(filtration: &Filtration) -> PersistenceDiagram {
    let n = filtration.len();
    let simplices = filtration.simplices();
    let values = filtration.values();

    let mut reduced: Vec<Vec<usize>> = simplices
        .iter()
        .map(|s| {
            let mut col: Vec<usize> = s
                .faces()
                .map(|f| filtration.position(&f).expect("closed under faces"))
                .collect();
            col.sort_unstable();
            col
        })
        .collect();

    let mut pivot_owner: Vec<Option<usize>> = vec![None; n];
    let mut killed = vec![false; n];
    let mut triples = Vec::new();

    for j in 0..n {
        let mut col = std::mem::take(&mut reduced[j]);
        while let Some(&low) = col.last() {
            match pivot_owner[low] {
                Some(k) => col = symmetric_difference(&col, &reduced[k]),
                None => break,
            }
        }
        if let Some(&low) = col.last() {
            pivot_owner[low] = Some(j);
            killed[low] = true;
            triples.push((simplices[low].dimension(), values[low], values[j]));
        }
        reduced[j] = col;
    }

    for i in 0..n {
        if reduced[i].is_empty() && !killed[i] {
            triples.push((simplices[i].dimension(), values[i], f64::INFINITY));
        }
    }

    let max_dimension = filtration.max_dimension().unwrap_or(0);
    PersistenceDiagram::from_triples(triples, max_dimension)
}

/// Betti numbers of the sublevel complex at `at_value`, read off the diagram.
pub fn betti_numbers(filtration: &Filtration, at_value: f64) -> Vec<usize> {
    compute_persistence(filtration).betti_at(at_value)
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
