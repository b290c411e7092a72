use std::cmp::Ordering;
use std::collections::HashMap;

use super::{DistanceMatrix, Simplex};
use crate::{Error, Result};

/// A simplicial complex together with an admissible order: every face precedes
/// its cofaces, values never decrease, and no simplex repeats.
#[derive(Debug, Clone)]
pub struct Filtration {
    simplices: Vec<Simplex>,
    values: Vec<f64>,
    index: HashMap<Simplex, usize>,
}

impl Filtration {
    pub fn new(entries: Vec<(Simplex, f64)>) -> Result<Self> {
        let mut simplices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (pos, (simplex, value)) in entries.into_iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invalid(format!(
                    "filtration value {value} of {simplex} must be finite and non-negative"
                )));
            }
            if let Some(&prev) = values.last() {
                if value < prev {
                    return Err(Error::invalid(format!(
                        "filtration values decrease at position {pos} ({prev} -> {value})"
                    )));
                }
            }
            for face in simplex.faces() {
                match index.get(&face) {
                    Some(&fi) if values[fi] <= value => {}
                    Some(_) => {
                        return Err(Error::invalid(format!(
                            "face {face} enters after {simplex}"
                        )))
                    }
                    None => {
                        return Err(Error::invalid(format!(
                            "face {face} of {simplex} does not precede it"
                        )))
                    }
                }
            }
            if index.insert(simplex.clone(), pos).is_some() {
                return Err(Error::invalid(format!("duplicate simplex {simplex}")));
            }
            simplices.push(simplex);
            values.push(value);
        }
        Ok(Filtration {
            simplices,
            values,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Simplex, f64)> {
        self.simplices.iter().zip(self.values.iter().copied())
    }

    pub fn position(&self, simplex: &Simplex) -> Option<usize> {
        self.index.get(simplex).copied()
    }

    /// Largest simplex dimension present, `None` for the empty filtration.
    pub fn max_dimension(&self) -> Option<usize> {
        self.simplices.iter().map(Simplex::dimension).max()
    }
}

/// Vietoris–Rips filtration: every vertex subset of at most `max_dim + 1`
/// points whose half-diameter is at most `max_radius`, entering at its
/// half-diameter. Order is `(value, dimension, vertices)`.
pub fn build_vr_filtration(
    distances: &DistanceMatrix,
    max_dim: usize,
    max_radius: f64,
) -> Result<Filtration> {
    if max_radius.is_nan() || max_radius < 0.0 {
        return Err(Error::invalid(format!(
            "max_radius must be >= 0, got {max_radius}"
        )));
    }
    let n = distances.len();
    let max_vertices = (max_dim + 1).min(n);
    let mut entries: Vec<(Simplex, f64)> = Vec::new();
    let mut stack: Vec<usize> = Vec::with_capacity(max_vertices);
    for v in 0..n {
        stack.push(v);
        expand(
            distances,
            max_vertices,
            max_radius,
            &mut stack,
            0.0,
            &mut entries,
        );
        stack.pop();
    }
    entries.sort_by(|(a, ra), (b, rb)| {
        ra.total_cmp(rb)
            .then(a.dimension().cmp(&b.dimension()))
            .then_with(|| a.vertices().cmp(b.vertices()))
    });
    Filtration::new(entries)
}

fn expand(
    distances: &DistanceMatrix,
    max_vertices: usize,
    max_radius: f64,
    stack: &mut Vec<usize>,
    radius: f64,
    out: &mut Vec<(Simplex, f64)>,
) {
    out.push((Simplex::from_sorted(stack.clone()), radius));
    if stack.len() == max_vertices {
        return;
    }
    let last = *stack.last().expect("non-empty");
    for next in (last + 1)..distances.len() {
        let widest = stack
            .iter()
            .map(|&u| distances.get(u, next))
            .fold(0.0_f64, f64::max);
        let r = radius.max(widest / 2.0);
        if r.partial_cmp(&max_radius) == Some(Ordering::Greater) {
            continue;
        }
        stack.push(next);
        expand(distances, max_vertices, max_radius, stack, r, out);
        stack.pop();
    }
}
