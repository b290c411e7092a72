//! Exact persistent homology over Z/2 for small simplicial filtrations.
//!
//! Filtration values follow the radius convention: a simplex enters the
//! Vietoris–Rips filtration at half its diameter. [`DeathScale::Distance`]
//! converts reported values to the distance convention on export.

mod boundary;
mod distance;
mod export;
mod filtration;
mod persistence;
mod simplex;

pub use boundary::{boundary_matrix, BoundaryMatrix};
pub(crate) use distance::euclidean as distance_euclidean;
pub use distance::DistanceMatrix;
pub use export::{write_diagram_csv, DeathScale, DIAGRAM_CSV_HEADER};
pub use filtration::{build_vr_filtration, Filtration};
pub use persistence::{betti_numbers, compute_persistence, PersistenceDiagram, PersistencePair};
pub use simplex::Simplex;
