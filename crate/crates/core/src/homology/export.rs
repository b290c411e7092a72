use std::io::{self, Write};
use std::str::FromStr;

use super::PersistenceDiagram;
use crate::numfmt::format_sig;
use crate::Error;

pub const DIAGRAM_CSV_HEADER: &str = "dimension,birth,death,multiplicity";

/// Unit of reported filtration values. Internally everything is a radius
/// (half the pairwise distance).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeathScale {
    #[default]
    Radius,
    Distance,
}

impl DeathScale {
    pub fn factor(self) -> f64 {
        match self {
            DeathScale::Radius => 1.0,
            DeathScale::Distance => 2.0,
        }
    }
}

impl FromStr for DeathScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "radius" => Ok(DeathScale::Radius),
            "distance" => Ok(DeathScale::Distance),
            other => Err(Error::invalid(format!(
                "death scale must be `radius` or `distance`, got `{other}`"
            ))),
        }
    }
}

/// Writes the diagram as CSV with 9 significant digits and `inf` for
/// essential classes. Zero-persistence pairs are skipped unless
/// `include_zero` is set.
pub fn write_diagram_csv<W: Write>(
    diagram: &PersistenceDiagram,
    mut out: W,
    scale: DeathScale,
    include_zero: bool,
) -> io::Result<()> {
    writeln!(out, "{DIAGRAM_CSV_HEADER}")?;
    let k = scale.factor();
    for p in diagram.pairs() {
        if p.is_zero_persistence() && !include_zero {
            continue;
        }
        writeln!(
            out,
            "{},{},{},{}",
            p.dimension,
            format_sig(p.birth * k, 9),
            format_sig(p.death * k, 9),
            p.multiplicity
        )?;
    }
    Ok(())
}
