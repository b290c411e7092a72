//! Neuron importance for transformer encoders via zero-dimensional persistent
//! homology, and structured pruning driven by it.
//!
//! The pipeline, stage by stage:
//!
//! 1. [`encoder`] runs a corpus through a checkpoint and captures the
//!    `[CLS]`-position output of every component of every layer.
//! 2. [`activations`] treats each neuron's outputs as a 1-D point cloud and
//!    scores it with `r_f`, the radius at which all connected components of the
//!    growing Vietoris–Rips complex have merged ([`zero_ph`]).
//! 3. [`planner`] turns the per-component `r_f` distributions into a
//!    [`planner::PrunePlan`] at the P30/P50/P70 levels.
//! 4. [`surgery`] slices the checkpoint and folds the pruned neurons'
//!    `mean + std` into the consuming layer's bias.
//!
//! [`homology`] is an exact, arbitrary-dimension persistence engine kept as the
//! reference for the fast zero-dimensional path.

pub mod activations;
pub mod encoder;
mod error;
pub mod homology;
pub mod numfmt;
pub mod planner;
pub mod surgery;
pub mod tensor_store;
pub mod zero_ph;

pub use error::{Error, Result};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the six affine sub-blocks of an encoder layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Component {
    Q,
    K,
    V,
    AttOutput,
    Intermediate,
    Output,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::Q,
        Component::K,
        Component::V,
        Component::AttOutput,
        Component::Intermediate,
        Component::Output,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Q => "Q",
            Component::K => "K",
            Component::V => "V",
            Component::AttOutput => "AttOutput",
            Component::Intermediate => "Intermediate",
            Component::Output => "Output",
        }
    }

    /// Components whose output is added to the residual stream before a
    /// LayerNorm; their width is tied to the hidden size and cannot shrink.
    pub fn is_protected(self) -> bool {
        matches!(self, Component::AttOutput | Component::Output)
    }

    pub fn is_attention(self) -> bool {
        matches!(self, Component::Q | Component::K | Component::V)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown component `{s}`")))
    }
}
