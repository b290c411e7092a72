//! Pruning levels, layer assignments and concrete prune plans.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activations::{NeuronScore, RfDistribution};
use crate::encoder::EncoderConfig;
use crate::{Component, Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub enum Level {
    #[default]
    None,
    P30,
    P50,
    P70,
}

impl Level {
    pub fn percent(self) -> Option<u32> {
        match self {
            Level::None => None,
            Level::P30 => Some(30),
            Level::P50 => Some(50),
            Level::P70 => Some(70),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::None => "None",
            Level::P30 => "P30",
            Level::P50 => "P50",
            Level::P70 => "P70",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Level::None, Level::P30, Level::P50, Level::P70]
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "level must be one of None, P30, P50, P70, got `{s}`"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Base,
    Large,
}

impl Arch {
    pub fn config(self) -> EncoderConfig {
        match self {
            Arch::Base => EncoderConfig::bert_base(),
            Arch::Large => EncoderConfig::bert_large(),
        }
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Arch::Base),
            "large" => Ok(Arch::Large),
            _ => Err(Error::invalid(format!(
                "architecture must be `base` or `large`, got `{s}`"
            ))),
        }
    }
}

/// One row of an assignment file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub layer: usize,
    pub component: Component,
    pub level: Level,
}

/// Pruning level per `(layer, component)`; anything unset is `None`.
///
/// Protected components and layers 1–2 can only be `None`, and Q and K must
/// carry the same level in every layer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LevelAssignment {
    levels: BTreeMap<(usize, Component), Level>,
}

impl LevelAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, layer: usize, component: Component, level: Level) -> Result<()> {
        if layer == 0 {
            return Err(Error::invalid("layers are numbered from 1"));
        }
        if level == Level::None {
            self.levels.remove(&(layer, component));
            return Ok(());
        }
        if component.is_protected() {
            return Err(Error::invalid(format!(
                "{component} feeds a LayerNorm and cannot be pruned"
            )));
        }
        if layer <= 2 {
            return Err(Error::invalid(format!(
                "layer {layer} cannot be pruned; pruning starts at layer 3"
            )));
        }
        self.levels.insert((layer, component), level);
        Ok(())
    }

    /// Sets Q and K together.
    pub fn set_qk(&mut self, layer: usize, level: Level) -> Result<()> {
        self.set(layer, Component::Q, level)?;
        self.set(layer, Component::K, level)
    }

    pub fn level(&self, layer: usize, component: Component) -> Level {
        self.levels
            .get(&(layer, component))
            .copied()
            .unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        for &(layer, c) in self.levels.keys() {
            if matches!(c, Component::Q | Component::K)
                && self.level(layer, Component::Q) != self.level(layer, Component::K)
            {
                return Err(Error::invalid(format!(
                    "layer {layer}: Q and K must share a pruning level"
                )));
            }
        }
        Ok(())
    }

    /// Non-`None` entries in `(layer, component)` order.
    pub fn entries(&self) -> Vec<AssignmentEntry> {
        self.levels
            .iter()
            .map(|(&(layer, component), &level)| AssignmentEntry {
                layer,
                component,
                level,
            })
            .collect()
    }

    pub fn from_entries(entries: &[AssignmentEntry]) -> Result<Self> {
        let mut out = LevelAssignment::new();
        let mut seen = BTreeMap::new();
        for e in entries {
            if let Some(prev) = seen.insert((e.layer, e.component), e.level) {
                if prev != e.level {
                    return Err(Error::invalid(format!(
                        "layer {} {} assigned both {prev} and {}",
                        e.layer, e.component, e.level
                    )));
                }
            }
            out.set(e.layer, e.component, e.level)?;
        }
        out.validate()?;
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<AssignmentEntry> = serde_json::from_str(text)?;
        Self::from_entries(&entries)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries())?)
    }

    /// Every prunable component of layers `3..=layers` at `level`.
    pub fn uniform(layers: usize, level: Level) -> Self {
        let mut out = LevelAssignment::new();
        for layer in 3..=layers {
            for c in [
                Component::Q,
                Component::K,
                Component::V,
                Component::Intermediate,
            ] {
                out.set(layer, c, level).expect("prunable component");
            }
        }
        out
    }

    pub fn max_layer(&self) -> usize {
        self.levels.keys().map(|(l, _)| *l).max().unwrap_or(0)
    }
}

fn ranges(spec: &[(usize, usize)]) -> impl Iterator<Item = usize> + '_ {
    spec.iter().flat_map(|&(a, b)| a..=b)
}

/// The published level tables for the Base and Large architectures.
pub fn default_assignment(arch: Arch) -> LevelAssignment {
    type Row<'a> = [&'a [(usize, usize)]; 3];
    let (qk, v, inter): (Row, Row, Row) = match arch {
        Arch::Base => (
            [&[(3, 4), (11, 12)], &[(8, 10)], &[(5, 7)]],
            [&[(4, 4)], &[(3, 3), (11, 12)], &[(5, 10)]],
            [&[(3, 4), (10, 12)], &[(5, 9)], &[]],
        ),
        Arch::Large => (
            [
                &[(11, 12), (14, 17)],
                &[(4, 10), (18, 18)],
                &[(3, 3), (13, 13), (19, 24)],
            ],
            [
                &[],
                &[(4, 4), (9, 12), (14, 17)],
                &[(3, 3), (5, 8), (13, 13), (18, 24)],
            ],
            [
                &[(3, 4), (8, 16), (18, 18)],
                &[(5, 7), (17, 17), (19, 24)],
                &[],
            ],
        ),
    };
    let levels = [Level::P30, Level::P50, Level::P70];
    let mut out = LevelAssignment::new();
    for (i, level) in levels.into_iter().enumerate() {
        for layer in ranges(qk[i]) {
            out.set_qk(layer, level).expect("table entry");
        }
        for layer in ranges(v[i]) {
            out.set(layer, Component::V, level).expect("table entry");
        }
        for layer in ranges(inter[i]) {
            out.set(layer, Component::Intermediate, level)
                .expect("table entry");
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPlan {
    pub layer: usize,
    pub component: Component,
    pub level: Level,
    pub width: usize,
    pub retained_count: usize,
    pub pruned_indices: Vec<usize>,
    /// `mean + std` of each pruned neuron's outputs.
    pub compensation: BTreeMap<usize, f64>,
}

impl ComponentPlan {
    pub fn retained_indices(&self) -> Vec<usize> {
        let mut pruned = self.pruned_indices.iter().peekable();
        (0..self.width)
            .filter(|&j| {
                if pruned.peek() == Some(&&j) {
                    pruned.next();
                    false
                } else {
                    true
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub original: usize,
    pub pruned: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunePlan {
    pub heads: usize,
    pub global_percentile: bool,
    pub components: Vec<ComponentPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ParameterReport>,
}

impl PrunePlan {
    pub fn empty(heads: usize) -> Self {
        PrunePlan {
            heads,
            global_percentile: false,
            components: Vec::new(),
            report: None,
        }
    }

    pub fn get(&self, layer: usize, component: Component) -> Option<&ComponentPlan> {
        self.components
            .iter()
            .find(|c| c.layer == layer && c.component == component)
    }

    pub fn pruned_count(&self, layer: usize, component: Component) -> usize {
        self.get(layer, component)
            .map_or(0, |c| c.pruned_indices.len())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: PrunePlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    /// Checks the structural invariants a plan must satisfy before surgery.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for c in &self.components {
            let at = format!("layer {} {}", c.layer, c.component);
            if seen.insert((c.layer, c.component), c).is_some() {
                return Err(Error::invalid(format!("{at} appears twice in the plan")));
            }
            if c.pruned_indices.is_empty() {
                continue;
            }
            if c.component.is_protected() {
                return Err(Error::invalid(format!(
                    "{at}: protected component cannot be pruned"
                )));
            }
            if c.layer <= 2 {
                return Err(Error::invalid(format!(
                    "{at}: layers 1 and 2 cannot be pruned"
                )));
            }
            if c.pruned_indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "{at}: pruned indices must be strictly ascending"
                )));
            }
            if c.pruned_indices.last().is_some_and(|&j| j >= c.width) {
                return Err(Error::invalid(format!(
                    "{at}: pruned index out of range for width {}",
                    c.width
                )));
            }
            if c.retained_count + c.pruned_indices.len() != c.width {
                return Err(Error::invalid(format!("{at}: retained + pruned != width")));
            }
            if c.compensation.keys().ne(c.pruned_indices.iter()) {
                return Err(Error::invalid(format!(
                    "{at}: compensation keys differ from pruned indices"
                )));
            }
            if c.compensation.values().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{at} compensation")));
            }
            if c.component.is_attention() && !self.global_percentile {
                let hd = head_dim(c.width, self.heads, &at)?;
                let per_head: Vec<usize> = (0..self.heads)
                    .map(|h| c.pruned_indices.iter().filter(|&&j| j / hd == h).count())
                    .collect();
                if per_head.windows(2).any(|w| w[0] != w[1]) {
                    return Err(Error::invalid(format!(
                        "{at}: heads lose unequal neuron counts {per_head:?}"
                    )));
                }
            }
        }
        let layers: std::collections::BTreeSet<usize> =
            self.components.iter().map(|c| c.layer).collect();
        for layer in layers {
            let q = seen
                .get(&(layer, Component::Q))
                .map(|c| &c.pruned_indices[..])
                .unwrap_or(&[]);
            let k = seen
                .get(&(layer, Component::K))
                .map(|c| &c.pruned_indices[..])
                .unwrap_or(&[]);
            if q != k {
                return Err(Error::invalid(format!(
                    "layer {layer}: Q and K prune different neurons"
                )));
            }
        }
        Ok(())
    }

    /// Replaces compensation constants with `mean + std` from `scores`, e.g.
    /// from an analysis taken at a different capture point.
    pub fn set_compensation(&mut self, scores: &[NeuronScore]) -> Result<()> {
        let lookup: BTreeMap<(usize, Component, usize), f64> = scores
            .iter()
            .map(|s| ((s.layer, s.component, s.neuron), s.compensation()))
            .collect();
        for c in &mut self.components {
            for &j in &c.pruned_indices {
                let v = lookup.get(&(c.layer, c.component, j)).ok_or_else(|| {
                    Error::Missing(format!(
                        "compensation score for layer {} {} neuron {j}",
                        c.layer, c.component
                    ))
                })?;
                c.compensation.insert(j, *v);
            }
        }
        Ok(())
    }
}

fn head_dim(width: usize, heads: usize, at: &str) -> Result<usize> {
    if heads == 0 || !width.is_multiple_of(heads) {
        return Err(Error::invalid(format!(
            "{at}: {heads} heads do not divide width {width}"
        )));
    }
    Ok(width / heads)
}

/// Indices with `r_f` at or below the `p`-th percentile.
fn threshold_prune(d: &RfDistribution, p: u32) -> Vec<usize> {
    let t = d.percentile(p);
    d.scores
        .iter()
        .filter(|s| s.r_f <= t)
        .map(|s| s.neuron)
        .collect()
}

/// Per head of width `hd`, the `floor(p·hd/100)` lowest-`r_f` neurons, lower
/// index first on ties.
fn per_head_prune(d: &RfDistribution, heads: usize, p: u32, at: &str) -> Result<Vec<usize>> {
    let hd = head_dim(d.width(), heads, at)?;
    let drop = p as usize * hd / 100;
    let mut out = Vec::with_capacity(drop * heads);
    for h in 0..heads {
        let mut head: Vec<&NeuronScore> = d.scores[h * hd..(h + 1) * hd].iter().collect();
        head.sort_by(|a, b| a.r_f.total_cmp(&b.r_f).then(a.neuron.cmp(&b.neuron)));
        out.extend(head[..drop].iter().map(|s| s.neuron));
    }
    out.sort_unstable();
    Ok(out)
}

/// Turns distributions and levels into a concrete plan.
///
/// Non-attention components drop every neuron with `r_f` at or below the
/// level's percentile. Q, K and V drop the same number of lowest-`r_f`
/// neurons from each head unless `global_percentile` is set, in which case
/// they follow the threshold rule too. K always mirrors Q's index set.
pub fn build_plan(
    distributions: &[RfDistribution],
    assignment: &LevelAssignment,
    heads: usize,
    global_percentile: bool,
) -> Result<PrunePlan> {
    assignment.validate()?;
    let by_key: BTreeMap<(usize, Component), &RfDistribution> = distributions
        .iter()
        .map(|d| ((d.layer, d.component), d))
        .collect();
    let find = |layer: usize, component: Component| {
        by_key.get(&(layer, component)).copied().ok_or_else(|| {
            Error::Missing(format!("r_f distribution for layer {layer} {component}"))
        })
    };

    let mut components = Vec::new();
    for e in assignment.entries() {
        let p = e.level.percent().expect("entries are never None");
        let d = find(e.layer, e.component)?;
        let at = format!("layer {} {}", e.layer, e.component);
        let source = if e.component == Component::K {
            find(e.layer, Component::Q)?
        } else {
            d
        };
        if source.width() != d.width() {
            return Err(Error::shape(format!("{at}: Q and K widths differ")));
        }
        let pruned = if e.component.is_attention() && !global_percentile {
            per_head_prune(source, heads, p, &at)?
        } else {
            threshold_prune(source, p)
        };
        let compensation = pruned
            .iter()
            .map(|&j| (j, d.scores[j].compensation()))
            .collect();
        components.push(ComponentPlan {
            layer: e.layer,
            component: e.component,
            level: e.level,
            width: d.width(),
            retained_count: d.width() - pruned.len(),
            pruned_indices: pruned,
            compensation,
        });
    }
    let plan = PrunePlan {
        heads,
        global_percentile,
        components,
        report: None,
    };
    plan.validate()?;
    Ok(plan)
}

/// Parameter counts of the full model before and after `plan`, embeddings
/// and pooler included.
pub fn plan_parameter_report(plan: &PrunePlan, cfg: &EncoderConfig) -> ParameterReport {
    let h = cfg.hidden;
    let original = cfg.parameter_count();
    let removed: usize = plan
        .components
        .iter()
        .map(|c| {
            let k = c.pruned_indices.len();
            match c.component {
                Component::Q | Component::K => k * (h + 1),
                Component::V | Component::Intermediate => k * (2 * h + 1),
                Component::AttOutput | Component::Output => 0,
            }
        })
        .sum();
    let pruned = original - removed;
    ParameterReport {
        original,
        pruned,
        ratio: pruned as f64 / original as f64,
    }
}

/// Stand-in distributions for a shape-only plan: every neuron gets a distinct
/// `r_f` equal to its index, so the percentile rules act on ranks.
pub fn rank_distributions(cfg: &EncoderConfig) -> Vec<RfDistribution> {
    let mut scores = Vec::new();
    for layer in 1..=cfg.layers {
        for c in Component::ALL {
            let width = if c == Component::Intermediate {
                cfg.intermediate
            } else {
                cfg.hidden
            };
            scores.extend((0..width).map(|neuron| NeuronScore {
                layer,
                component: c,
                neuron,
                r_f: neuron as f64,
                mean: 0.0,
                std: 0.0,
            }));
        }
    }
    crate::activations::summarize(&scores).expect("well-formed synthetic scores")
}
