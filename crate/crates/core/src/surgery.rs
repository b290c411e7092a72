//! Applies a [`PrunePlan`] to a checkpoint.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoder::{
    affine_bias_name, affine_weight_name, count_parameters, forward, qk_heads_key, v_heads_key,
    Checkpoint, TokenBatch,
};
use crate::planner::{ComponentPlan, PrunePlan};
use crate::tensor_store::TensorView;
use crate::{Component, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorChange {
    pub name: String,
    pub original_shape: Vec<usize>,
    pub new_shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentChange {
    pub layer: usize,
    pub component: Component,
    pub pruned: usize,
    pub compensated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_bias: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryManifest {
    pub tensors: Vec<TensorChange>,
    pub components: Vec<ComponentChange>,
    pub original_parameters: usize,
    pub pruned_parameters: usize,
    pub ratio: f64,
}

impl SurgeryManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn keep_rows(t: &TensorView, keep: &[usize]) -> TensorView {
    let cols: usize = t.shape[1..].iter().product();
    let mut data = Vec::with_capacity(keep.len() * cols);
    for &r in keep {
        data.extend_from_slice(&t.data[r * cols..(r + 1) * cols]);
    }
    let mut shape = t.shape.clone();
    shape[0] = keep.len();
    TensorView {
        name: t.name.clone(),
        shape,
        data,
    }
}

fn keep_columns(t: &TensorView, keep: &[usize]) -> TensorView {
    let (rows, cols) = (t.shape[0], t.shape[1]);
    let mut data = Vec::with_capacity(rows * keep.len());
    for r in 0..rows {
        data.extend(keep.iter().map(|&c| t.data[r * cols + c]));
    }
    TensorView {
        name: t.name.clone(),
        shape: vec![rows, keep.len()],
        data,
    }
}

/// `bias[o] += Σ_j weight[o, j] · c_j` for a `[out, in]` weight.
pub fn fold_compensation(
    bias: &mut [f32],
    weight: &TensorView,
    constants: &BTreeMap<usize, f64>,
) -> Result<()> {
    let (rows, cols) = (weight.shape[0], weight.shape[1]);
    if bias.len() != rows {
        return Err(Error::shape(format!(
            "bias of {} entries for `{}` with {rows} rows",
            bias.len(),
            weight.name
        )));
    }
    if let Some((&j, _)) = constants.iter().find(|(&j, _)| j >= cols) {
        return Err(Error::invalid(format!(
            "column {j} out of range for `{}` with {cols} columns",
            weight.name
        )));
    }
    for (o, b) in bias.iter_mut().enumerate() {
        let delta: f64 = constants
            .iter()
            .map(|(&j, &c)| weight.data[o * cols + j] as f64 * c)
            .sum();
        *b = (*b as f64 + delta) as f32;
    }
    Ok(())
}

fn head_metadata(heads: &[usize], retained: &[usize]) -> String {
    let mut start = 0;
    let widths: Vec<String> = heads
        .iter()
        .map(|&w| {
            let n = retained
                .iter()
                .filter(|&&j| j >= start && j < start + w)
                .count();
            start += w;
            n.to_string()
        })
        .collect();
    widths.join(",")
}

/// Slices producers and consumers per `plan` and folds compensation into the
/// consumer biases: V into AttOutput, Intermediate into Output. Q/K are sliced
/// only.
pub fn apply_plan(ckpt: &Checkpoint, plan: &PrunePlan) -> Result<(Checkpoint, SurgeryManifest)> {
    plan.validate()?;
    ckpt.validate()?;
    let active: Vec<&ComponentPlan> = plan
        .components
        .iter()
        .filter(|c| !c.pruned_indices.is_empty())
        .collect();
    for c in &active {
        if c.layer > ckpt.config.layers {
            return Err(Error::shape(format!(
                "plan touches layer {}, model has {}",
                c.layer, ckpt.config.layers
            )));
        }
        let width = ckpt.width(c.layer, c.component)?;
        if width != c.width {
            return Err(Error::shape(format!(
                "layer {} {}: plan width {} but checkpoint width {width}",
                c.layer, c.component, c.width
            )));
        }
    }

    let mut out = ckpt.clone();
    let mut components = Vec::new();
    for c in &active {
        let (l, comp) = (c.layer, c.component);
        let retained = c.retained_indices();
        match comp {
            Component::Q | Component::K | Component::V => {
                let key = if comp == Component::V {
                    v_heads_key(l)
                } else {
                    qk_heads_key(l)
                };
                let heads = if comp == Component::V {
                    ckpt.v_heads(l)?
                } else {
                    ckpt.qk_heads(l)?
                };
                out.metadata.insert(key, head_metadata(&heads, &retained));
            }
            _ => {}
        }
        for name in [affine_weight_name(l, comp), affine_bias_name(l, comp)] {
            let t = keep_rows(ckpt.tensor(&name)?, &retained);
            out.tensors.insert(name, t);
        }
        let consumer = match comp {
            Component::V => Some(Component::AttOutput),
            Component::Intermediate => Some(Component::Output),
            _ => None,
        };
        let target_bias = match consumer {
            Some(next) => {
                let w_name = affine_weight_name(l, next);
                let b_name = affine_bias_name(l, next);
                let w = ckpt.tensor(&w_name)?;
                fold_compensation(&mut out.tensor_mut(&b_name)?.data, w, &c.compensation)?;
                out.tensors.insert(w_name, keep_columns(w, &retained));
                Some(b_name)
            }
            None => None,
        };
        components.push(ComponentChange {
            layer: l,
            component: comp,
            pruned: c.pruned_indices.len(),
            compensated: target_bias.is_some(),
            target_bias,
        });
    }
    out.validate()?;

    let tensors = out
        .tensors
        .iter()
        .map(|(name, t)| TensorChange {
            name: name.clone(),
            original_shape: ckpt.tensors[name].shape.clone(),
            new_shape: t.shape.clone(),
        })
        .collect();
    let original_parameters = count_parameters(ckpt.tensors.values());
    let pruned_parameters = count_parameters(out.tensors.values());
    let manifest = SurgeryManifest {
        tensors,
        components,
        original_parameters,
        pruned_parameters,
        ratio: if original_parameters == 0 {
            1.0
        } else {
            pruned_parameters as f64 / original_parameters as f64
        },
    };
    Ok((out, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub max_abs: f64,
    pub mean_abs: f64,
}

impl Drift {
    fn between(a: &[f32], b: &[f32]) -> Drift {
        let mut max_abs = 0.0f64;
        let mut sum = 0.0f64;
        for (x, y) in a.iter().zip(b) {
            let d = (*x as f64 - *y as f64).abs();
            max_abs = max_abs.max(d);
            sum += d;
        }
        Drift {
            max_abs,
            mean_abs: if a.is_empty() {
                0.0
            } else {
                sum / a.len() as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub rows: usize,
    /// Final `[CLS]` hidden states.
    pub cls: Drift,
    /// `[CLS]` hidden state after each layer, index 0 = layer 1.
    pub per_layer: Vec<Drift>,
}

/// Runs both models over `batch` and compares their `[CLS]` states.
pub fn verify_surgery(
    original: &Checkpoint,
    pruned: &Checkpoint,
    batch: &TokenBatch,
) -> Result<DriftReport> {
    let (a, b) = (&original.config, &pruned.config);
    if a.layers != b.layers || a.hidden != b.hidden {
        return Err(Error::shape(format!(
            "models differ in depth or hidden size ({}x{} vs {}x{})",
            a.layers, a.hidden, b.layers, b.hidden
        )));
    }
    let fa = forward(original, batch, None)?;
    let fb = forward(pruned, batch, None)?;
    Ok(DriftReport {
        rows: batch.rows,
        cls: Drift::between(&fa.cls().data, &fb.cls().data),
        per_layer: fa
            .layer_cls
            .iter()
            .zip(&fb.layer_cls)
            .map(|(x, y)| Drift::between(&x.data, &y.data))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_model, EncoderConfig};
    use crate::planner::{plan_parameter_report, Level};
    use proptest::prelude::*;

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            layers: 3,
            hidden: 8,
            heads: 2,
            intermediate: 16,
            vocab: 40,
            max_len: 8,
            seed: 5,
            cls_id: 1,
            pad_id: 0,
        }
    }

    fn comp_plan(
        layer: usize,
        component: Component,
        width: usize,
        pruned: &[usize],
        c: f64,
    ) -> ComponentPlan {
        ComponentPlan {
            layer,
            component,
            level: Level::P30,
            width,
            retained_count: width - pruned.len(),
            pruned_indices: pruned.to_vec(),
            compensation: pruned.iter().map(|&j| (j, c)).collect(),
        }
    }

    fn batch(c: &EncoderConfig) -> TokenBatch {
        TokenBatch::from_sequences(&[vec![1, 5, 9], vec![1, 3], vec![1, 7, 7, 2]], c).unwrap()
    }

    #[test]
    fn empty_plan_is_identity() {
        let ckpt = init_model(&cfg()).unwrap();
        let (out, manifest) = apply_plan(&ckpt, &PrunePlan::empty(2)).unwrap();
        assert_eq!(out.to_bytes().unwrap(), ckpt.to_bytes().unwrap());
        assert_eq!(manifest.ratio, 1.0);
        assert!(manifest
            .tensors
            .iter()
            .all(|t| t.original_shape == t.new_shape));
        assert_eq!(manifest.tensors.len(), ckpt.tensors.len());
        let drift = verify_surgery(&ckpt, &out, &batch(&ckpt.config)).unwrap();
        assert_eq!(drift.cls.max_abs, 0.0);
    }

    #[test]
    fn shapes_heads_and_counts() {
        let ckpt = init_model(&cfg()).unwrap();
        let mut plan = PrunePlan::empty(2);
        plan.components = vec![
            comp_plan(3, Component::Q, 8, &[0, 5], 0.0),
            comp_plan(3, Component::K, 8, &[0, 5], 0.0),
            comp_plan(3, Component::V, 8, &[1, 2, 6, 7], 0.3),
            comp_plan(3, Component::Intermediate, 16, &[0, 3, 15], -0.2),
        ];
        let (out, manifest) = apply_plan(&ckpt, &plan).unwrap();
        assert_eq!(out.tensor("layer.3.Q.weight").unwrap().shape, [6, 8]);
        assert_eq!(
            out.tensor("layer.3.AttOutput.weight").unwrap().shape,
            [8, 4]
        );
        assert_eq!(out.tensor("layer.3.Output.weight").unwrap().shape, [8, 13]);
        assert_eq!(out.metadata["layer.3.qk_heads"], "3,3");
        assert_eq!(out.metadata["layer.3.v_heads"], "2,2");
        assert!(!out.metadata.contains_key("layer.2.qk_heads"));
        let report = plan_parameter_report(&plan, &ckpt.config);
        assert_eq!(manifest.original_parameters, report.original);
        assert_eq!(manifest.pruned_parameters, report.pruned);
        assert_eq!(
            manifest.components[2].target_bias.as_deref(),
            Some("layer.3.AttOutput.bias")
        );
        assert!(!manifest.components[0].compensated);
        verify_surgery(&ckpt, &out, &batch(&ckpt.config)).unwrap();

        let reloaded = Checkpoint::from_store(
            &crate::tensor_store::TensorStore::from_bytes(out.to_bytes().unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(reloaded.to_bytes().unwrap(), out.to_bytes().unwrap());
    }

    #[test]
    fn rejects_bad_plans() {
        let ckpt = init_model(&cfg()).unwrap();
        let mut plan = PrunePlan::empty(2);
        plan.components = vec![comp_plan(3, Component::Output, 8, &[1], 0.0)];
        assert!(apply_plan(&ckpt, &plan).is_err());
        plan.components = vec![comp_plan(3, Component::Intermediate, 12, &[1], 0.0)];
        assert!(matches!(apply_plan(&ckpt, &plan), Err(Error::Shape(_))));
        plan.components = vec![comp_plan(4, Component::Intermediate, 16, &[1], 0.0)];
        assert!(apply_plan(&ckpt, &plan).is_err());
    }

    #[test]
    fn zero_compensation_is_plain_deletion() {
        let ckpt = init_model(&cfg()).unwrap();
        let mut plan = PrunePlan::empty(2);
        plan.components = vec![comp_plan(3, Component::Intermediate, 16, &[4], 0.0)];
        let (out, _) = apply_plan(&ckpt, &plan).unwrap();
        assert_eq!(
            out.tensor("layer.3.Output.bias").unwrap(),
            ckpt.tensor("layer.3.Output.bias").unwrap()
        );

        // same as zeroing the neuron's outgoing column in the original
        let mut zeroed = ckpt.clone();
        let w = zeroed.tensor_mut("layer.3.Output.weight").unwrap();
        for r in 0..8 {
            w.data[r * 16 + 4] = 0.0;
        }
        let b = batch(&ckpt.config);
        let d = verify_surgery(&zeroed, &out, &b).unwrap();
        assert!(d.cls.max_abs < 1e-6, "{d:?}");
    }

    proptest! {
        #[test]
        fn folding_is_additive(
            w in prop::collection::vec(-1.0f32..1.0, 12),
            c1 in prop::collection::vec(-2.0f64..2.0, 4),
            c2 in prop::collection::vec(-2.0f64..2.0, 4),
        ) {
            let weight = TensorView { name: "w".into(), shape: vec![3, 4], data: w };
            let a: BTreeMap<usize, f64> = c1.iter().copied().enumerate().collect();
            let b: BTreeMap<usize, f64> = c2.iter().copied().enumerate().collect();
            let ab: BTreeMap<usize, f64> = c1.iter().zip(&c2).map(|(x, y)| x + y).enumerate().collect();
            let mut twice = vec![0.1f32, -0.2, 0.3];
            fold_compensation(&mut twice, &weight, &a).unwrap();
            fold_compensation(&mut twice, &weight, &b).unwrap();
            let mut once = vec![0.1f32, -0.2, 0.3];
            fold_compensation(&mut once, &weight, &ab).unwrap();
            for (x, y) in twice.iter().zip(&once) {
                prop_assert!((x - y).abs() <= 1e-5);
            }
        }
    }
}
