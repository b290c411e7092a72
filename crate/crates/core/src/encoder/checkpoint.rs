use std::collections::BTreeMap;
use std::path::Path;

use super::rng::SplitMix64;
use super::EncoderConfig;
use crate::tensor_store::{encode_store, TensorStore, TensorView};
use crate::{Component, Error, Result};

/// Metadata key holding the JSON-encoded [`EncoderConfig`].
pub const CONFIG_KEY: &str = "config";

const INIT_STD: f64 = 0.02;

pub fn affine_weight_name(layer: usize, component: Component) -> String {
    format!("layer.{layer}.{component}.weight")
}

pub fn affine_bias_name(layer: usize, component: Component) -> String {
    format!("layer.{layer}.{component}.bias")
}

/// Metadata key listing the per-head widths of Q/K in `layer` (comma
/// separated). Absent means an even split.
pub fn qk_heads_key(layer: usize) -> String {
    format!("layer.{layer}.qk_heads")
}

pub fn v_heads_key(layer: usize) -> String {
    format!("layer.{layer}.v_heads")
}

/// An in-memory model: configuration, tensors by name, and string metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: EncoderConfig,
    pub tensors: BTreeMap<String, TensorView>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn from_store(store: &TensorStore) -> Result<Self> {
        let raw = store
            .metadata()
            .get(CONFIG_KEY)
            .ok_or_else(|| Error::Missing(format!("`{CONFIG_KEY}` metadata in checkpoint")))?;
        let config = EncoderConfig::from_json(raw)?;
        let tensors = store
            .tensors()?
            .into_iter()
            .map(|t| (t.name.clone(), t))
            .collect();
        let ckpt = Checkpoint {
            config,
            tensors,
            metadata: store.metadata().clone(),
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_store(&TensorStore::open(path)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut metadata = self.metadata.clone();
        metadata.insert(CONFIG_KEY.to_string(), serde_json::to_string(&self.config)?);
        let tensors: Vec<TensorView> = self.tensors.values().cloned().collect();
        Ok(encode_store(&tensors, &metadata)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Result<&TensorView> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Missing(format!("tensor `{name}`")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut TensorView> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Missing(format!("tensor `{name}`")))
    }

    /// Output width of a component, read from its weight shape.
    pub fn width(&self, layer: usize, component: Component) -> Result<usize> {
        Ok(self.tensor(&affine_weight_name(layer, component))?.shape[0])
    }

    /// Per-head Q/K widths for `layer`.
    pub fn qk_heads(&self, layer: usize) -> Result<Vec<usize>> {
        self.head_widths(&qk_heads_key(layer), self.width(layer, Component::Q)?)
    }

    /// Per-head V widths for `layer`.
    pub fn v_heads(&self, layer: usize) -> Result<Vec<usize>> {
        self.head_widths(&v_heads_key(layer), self.width(layer, Component::V)?)
    }

    fn head_widths(&self, key: &str, total: usize) -> Result<Vec<usize>> {
        let heads = self.config.heads;
        let widths = match self.metadata.get(key) {
            Some(raw) => raw
                .split(',')
                .map(|w| {
                    w.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::invalid(format!("bad head width `{w}` in `{key}`")))
                })
                .collect::<Result<Vec<_>>>()?,
            None => {
                if !total.is_multiple_of(heads) {
                    return Err(Error::shape(format!(
                        "width {total} does not split evenly over {heads} heads and `{key}` is absent"
                    )));
                }
                vec![total / heads; heads]
            }
        };
        if widths.len() != heads || widths.iter().sum::<usize>() != total {
            return Err(Error::shape(format!(
                "`{key}` lists {widths:?}, expected {heads} heads summing to {total}"
            )));
        }
        Ok(widths)
    }

    /// Checks every producer/consumer pair has consistent shapes.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let h = c.hidden;
        let expect = |name: &str, shape: &[usize]| -> Result<()> {
            let t = self.tensor(name)?;
            if t.shape != shape {
                return Err(Error::shape(format!(
                    "`{name}` has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            Ok(())
        };
        expect("embed.word", &[c.vocab, h])?;
        expect("embed.pos", &[c.max_len, h])?;
        expect("embed.norm.weight", &[h])?;
        expect("embed.norm.bias", &[h])?;
        for l in 1..=c.layers {
            let q = self.width(l, Component::Q)?;
            let v = self.width(l, Component::V)?;
            let i = self.width(l, Component::Intermediate)?;
            expect(&affine_weight_name(l, Component::Q), &[q, h])?;
            expect(&affine_weight_name(l, Component::K), &[q, h])?;
            expect(&affine_weight_name(l, Component::V), &[v, h])?;
            expect(&affine_weight_name(l, Component::AttOutput), &[h, v])?;
            expect(&affine_weight_name(l, Component::Intermediate), &[i, h])?;
            expect(&affine_weight_name(l, Component::Output), &[h, i])?;
            for (comp, width) in [
                (Component::Q, q),
                (Component::K, q),
                (Component::V, v),
                (Component::AttOutput, h),
                (Component::Intermediate, i),
                (Component::Output, h),
            ] {
                expect(&affine_bias_name(l, comp), &[width])?;
            }
            for norm in ["attention_norm", "output_norm"] {
                expect(&format!("layer.{l}.{norm}.weight"), &[h])?;
                expect(&format!("layer.{l}.{norm}.bias"), &[h])?;
            }
            self.qk_heads(l)?;
            self.v_heads(l)?;
        }
        expect("pooler.weight", &[h, h])?;
        expect("pooler.bias", &[h])?;
        Ok(())
    }
}

/// Sum of element counts over all tensors.
pub fn count_parameters<'a>(tensors: impl IntoIterator<Item = &'a TensorView>) -> usize {
    tensors.into_iter().map(TensorView::numel).sum()
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

fn tensor_specs(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (h, i) = (cfg.hidden, cfg.intermediate);
    let mut specs = vec![
        ("embed.word".to_string(), vec![cfg.vocab, h], Init::Normal),
        ("embed.pos".to_string(), vec![cfg.max_len, h], Init::Normal),
        ("embed.norm.weight".to_string(), vec![h], Init::Ones),
        ("embed.norm.bias".to_string(), vec![h], Init::Zeros),
        ("pooler.weight".to_string(), vec![h, h], Init::Normal),
        ("pooler.bias".to_string(), vec![h], Init::Zeros),
    ];
    for l in 1..=cfg.layers {
        for (comp, out, inp) in [
            (Component::Q, h, h),
            (Component::K, h, h),
            (Component::V, h, h),
            (Component::AttOutput, h, h),
            (Component::Intermediate, i, h),
            (Component::Output, h, i),
        ] {
            specs.push((affine_weight_name(l, comp), vec![out, inp], Init::Normal));
            specs.push((affine_bias_name(l, comp), vec![out], Init::Zeros));
        }
        for norm in ["attention_norm", "output_norm"] {
            specs.push((format!("layer.{l}.{norm}.weight"), vec![h], Init::Ones));
            specs.push((format!("layer.{l}.{norm}.bias"), vec![h], Init::Zeros));
        }
    }
    specs.sort_by(|a, b| a.0.cmp(&b.0));
    specs
}

/// Deterministic random initialization. Tensors are filled in ascending name
/// order from one SplitMix64 stream seeded with `cfg.seed`: weights and
/// embeddings from N(0, 0.02²), biases zero, LayerNorm scale one and shift zero.
pub fn init_model(cfg: &EncoderConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let mut tensors = BTreeMap::new();
    for (name, shape, init) in tensor_specs(cfg) {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Normal => (0..n)
                .map(|_| (rng.next_normal() * INIT_STD) as f32)
                .collect(),
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        tensors.insert(name.clone(), TensorView { name, shape, data });
    }
    Ok(Checkpoint {
        config: cfg.clone(),
        tensors,
        metadata: BTreeMap::new(),
    })
}
