use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{affine_bias_name, affine_weight_name};
use super::{Checkpoint, TokenBatch};
use crate::tensor_store::{encode_store, TensorStore, TensorView};
use crate::{Component, Error, Result};

pub const LAYER_NORM_EPS: f32 = 1e-12;

/// Where a component's neuron outputs are read.
///
/// `Affine` takes `Wx + b` of every component. `Post` takes the value handed
/// to the next stage: attention-weighted values for V, GELU output for
/// Intermediate, and the post-residual LayerNorm output for AttOutput/Output.
/// Q and K are affine in both modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureMode {
    #[default]
    Affine,
    Post,
}

impl CaptureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptureMode::Affine => "affine",
            CaptureMode::Post => "post",
        }
    }
}

impl fmt::Display for CaptureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaptureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(CaptureMode::Affine),
            "post" => Ok(CaptureMode::Post),
            other => Err(Error::invalid(format!(
                "capture mode must be `affine` or `post`, got `{other}`"
            ))),
        }
    }
}

/// Dense row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f32> {
        (0..self.rows)
            .map(|r| self.data[r * self.cols + c])
            .collect()
    }
}

pub fn activation_name(layer: usize, component: Component) -> String {
    format!("act.layer.{layer}.{component}")
}

pub fn parse_activation_name(name: &str) -> Option<(usize, Component)> {
    let rest = name.strip_prefix("act.layer.")?;
    let (layer, comp) = rest.split_once('.')?;
    let layer: usize = layer.parse().ok()?;
    let component = Component::ALL.into_iter().find(|c| c.as_str() == comp)?;
    (layer >= 1).then_some((layer, component))
}

/// `[CLS]`-position outputs of every component, one `rows × width` matrix
/// per `(layer, component)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub rows: usize,
    pub capture: Option<CaptureMode>,
    pub entries: BTreeMap<(usize, Component), Matrix>,
}

impl ActivationDump {
    pub fn layers(&self) -> usize {
        self.entries.keys().map(|(l, _)| *l).max().unwrap_or(0)
    }

    pub fn get(&self, layer: usize, component: Component) -> Result<&Matrix> {
        self.entries.get(&(layer, component)).ok_or_else(|| {
            Error::Missing(format!(
                "activations `{}`",
                activation_name(layer, component)
            ))
        })
    }

    pub fn to_tensors(&self) -> Vec<TensorView> {
        self.entries
            .iter()
            .map(|(&(l, c), m)| TensorView {
                name: activation_name(l, c),
                shape: vec![m.rows, m.cols],
                data: m.data.clone(),
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut meta = BTreeMap::new();
        if let Some(mode) = self.capture {
            meta.insert("capture".to_string(), mode.to_string());
        }
        meta.insert("rows".to_string(), self.rows.to_string());
        Ok(encode_store(&self.to_tensors(), &meta)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// Reads and validates a dump: every tensor is `act.layer.{l}.{C}` with
    /// shape `[N, width]`, all share `N >= 1`, layers run `1..=L` with all six
    /// components each, and Q/K widths agree.
    pub fn from_store(store: &TensorStore) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut rows = None;
        for name in store.names() {
            let (layer, comp) = parse_activation_name(name).ok_or_else(|| {
                Error::invalid(format!("unexpected tensor `{name}` in activation dump"))
            })?;
            let t = store.tensor(name)?;
            let [n, w] = t.shape[..] else {
                return Err(Error::shape(format!(
                    "`{name}` must be 2-D, has shape {:?}",
                    t.shape
                )));
            };
            if n == 0 {
                return Err(Error::shape(format!("`{name}` has no rows")));
            }
            if *rows.get_or_insert(n) != n {
                return Err(Error::shape(format!(
                    "`{name}` has {n} rows, others have {}",
                    rows.unwrap()
                )));
            }
            entries.insert(
                (layer, comp),
                Matrix {
                    rows: n,
                    cols: w,
                    data: t.data,
                },
            );
        }
        let rows = rows.ok_or_else(|| Error::invalid("activation dump is empty"))?;
        let layers = entries.keys().map(|(l, _)| *l).max().unwrap_or(0);
        for l in 1..=layers {
            for c in Component::ALL {
                if !entries.contains_key(&(l, c)) {
                    return Err(Error::Missing(format!(
                        "`{}` in activation dump",
                        activation_name(l, c)
                    )));
                }
            }
            if entries[&(l, Component::Q)].cols != entries[&(l, Component::K)].cols {
                return Err(Error::shape(format!("layer {l}: Q and K widths differ")));
            }
        }
        let capture = store
            .metadata()
            .get("capture")
            .map(|m| m.parse())
            .transpose()?;
        Ok(ActivationDump {
            rows,
            capture,
            entries,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_store(&TensorStore::open(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub rows: usize,
    pub seq_len: usize,
    pub hidden_size: usize,
    /// Final hidden states, `rows × seq_len × hidden`.
    pub hidden: Vec<f32>,
    /// `[CLS]` hidden state after each layer, index 0 = layer 1.
    pub layer_cls: Vec<Matrix>,
    /// `tanh(W_pool · h_cls + b_pool)`.
    pub pooled: Matrix,
    pub captures: Option<ActivationDump>,
}

impl ForwardOutput {
    /// Final `[CLS]` hidden states, `rows × hidden`.
    pub fn cls(&self) -> Matrix {
        let h = self.hidden_size;
        let mut data = Vec::with_capacity(self.rows * h);
        for r in 0..self.rows {
            let start = r * self.seq_len * h;
            data.extend_from_slice(&self.hidden[start..start + h]);
        }
        Matrix {
            rows: self.rows,
            cols: h,
            data,
        }
    }
}

struct Affine<'a> {
    weight: &'a [f32],
    bias: &'a [f32],
    out: usize,
    inp: usize,
}

impl<'a> Affine<'a> {
    fn load(ckpt: &'a Checkpoint, weight: &str, bias: &str) -> Result<Self> {
        let w = ckpt.tensor(weight)?;
        let b = ckpt.tensor(bias)?;
        Ok(Affine {
            weight: &w.data,
            bias: &b.data,
            out: w.shape[0],
            inp: w.shape[1],
        })
    }

    fn component(ckpt: &'a Checkpoint, layer: usize, c: Component) -> Result<Self> {
        Self::load(
            ckpt,
            &affine_weight_name(layer, c),
            &affine_bias_name(layer, c),
        )
    }

    fn apply(&self, x: &[f32], rows: usize) -> Vec<f32> {
        let mut y = vec![0.0f32; rows * self.out];
        for r in 0..rows {
            let xr = &x[r * self.inp..(r + 1) * self.inp];
            for o in 0..self.out {
                let wr = &self.weight[o * self.inp..(o + 1) * self.inp];
                let dot: f32 = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
                y[r * self.out + o] = dot + self.bias[o];
            }
        }
        y
    }
}

struct Norm<'a> {
    gamma: &'a [f32],
    beta: &'a [f32],
}

impl<'a> Norm<'a> {
    fn load(ckpt: &'a Checkpoint, prefix: &str) -> Result<Self> {
        Ok(Norm {
            gamma: &ckpt.tensor(&format!("{prefix}.weight"))?.data,
            beta: &ckpt.tensor(&format!("{prefix}.bias"))?.data,
        })
    }

    fn apply(&self, x: &[f32]) -> Vec<f32> {
        x.chunks(self.gamma.len())
            .flat_map(|row| layer_norm(row, self.gamma, self.beta, LAYER_NORM_EPS))
            .collect()
    }
}

struct Layer<'a> {
    q: Affine<'a>,
    k: Affine<'a>,
    v: Affine<'a>,
    att_out: Affine<'a>,
    att_norm: Norm<'a>,
    inter: Affine<'a>,
    out: Affine<'a>,
    out_norm: Norm<'a>,
    qk_heads: Vec<usize>,
    v_heads: Vec<usize>,
}

struct Model<'a> {
    hidden: usize,
    word: &'a [f32],
    pos: &'a [f32],
    embed_norm: Norm<'a>,
    layers: Vec<Layer<'a>>,
    pooler: Affine<'a>,
}

impl<'a> Model<'a> {
    fn new(ckpt: &'a Checkpoint) -> Result<Self> {
        ckpt.validate()?;
        let layers = (1..=ckpt.config.layers)
            .map(|l| {
                Ok(Layer {
                    q: Affine::component(ckpt, l, Component::Q)?,
                    k: Affine::component(ckpt, l, Component::K)?,
                    v: Affine::component(ckpt, l, Component::V)?,
                    att_out: Affine::component(ckpt, l, Component::AttOutput)?,
                    att_norm: Norm::load(ckpt, &format!("layer.{l}.attention_norm"))?,
                    inter: Affine::component(ckpt, l, Component::Intermediate)?,
                    out: Affine::component(ckpt, l, Component::Output)?,
                    out_norm: Norm::load(ckpt, &format!("layer.{l}.output_norm"))?,
                    qk_heads: ckpt.qk_heads(l)?,
                    v_heads: ckpt.v_heads(l)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            hidden: ckpt.config.hidden,
            word: &ckpt.tensor("embed.word")?.data,
            pos: &ckpt.tensor("embed.pos")?.data,
            embed_norm: Norm::load(ckpt, "embed.norm")?,
            layers,
            pooler: Affine::load(ckpt, "pooler.weight", "pooler.bias")?,
        })
    }
}

struct RowOutput {
    hidden: Vec<f32>,
    layer_cls: Vec<Vec<f32>>,
    pooled: Vec<f32>,
    captures: Vec<[Vec<f32>; 6]>,
}

fn run_row(model: &Model<'_>, ids: &[u32], mask: &[u8], capture: Option<CaptureMode>) -> RowOutput {
    let h = model.hidden;
    let s = ids.len();
    let mut x = Vec::with_capacity(s * h);
    for (p, &id) in ids.iter().enumerate() {
        let id = id as usize;
        x.extend(
            model.word[id * h..(id + 1) * h]
                .iter()
                .zip(&model.pos[p * h..(p + 1) * h])
                .map(|(a, b)| a + b),
        );
    }
    let mut x = model.embed_norm.apply(&x);

    let mut layer_cls = Vec::with_capacity(model.layers.len());
    let mut captures = Vec::new();
    for layer in &model.layers {
        let q = layer.q.apply(&x, s);
        let k = layer.k.apply(&x, s);
        let v = layer.v.apply(&x, s);
        let ctx = attention(&q, &k, &v, mask, &layer.qk_heads, &layer.v_heads, s);
        let a = layer.att_out.apply(&ctx, s);
        let res: Vec<f32> = a.iter().zip(&x).map(|(a, b)| a + b).collect();
        let h1 = layer.att_norm.apply(&res);
        let pre = layer.inter.apply(&h1, s);
        let act: Vec<f32> = pre.iter().map(|&z| gelu(z)).collect();
        let o = layer.out.apply(&act, s);
        let res: Vec<f32> = o.iter().zip(&h1).map(|(a, b)| a + b).collect();
        let h2 = layer.out_norm.apply(&res);

        if let Some(mode) = capture {
            let cls = |m: &[f32], width: usize| m[..width].to_vec();
            let (qw, vw, iw) = (layer.q.out, layer.v.out, layer.inter.out);
            captures.push(match mode {
                CaptureMode::Affine => [
                    cls(&q, qw),
                    cls(&k, qw),
                    cls(&v, vw),
                    cls(&a, h),
                    cls(&pre, iw),
                    cls(&o, h),
                ],
                CaptureMode::Post => [
                    cls(&q, qw),
                    cls(&k, qw),
                    cls(&ctx, vw),
                    cls(&h1, h),
                    cls(&act, iw),
                    cls(&h2, h),
                ],
            });
        }
        layer_cls.push(h2[..h].to_vec());
        x = h2;
    }
    let pooled = model
        .pooler
        .apply(&x[..h], 1)
        .into_iter()
        .map(f32::tanh)
        .collect();
    RowOutput {
        hidden: x,
        layer_cls,
        pooled,
        captures,
    }
}

/// Multi-head scaled dot-product attention over the unmasked keys. Heads may
/// have different widths; each uses `1/sqrt(qk width)` as its scale.
fn attention(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    mask: &[u8],
    qk_heads: &[usize],
    v_heads: &[usize],
    s: usize,
) -> Vec<f32> {
    let qk_width: usize = qk_heads.iter().sum();
    let v_width: usize = v_heads.iter().sum();
    let mut ctx = vec![0.0f32; s * v_width];
    let (mut qo, mut vo) = (0, 0);
    for (&dq, &dv) in qk_heads.iter().zip(v_heads) {
        let scale = if dq > 0 {
            1.0 / (dq as f32).sqrt()
        } else {
            1.0
        };
        let mut scores = vec![0.0f32; s];
        for i in 0..s {
            let qi = &q[i * qk_width + qo..i * qk_width + qo + dq];
            for (j, score) in scores.iter_mut().enumerate() {
                if mask[j] == 0 {
                    continue;
                }
                let kj = &k[j * qk_width + qo..j * qk_width + qo + dq];
                *score = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
            }
            let weights = masked_softmax(&scores, mask);
            let out = &mut ctx[i * v_width + vo..i * v_width + vo + dv];
            for (j, &w) in weights.iter().enumerate() {
                if mask[j] == 0 {
                    continue;
                }
                let vj = &v[j * v_width + vo..j * v_width + vo + dv];
                for (o, x) in out.iter_mut().zip(vj) {
                    *o += w * x;
                }
            }
        }
        qo += dq;
        vo += dv;
    }
    ctx
}

/// Softmax over positions with `mask == 1`; masked positions get weight 0.
pub fn masked_softmax(scores: &[f32], mask: &[u8]) -> Vec<f32> {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m != 0)
        .map(|(&s, _)| s)
        .fold(f32::NEG_INFINITY, f32::max);
    let mut out: Vec<f32> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m != 0 { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f32 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|w| *w /= total);
    }
    out
}

pub fn layer_norm(x: &[f32], gamma: &[f32], beta: &[f32], eps: f32) -> Vec<f32> {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps as f64).sqrt();
    x.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(&v, (&g, &b))| (((v as f64 - mean) * inv) as f32) * g + b)
        .collect()
}

/// GELU, tanh approximation.
pub fn gelu(x: f32) -> f32 {
    const SQRT_2_OVER_PI: f32 = 0.797_884_6;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

/// Runs the encoder over `batch`. With `capture` set, also records the
/// `[CLS]`-row output of every component.
pub fn forward(
    ckpt: &Checkpoint,
    batch: &TokenBatch,
    capture: Option<CaptureMode>,
) -> Result<ForwardOutput> {
    batch.validate(&ckpt.config)?;
    let model = Model::new(ckpt)?;
    let rows: Vec<RowOutput> = (0..batch.rows)
        .into_par_iter()
        .map(|r| run_row(&model, batch.row_ids(r), batch.row_mask(r), capture))
        .collect();

    let h = model.hidden;
    let n = batch.rows;
    let mut hidden = Vec::with_capacity(n * batch.seq_len * h);
    let mut pooled = Vec::with_capacity(n * h);
    let mut layer_cls: Vec<Matrix> = (0..model.layers.len())
        .map(|_| Matrix {
            rows: n,
            cols: h,
            data: Vec::with_capacity(n * h),
        })
        .collect();
    for row in &rows {
        hidden.extend_from_slice(&row.hidden);
        pooled.extend_from_slice(&row.pooled);
        for (m, cls) in layer_cls.iter_mut().zip(&row.layer_cls) {
            m.data.extend_from_slice(cls);
        }
    }

    let captures = capture.map(|mode| {
        let mut entries = BTreeMap::new();
        for (li, layer) in model.layers.iter().enumerate() {
            let widths = [layer.q.out, layer.k.out, layer.v.out, h, layer.inter.out, h];
            for (ci, comp) in Component::ALL.into_iter().enumerate() {
                let mut data = Vec::with_capacity(n * widths[ci]);
                for row in &rows {
                    data.extend_from_slice(&row.captures[li][ci]);
                }
                entries.insert(
                    (li + 1, comp),
                    Matrix {
                        rows: n,
                        cols: widths[ci],
                        data,
                    },
                );
            }
        }
        ActivationDump {
            rows: n,
            capture: Some(mode),
            entries,
        }
    });

    Ok(ForwardOutput {
        rows: n,
        seq_len: batch.seq_len,
        hidden_size: h,
        hidden,
        layer_cls,
        pooled: Matrix {
            rows: n,
            cols: h,
            data: pooled,
        },
        captures,
    })
}

/// Forward pass with capture, returning only the activation dump.
pub fn dump_activations(
    ckpt: &Checkpoint,
    batch: &TokenBatch,
    mode: CaptureMode,
) -> Result<ActivationDump> {
    Ok(forward(ckpt, batch, Some(mode))?
        .captures
        .expect("capture requested"))
}
