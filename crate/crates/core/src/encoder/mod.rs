//! A small post-LayerNorm transformer encoder, inference only.
//!
//! Weights are `[out, in]` row-major. Tensor names:
//!
//! | tensor | shape |
//! |---|---|
//! | `embed.word` | `[V, H]` |
//! | `embed.pos` | `[M, H]` |
//! | `embed.norm.{weight,bias}` | `[H]` |
//! | `layer.{l}.{Q,K,V,AttOutput}.weight` | `[out, H]` (AttOutput: `[H, width(V)]`) |
//! | `layer.{l}.attention_norm.{weight,bias}` | `[H]` |
//! | `layer.{l}.Intermediate.weight` | `[I, H]` |
//! | `layer.{l}.Output.weight` | `[H, I]` |
//! | `layer.{l}.output_norm.{weight,bias}` | `[H]` |
//! | `pooler.weight` / `pooler.bias` | `[H, H]` / `[H]` |
//!
//! Layers are numbered from 1.

mod checkpoint;
mod config;
mod corpus;
mod forward;
pub mod rng;

pub use checkpoint::{
    affine_bias_name, affine_weight_name, count_parameters, init_model, qk_heads_key, v_heads_key,
    Checkpoint, CONFIG_KEY,
};
pub use config::EncoderConfig;
pub use corpus::{parse_corpus, sample_indices, TokenBatch};
pub use forward::{
    activation_name, dump_activations, forward, gelu, layer_norm, masked_softmax,
    parse_activation_name, ActivationDump, CaptureMode, ForwardOutput, Matrix, LAYER_NORM_EPS,
};
