use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn default_cls() -> u32 {
    101
}

/// Encoder hyper-parameters. Accepts both descriptive field names and the
/// single-letter `L/H/A/I/V/M` aliases in JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    #[serde(alias = "L")]
    pub layers: usize,
    #[serde(alias = "H")]
    pub hidden: usize,
    #[serde(alias = "A")]
    pub heads: usize,
    #[serde(alias = "I")]
    pub intermediate: usize,
    #[serde(alias = "V")]
    pub vocab: usize,
    #[serde(alias = "M")]
    pub max_len: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cls")]
    pub cls_id: u32,
    #[serde(default)]
    pub pad_id: u32,
}

impl EncoderConfig {
    /// BERT Base (cased) shapes: L=12, H=768, A=12, I=3072.
    pub fn bert_base() -> Self {
        EncoderConfig {
            layers: 12,
            hidden: 768,
            heads: 12,
            intermediate: 3072,
            vocab: 28996,
            max_len: 512,
            seed: 0,
            cls_id: 101,
            pad_id: 0,
        }
    }

    /// BERT Large (cased) shapes: L=24, H=1024, A=16, I=4096.
    pub fn bert_large() -> Self {
        EncoderConfig {
            layers: 24,
            hidden: 1024,
            heads: 16,
            intermediate: 4096,
            ..Self::bert_base()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("intermediate", self.intermediate),
            ("vocab", self.vocab),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!(
                "config `{name}` must be at least 1"
            )));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.cls_id as usize >= self.vocab || self.pad_id as usize >= self.vocab {
            return Err(Error::invalid(
                "cls_id and pad_id must lie inside the vocabulary",
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn embedding_parameters(&self) -> usize {
        let h = self.hidden;
        self.vocab * h + self.max_len * h + 2 * h
    }

    pub fn layer_parameters(&self) -> usize {
        let (h, i) = (self.hidden, self.intermediate);
        4 * h * h + 4 * h + 2 * h + 2 * h * i + i + h + 2 * h
    }

    pub fn pooler_parameters(&self) -> usize {
        self.hidden * self.hidden + self.hidden
    }

    pub fn parameter_count(&self) -> usize {
        self.embedding_parameters()
            + self.layers * self.layer_parameters()
            + self.pooler_parameters()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: EncoderConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letter_aliases() {
        let cfg = EncoderConfig::from_json(
            r#"{"L":2,"H":8,"A":2,"I":16,"V":100,"M":16,"seed":7,"cls_id":1}"#,
        )
        .unwrap();
        assert_eq!(cfg.layers, 2);
        assert_eq!(cfg.head_dim(), 4);
        assert_eq!(cfg.pad_id, 0);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = EncoderConfig::bert_base();
        cfg.heads = 7;
        assert!(cfg.validate().is_err());
        let mut cfg = EncoderConfig::bert_base();
        cfg.layers = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = EncoderConfig::bert_base();
        cfg.vocab = 50;
        assert!(cfg.validate().is_err());
        assert!(EncoderConfig::bert_large().validate().is_ok());
    }
}
