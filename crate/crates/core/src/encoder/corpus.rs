use super::rng::SplitMix64;
use super::EncoderConfig;
use crate::{Error, Result};

/// Padded token ids and attention mask, `rows × seq_len`, row-major. Column 0
/// of every row is the `[CLS]` token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub rows: usize,
    pub seq_len: usize,
}

impl TokenBatch {
    pub fn new(ids: Vec<u32>, mask: Vec<u8>, rows: usize, seq_len: usize) -> Result<Self> {
        if ids.len() != rows * seq_len || mask.len() != rows * seq_len {
            return Err(Error::shape(format!(
                "batch of {rows}x{seq_len} needs {} ids and mask entries, got {} and {}",
                rows * seq_len,
                ids.len(),
                mask.len()
            )));
        }
        Ok(TokenBatch {
            ids,
            mask,
            rows,
            seq_len,
        })
    }

    /// Pads (with `pad_id`, mask 0) or truncates every sequence to the longest
    /// one, capped at `max_len`.
    pub fn from_sequences(sequences: &[Vec<u32>], cfg: &EncoderConfig) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::invalid("corpus is empty"));
        }
        let seq_len = sequences
            .iter()
            .map(Vec::len)
            .max()
            .unwrap_or(0)
            .min(cfg.max_len);
        if seq_len == 0 {
            return Err(Error::invalid("corpus contains only empty sequences"));
        }
        let mut ids = Vec::with_capacity(sequences.len() * seq_len);
        let mut mask = Vec::with_capacity(sequences.len() * seq_len);
        for seq in sequences {
            let kept = seq.len().min(seq_len);
            ids.extend_from_slice(&seq[..kept]);
            mask.extend(std::iter::repeat_n(1, kept));
            ids.extend(std::iter::repeat_n(cfg.pad_id, seq_len - kept));
            mask.extend(std::iter::repeat_n(0, seq_len - kept));
        }
        let batch = TokenBatch {
            ids,
            mask,
            rows: sequences.len(),
            seq_len,
        };
        batch.validate(cfg)?;
        Ok(batch)
    }

    pub fn validate(&self, cfg: &EncoderConfig) -> Result<()> {
        if self.ids.len() != self.rows * self.seq_len || self.mask.len() != self.ids.len() {
            return Err(Error::shape("token ids and attention mask sizes disagree"));
        }
        if self.seq_len == 0 || self.seq_len > cfg.max_len {
            return Err(Error::shape(format!(
                "sequence length {} outside 1..={}",
                self.seq_len, cfg.max_len
            )));
        }
        for r in 0..self.rows {
            let row = &self.ids[r * self.seq_len..(r + 1) * self.seq_len];
            let mask = &self.mask[r * self.seq_len..(r + 1) * self.seq_len];
            if let Some(&bad) = row.iter().find(|&&id| id as usize >= cfg.vocab) {
                return Err(Error::invalid(format!(
                    "row {r}: token id {bad} outside vocabulary of {}",
                    cfg.vocab
                )));
            }
            if mask.iter().any(|&m| m > 1) {
                return Err(Error::invalid(format!(
                    "row {r}: attention mask must be 0 or 1"
                )));
            }
            if row[0] != cfg.cls_id || mask[0] != 1 {
                return Err(Error::invalid(format!(
                    "row {r}: position 0 must be an unmasked [CLS] (id {})",
                    cfg.cls_id
                )));
            }
        }
        Ok(())
    }

    pub fn row_ids(&self, r: usize) -> &[u32] {
        &self.ids[r * self.seq_len..(r + 1) * self.seq_len]
    }

    pub fn row_mask(&self, r: usize) -> &[u8] {
        &self.mask[r * self.seq_len..(r + 1) * self.seq_len]
    }
}

/// One sequence per non-blank line, whitespace-separated token ids.
pub fn parse_corpus(text: &str) -> Result<Vec<Vec<u32>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<u32>().map_err(|_| {
                        Error::invalid(format!("corpus line {}: `{tok}` is not a token id", n + 1))
                    })
                })
                .collect()
        })
        .collect()
}

/// Chooses `k` of `n` indices uniformly (partial Fisher–Yates), returned in
/// ascending order. All indices when `k >= n`.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = SplitMix64::new(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.next_below((n - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut chosen = pool[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            layers: 1,
            hidden: 4,
            heads: 1,
            intermediate: 4,
            vocab: 10,
            max_len: 4,
            seed: 0,
            cls_id: 1,
            pad_id: 0,
        }
    }

    #[test]
    fn pads_and_truncates() {
        let b = TokenBatch::from_sequences(&[vec![1, 5], vec![1, 3, 4, 5, 6, 2]], &cfg()).unwrap();
        assert_eq!(b.seq_len, 4);
        assert_eq!(b.row_ids(0), &[1, 5, 0, 0]);
        assert_eq!(b.row_mask(0), &[1, 1, 0, 0]);
        assert_eq!(b.row_ids(1), &[1, 3, 4, 5]);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(TokenBatch::from_sequences(&[vec![2, 5]], &cfg()).is_err());
        assert!(TokenBatch::from_sequences(&[vec![1, 50]], &cfg()).is_err());
        assert!(TokenBatch::from_sequences(&[], &cfg()).is_err());
        assert!(TokenBatch::new(vec![1, 2], vec![1], 1, 2).is_err());
    }

    #[test]
    fn corpus_parsing() {
        assert_eq!(
            parse_corpus("1 2 3\n\n1 4\n").unwrap(),
            vec![vec![1, 2, 3], vec![1, 4]]
        );
        assert!(parse_corpus("1 x").is_err());
    }

    #[test]
    fn sampling() {
        let s = sample_indices(100, 10, 42);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, sample_indices(100, 10, 42));
        assert_eq!(sample_indices(5, 10, 1), vec![0, 1, 2, 3, 4]);
    }
}
