//! Named f32 tensors in a byte-exact container.
//!
//! Layout: an 8-byte little-endian header length `n`, `n` bytes of JSON
//! header, then the data block. The header maps each tensor name to
//! `{"data_offsets":[b,e],"dtype":"F32","shape":[..]}` with offsets relative to
//! the data block, plus an optional `"__metadata__"` string map. Keys are
//! sorted, there is no insignificant whitespace, and tensors are laid out in
//! ascending name order, so identical inputs give identical bytes. The layout
//! is readable by safetensors tooling.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

const METADATA_KEY: &str = "__metadata__";
const MAX_HEADER: u64 = 100 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("file too short for header length ({0} bytes)")]
    MissingLength(usize),
    #[error("header length {declared} exceeds file size {available}")]
    HeaderLength { declared: u64, available: usize },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported dtype `{dtype}` for tensor `{name}`")]
    Dtype { name: String, dtype: String },
    #[error("tensor `{name}`: byte range {begin}..{end} does not match shape {shape:?}")]
    RangeShape {
        name: String,
        begin: usize,
        end: usize,
        shape: Vec<usize>,
    },
    #[error("tensors `{first}` and `{second}` have overlapping byte ranges")]
    Overlap { first: String, second: String },
    #[error("tensor `{name}` ends at byte {end}, data block has {available}")]
    Truncated {
        name: String,
        end: usize,
        available: usize,
    },
    #[error("duplicate tensor name `{0}`")]
    Duplicate(String),
    #[error("invalid tensor name `{0}`")]
    Name(String),
    #[error("tensor `{name}`: {len} values do not fill shape {shape:?}")]
    ElementCount {
        name: String,
        len: usize,
        shape: Vec<usize>,
    },
    #[error("no tensor named `{0}`")]
    NotFound(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl StoreError {
    /// Stable numeric code per failure kind.
    pub fn code(&self) -> u32 {
        match self {
            StoreError::MissingLength(_) => 1,
            StoreError::HeaderLength { .. } => 2,
            StoreError::Header(_) => 3,
            StoreError::Dtype { .. } => 4,
            StoreError::RangeShape { .. } => 5,
            StoreError::Overlap { .. } => 6,
            StoreError::Truncated { .. } => 7,
            StoreError::Duplicate(_) => 8,
            StoreError::Name(_) => 9,
            StoreError::ElementCount { .. } => 10,
            StoreError::NotFound(_) => 11,
            StoreError::Io(_) => 12,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, StoreError::Io(_))
    }
}

/// A named, row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorView {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorView {
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<Self, StoreError> {
        let name = name.into();
        if data.len() != shape.iter().product::<usize>() {
            return Err(StoreError::ElementCount {
                name,
                len: data.len(),
                shape,
            });
        }
        Ok(TensorView { name, shape, data })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        TensorView {
            name: name.into(),
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub data_offsets: [usize; 2],
}

impl TensorEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TensorManifest {
    pub entries: BTreeMap<String, TensorEntry>,
    pub metadata: BTreeMap<String, String>,
}

/// An opened container. Tensors are decoded on demand from the in-memory
/// data block.
#[derive(Debug, Clone)]
pub struct TensorStore {
    manifest: TensorManifest,
    data: Vec<u8>,
}

impl TensorStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::from_bytes(fs::read(path)?)
    }

    pub fn from_bytes(mut bytes: Vec<u8>) -> Result<Self, StoreError> {
        if bytes.len() < 8 {
            return Err(StoreError::MissingLength(bytes.len()));
        }
        let declared = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        let available = bytes.len() - 8;
        if declared > MAX_HEADER || declared as usize > available {
            return Err(StoreError::HeaderLength {
                declared,
                available,
            });
        }
        let header_end = 8 + declared as usize;
        let manifest = parse_header(&bytes[8..header_end])?;
        bytes.drain(..header_end);
        validate_ranges(&manifest, bytes.len())?;
        Ok(TensorStore {
            manifest,
            data: bytes,
        })
    }

    pub fn manifest(&self) -> &TensorManifest {
        &self.manifest
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.manifest.metadata
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.manifest.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.manifest.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Result<TensorView, StoreError> {
        let entry = self
            .manifest
            .entries
            .get(name)
            .ok_or_else(|| StoreError::NotFound(name.to_string()))?;
        let [b, e] = entry.data_offsets;
        let data = self.data[b..e]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(TensorView {
            name: name.to_string(),
            shape: entry.shape.clone(),
            data,
        })
    }

    /// Decodes every tensor, in name order.
    pub fn tensors(&self) -> Result<Vec<TensorView>, StoreError> {
        self.names().map(|n| self.tensor(n)).collect()
    }
}

fn parse_header(raw: &[u8]) -> Result<TensorManifest, StoreError> {
    let text = std::str::from_utf8(raw).map_err(|e| StoreError::Header(e.to_string()))?;
    let value: Value = serde_json::from_str(text).map_err(|e| StoreError::Header(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(StoreError::Header("header is not a JSON object".into()));
    };
    let mut manifest = TensorManifest::default();
    for (name, v) in map {
        if name == METADATA_KEY {
            manifest.metadata = serde_json::from_value(v)
                .map_err(|e| StoreError::Header(format!("__metadata__: {e}")))?;
            continue;
        }
        if name.is_empty() {
            return Err(StoreError::Name(name));
        }
        let entry: TensorEntry = serde_json::from_value(v)
            .map_err(|e| StoreError::Header(format!("tensor `{name}`: {e}")))?;
        if entry.dtype != "F32" {
            return Err(StoreError::Dtype {
                name,
                dtype: entry.dtype,
            });
        }
        let [b, e] = entry.data_offsets;
        if e < b || e - b != 4 * entry.numel() {
            return Err(StoreError::RangeShape {
                name,
                begin: b,
                end: e,
                shape: entry.shape,
            });
        }
        manifest.entries.insert(name, entry);
    }
    Ok(manifest)
}

fn validate_ranges(manifest: &TensorManifest, available: usize) -> Result<(), StoreError> {
    let mut ranges: Vec<(&String, [usize; 2])> = manifest
        .entries
        .iter()
        .map(|(n, e)| (n, e.data_offsets))
        .collect();
    ranges.sort_by_key(|&(_, r)| (r[0], r[1]));
    for (name, [_, end]) in &ranges {
        if *end > available {
            return Err(StoreError::Truncated {
                name: name.to_string(),
                end: *end,
                available,
            });
        }
    }
    for pair in ranges.windows(2) {
        let (first, a) = pair[0];
        let (second, b) = pair[1];
        // zero-length ranges occupy no bytes and cannot overlap
        if a[1] > b[0] && a[0] != a[1] && b[0] != b[1] {
            return Err(StoreError::Overlap {
                first: first.clone(),
                second: second.clone(),
            });
        }
    }
    Ok(())
}

/// Serializes tensors (in ascending name order) and metadata.
pub fn encode_store(
    tensors: &[TensorView],
    metadata: &BTreeMap<String, String>,
) -> Result<Vec<u8>, StoreError> {
    let mut sorted: Vec<&TensorView> = tensors.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    for w in sorted.windows(2) {
        if w[0].name == w[1].name {
            return Err(StoreError::Duplicate(w[0].name.clone()));
        }
    }

    let mut header = Map::new();
    if !metadata.is_empty() {
        header.insert(
            METADATA_KEY.to_string(),
            serde_json::to_value(metadata).expect("string map"),
        );
    }
    let mut offset = 0;
    for t in &sorted {
        if t.name.is_empty() || t.name == METADATA_KEY {
            return Err(StoreError::Name(t.name.clone()));
        }
        if t.data.len() != t.shape.iter().product::<usize>() {
            return Err(StoreError::ElementCount {
                name: t.name.clone(),
                len: t.data.len(),
                shape: t.shape.clone(),
            });
        }
        let end = offset + 4 * t.data.len();
        let entry = TensorEntry {
            dtype: "F32".into(),
            shape: t.shape.clone(),
            data_offsets: [offset, end],
        };
        header.insert(
            t.name.clone(),
            serde_json::to_value(entry).expect("plain struct"),
        );
        offset = end;
    }
    // serde_json's Map is ordered by key unless `preserve_order` is enabled;
    // re-sorting here keeps the bytes stable either way.
    let header: BTreeMap<String, Value> = header.into_iter().collect();
    let header = serde_json::to_vec(&header).expect("json");

    let mut out = Vec::with_capacity(8 + header.len() + offset);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in sorted {
        for x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_store(
    path: impl AsRef<Path>,
    tensors: &[TensorView],
    metadata: &BTreeMap<String, String>,
) -> Result<(), StoreError> {
    let bytes = encode_store(tensors, metadata)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_store(path: impl AsRef<Path>) -> Result<TensorStore, StoreError> {
    TensorStore::open(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity() -> TensorView {
        TensorView::new("w", vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn identity_round_trip() {
        let bytes = encode_store(&[identity()], &BTreeMap::new()).unwrap();
        let store = TensorStore::from_bytes(bytes).unwrap();
        assert_eq!(store.tensor("w").unwrap(), identity());
    }

    #[test]
    fn exact_layout() {
        let bytes = encode_store(&[identity()], &BTreeMap::new()).unwrap();
        let header = r#"{"w":{"data_offsets":[0,16],"dtype":"F32","shape":[2,2]}}"#;
        assert_eq!(&bytes[..8], &(header.len() as u64).to_le_bytes());
        assert_eq!(&bytes[8..8 + header.len()], header.as_bytes());
        assert_eq!(bytes.len(), 8 + header.len() + 16);
        assert_eq!(
            &bytes[8 + header.len()..8 + header.len() + 4],
            &1f32.to_le_bytes()
        );
    }

    #[test]
    fn empty_store() {
        let bytes = encode_store(&[], &BTreeMap::new()).unwrap();
        assert_eq!(&bytes[8..], b"{}");
        let store = TensorStore::from_bytes(bytes).unwrap();
        assert!(store.is_empty());
    }

    #[test]
    fn zero_element_tensor() {
        let t = TensorView::zeros("empty", vec![0, 768]);
        let store = TensorStore::from_bytes(
            encode_store(&[t.clone(), identity()], &BTreeMap::new()).unwrap(),
        )
        .unwrap();
        assert_eq!(store.manifest().entries["empty"].data_offsets, [0, 0]);
        assert_eq!(store.tensor("empty").unwrap(), t);
    }

    #[test]
    fn name_order_and_metadata() {
        let a = TensorView::new("b", vec![1], vec![2.0]).unwrap();
        let b = TensorView::new("a", vec![1], vec![1.0]).unwrap();
        let meta = BTreeMap::from([("k".to_string(), "v".to_string())]);
        let bytes = encode_store(&[a, b], &meta).unwrap();
        let store = TensorStore::from_bytes(bytes).unwrap();
        assert_eq!(store.manifest().entries["a"].data_offsets, [0, 4]);
        assert_eq!(store.manifest().entries["b"].data_offsets, [4, 8]);
        assert_eq!(store.metadata()["k"], "v");
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = encode_store(&[identity(), identity()], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, StoreError::Duplicate(_)));
    }

    fn raw(header: &str, data_len: usize) -> Vec<u8> {
        let mut out = (header.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(header.as_bytes());
        out.extend(std::iter::repeat_n(0u8, data_len));
        out
    }

    #[test]
    fn malformed_inputs_have_distinct_codes() {
        let cases: Vec<(Vec<u8>, u32)> = vec![
            (vec![1, 2, 3], 1),
            (
                {
                    let mut b = 1000u64.to_le_bytes().to_vec();
                    b.extend_from_slice(b"{}");
                    b
                },
                2,
            ),
            (raw("{not json", 0), 3),
            (
                raw(
                    r#"{"a":{"dtype":"F16","shape":[1],"data_offsets":[0,2]}}"#,
                    2,
                ),
                4,
            ),
            (
                raw(
                    r#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,4]}}"#,
                    8,
                ),
                5,
            ),
            (
                raw(
                    r#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}}"#,
                    8,
                ),
                6,
            ),
            (
                raw(
                    r#"{"a":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}}"#,
                    8,
                ),
                7,
            ),
        ];
        for (bytes, code) in cases {
            let err = TensorStore::from_bytes(bytes).unwrap_err();
            assert_eq!(err.code(), code, "{err}");
        }
    }

    #[test]
    fn missing_tensor() {
        let store = TensorStore::from_bytes(encode_store(&[identity()], &BTreeMap::new()).unwrap())
            .unwrap();
        assert_eq!(store.tensor("nope").unwrap_err().code(), 11);
    }
}
