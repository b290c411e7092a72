//! Reference implementations that share no code with the library.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f64> {
    (0..n * dim).map(|_| rng.gen_range(-10.0..10.0)).collect()
}

/// Single-linkage merge heights (distance units), ascending. Kruskal over all
/// pairs with a flat label array: a merge relabels every member of one side.
pub fn single_linkage_heights(points: &[f64], dim: usize) -> Vec<f64> {
    let n = points.len() / dim;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((
                distance(
                    &points[i * dim..(i + 1) * dim],
                    &points[j * dim..(j + 1) * dim],
                ),
                i,
                j,
            ));
        }
    }
    edges.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut label: Vec<usize> = (0..n).collect();
    let mut heights = Vec::new();
    for (w, i, j) in edges {
        let (a, b) = (label[i], label[j]);
        if a != b {
            for l in label.iter_mut() {
                if *l == b {
                    *l = a;
                }
            }
            heights.push(w);
        }
    }
    heights
}

/// Random simplicial complex on `n` vertices, closed under faces, as sorted
/// vertex lists.
pub fn random_complex(rng: &mut ChaCha8Rng, n: usize, max_dim: usize) -> Vec<Vec<usize>> {
    let mut set = std::collections::BTreeSet::new();
    for v in 0..n {
        set.insert(vec![v]);
    }
    let tops = if n < 2 { 0 } else { rng.gen_range(1..=2 * n) };
    for _ in 0..tops {
        let k = rng.gen_range(2..=(max_dim + 1).min(n));
        let mut verts: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.gen_range(i..n);
            verts.swap(i, j);
        }
        let mut top = verts[..k].to_vec();
        top.sort_unstable();
        for mask in 1u32..(1 << k) {
            let face: Vec<usize> = (0..k)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| top[b])
                .collect();
            set.insert(face);
        }
    }
    let mut out: Vec<Vec<usize>> = set.into_iter().collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

/// Rank over Z/2 by Gaussian elimination on dense rows.
pub fn rank_z2(mut rows: Vec<Vec<bool>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        if let Some(p) = (rank..rows.len()).find(|&r| rows[r][c]) {
            rows.swap(rank, p);
            for r in 0..rows.len() {
                if r != rank && rows[r][c] {
                    let pivot = rows[rank].clone();
                    for (x, y) in rows[r].iter_mut().zip(pivot) {
                        *x ^= y;
                    }
                }
            }
            rank += 1;
        }
    }
    rank
}

/// Dense boundary matrix `∂_p` with rows indexed by (p−1)-simplices.
pub fn dense_boundary(complex: &[Vec<usize>], p: usize) -> Vec<Vec<bool>> {
    let lower: Vec<&Vec<usize>> = complex.iter().filter(|s| s.len() == p).collect();
    let upper: Vec<&Vec<usize>> = complex.iter().filter(|s| s.len() == p + 1).collect();
    let mut m = vec![vec![false; upper.len()]; lower.len()];
    for (c, s) in upper.iter().enumerate() {
        for skip in 0..s.len() {
            let face: Vec<usize> = s
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, v)| *v)
                .collect();
            let r = lower
                .iter()
                .position(|l| **l == face)
                .expect("closed under faces");
            m[r][c] ^= true;
        }
    }
    m
}

/// β_p = dim C_p − rank ∂_p − rank ∂_{p+1}.
pub fn betti_by_rank(complex: &[Vec<usize>], max_dim: usize) -> Vec<usize> {
    let count = |p: usize| complex.iter().filter(|s| s.len() == p + 1).count();
    let rank = |p: usize| {
        if p == 0 {
            0
        } else {
            rank_z2(dense_boundary(complex, p))
        }
    };
    (0..=max_dim)
        .map(|p| count(p) - rank(p) - rank(p + 1))
        .collect()
}

/// Random orthogonal matrix by Gram–Schmidt on a random square matrix.
pub fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    loop {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for _ in 0..dim {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-3 {
                break;
            }
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
        if basis.len() == dim {
            return basis;
        }
    }
}

pub fn assert_multisets_close(a: &[f64], b: &[f64], rel: f64) -> Result<(), String> {
    if a.len() != b.len() {
        return Err(format!("sizes differ: {} vs {}", a.len(), b.len()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    for (x, y) in a.iter().zip(&b) {
        if (x - y).abs() > rel * x.abs().max(y.abs()) {
            return Err(format!("{x} vs {y}"));
        }
    }
    Ok(())
}

pub mod fixtures {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use topoprune::encoder::{init_model, Checkpoint, EncoderConfig, TokenBatch};

    pub const CONSTANT_LAYER: usize = 3;
    pub const CONSTANT_NEURON: usize = 5;

    pub fn toy_config(
        layers: usize,
        hidden: usize,
        heads: usize,
        intermediate: usize,
    ) -> EncoderConfig {
        EncoderConfig {
            layers,
            hidden,
            heads,
            intermediate,
            vocab: 100,
            max_len: 16,
            seed: 3,
            cls_id: 1,
            pad_id: 0,
        }
    }

    pub fn random_batch(cfg: &EncoderConfig, rows: usize, seed: u64) -> TokenBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seqs: Vec<Vec<u32>> = (0..rows)
            .map(|_| {
                let len = rng.gen_range(2..=cfg.max_len);
                std::iter::once(cfg.cls_id)
                    .chain((1..len).map(|_| rng.gen_range(2..cfg.vocab as u32)))
                    .collect()
            })
            .collect();
        TokenBatch::from_sequences(&seqs, cfg).unwrap()
    }

    /// Toy model whose Intermediate neuron `CONSTANT_NEURON` in layer
    /// `CONSTANT_LAYER` ignores its input: zero weights and bias 0.8, so its
    /// GELU output is the same for every token. Its outgoing column is scaled
    /// up so removing it without compensation is clearly visible.
    pub fn constant_neuron_model() -> Checkpoint {
        let cfg = toy_config(3, 8, 2, 16);
        let mut ckpt = init_model(&cfg).unwrap();
        let (l, j) = (CONSTANT_LAYER, CONSTANT_NEURON);
        let w = ckpt
            .tensor_mut(&format!("layer.{l}.Intermediate.weight"))
            .unwrap();
        w.data[j * 8..(j + 1) * 8].iter_mut().for_each(|x| *x = 0.0);
        ckpt.tensor_mut(&format!("layer.{l}.Intermediate.bias"))
            .unwrap()
            .data[j] = 0.8;
        let out = ckpt
            .tensor_mut(&format!("layer.{l}.Output.weight"))
            .unwrap();
        for r in 0..8 {
            out.data[r * 16 + j] = if r % 2 == 0 { 0.5 } else { -0.3 };
        }
        ckpt
    }
}
