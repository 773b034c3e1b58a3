//! Per-document embedding matrices and the `EMBv1` binary format.
//!
//! Layout (all little-endian): `EMBv1` magic (5 bytes), `n_docs: u32`,
//! `dim: u32`, then `n_docs * dim` `f32` values in row-major order. Rows
//! align with corpus documents by position.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::{fnv1a, stream};

pub const MAGIC: &[u8; 5] = b"EMBv1";
pub const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n_docs: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(n_docs: usize, dim: usize, data: Vec<f32>) -> Result<EmbeddingMatrix> {
        if data.len() != n_docs * dim {
            return Err(Error::Shape(format!(
                "{n_docs}x{dim} embedding matrix needs {} values, got {}",
                n_docs * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding entry ({}, {}) is {}",
                pos / dim.max(1),
                pos % dim.max(1),
                data[pos]
            )));
        }
        Ok(EmbeddingMatrix { n_docs, dim, data })
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_docs, self.dim), |(r, c)| f64::from(self.data[r * self.dim + c]))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_docs as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EmbeddingMatrix> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        if &bytes[..5] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"EMBv1\"",
                String::from_utf8_lossy(&bytes[..5])
            )));
        }
        let n_docs = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let expected = HEADER_LEN + 4 * n_docs * dim;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        EmbeddingMatrix::new(n_docs, dim, data)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        EmbeddingMatrix::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn unit_vector(seed: u64, key: u64, dim: usize) -> Vec<f64> {
    let mut rng = stream(seed, "synth-embedding", key);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v[0] = 1.0;
    }
    v
}

/// Stand-in for a sentence encoder: every token maps to a seeded random
/// unit vector and a document is the L2-normalized sum of its token
/// vectors. Documents without tokens share one fixed seeded unit vector.
pub fn synth_embeddings(corpus: &Corpus, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    let empty_doc = unit_vector(seed, u64::MAX, dim);
    let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut data = Vec::with_capacity(corpus.len() * dim);
    for doc in &corpus.docs {
        // Sorted so the floating-point sum depends only on the multiset.
        let mut tokens: Vec<&str> = doc.tokens.iter().map(String::as_str).collect();
        tokens.sort_unstable();
        let mut acc = vec![0.0f64; dim];
        for tok in tokens {
            let v = cache
                .entry(tok)
                .or_insert_with(|| unit_vector(seed, fnv1a(tok.as_bytes()), dim));
            acc.iter_mut().zip(v.iter()).for_each(|(a, b)| *a += b);
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        let row: &[f64] = if norm > 0.0 {
            acc.iter_mut().for_each(|x| *x /= norm);
            &acc
        } else {
            &empty_doc
        };
        data.extend(row.iter().map(|&x| x as f32));
    }
    EmbeddingMatrix::new(corpus.len(), dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_file_is_17_bytes() {
        let m = EmbeddingMatrix::new(1, 1, vec![0.5]).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), 17);
        assert_eq!(&bytes[..5], b"EMBv1");
        assert_eq!(&bytes[5..9], &[1, 0, 0, 0]);
        assert_eq!(&bytes[13..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        let m = EmbeddingMatrix::new(2, 3, vec![1.0, -2.0, 3.5, 0.0, 1e-30, -7.25]).unwrap();
        m.write(&path).unwrap();
        let back = EmbeddingMatrix::read(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(fs::read(&path).unwrap(), back.to_bytes());
    }

    #[test]
    fn header_only_file_is_empty_matrix() {
        let m = EmbeddingMatrix::new(0, 384, vec![]).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN);
        let back = EmbeddingMatrix::from_bytes(&bytes).unwrap();
        assert_eq!(back.n_docs(), 0);
        assert_eq!(back.dim(), 384);
    }

    #[test]
    fn corrupted_magic_is_format_error() {
        let mut bytes = EmbeddingMatrix::new(1, 1, vec![0.5]).unwrap().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(EmbeddingMatrix::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_reports_byte_counts() {
        let bytes = EmbeddingMatrix::new(2, 2, vec![1.0; 4]).unwrap().to_bytes();
        match EmbeddingMatrix::from_bytes(&bytes[..20]) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, 29);
                assert_eq!(actual, 20);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_entry_rejected() {
        let mut bytes = EmbeddingMatrix::new(1, 2, vec![1.0, 2.0]).unwrap().to_bytes();
        bytes[17..21].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(EmbeddingMatrix::from_bytes(&bytes), Err(Error::NonFinite(_))));
    }

    #[test]
    fn synth_rows_are_unit_and_deterministic() {
        let c = Corpus::from_token_lists([vec!["a", "b", "a"], vec!["a", "a", "b"], vec!["c"], vec![]]);
        let e1 = synth_embeddings(&c, 16, 7).unwrap();
        let e2 = synth_embeddings(&c, 16, 7).unwrap();
        assert_eq!(e1, e2);
        for i in 0..c.len() {
            let n: f64 = e1.row(i).iter().map(|&x| f64::from(x) * f64::from(x)).sum();
            assert!((n.sqrt() - 1.0).abs() < 1e-5);
        }
        assert_eq!(e1.row(0), e1.row(1));
        assert_ne!(e1.row(0), e1.row(2));
        let other_seed = synth_embeddings(&c, 16, 8).unwrap();
        assert_ne!(e1, other_seed);
    }

    #[test]
    fn synth_is_permutation_equivariant() {
        let docs = vec![vec!["x", "y"], vec!["z"], vec!["y", "y", "w"]];
        let c = Corpus::from_token_lists(docs.clone());
        let perm = [2usize, 0, 1];
        let cp = Corpus::from_token_lists(perm.iter().map(|&i| docs[i].clone()));
        let e = synth_embeddings(&c, 8, 3).unwrap();
        let ep = synth_embeddings(&cp, 8, 3).unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            assert_eq!(ep.row(new_row), e.row(old_row));
        }
    }
}
