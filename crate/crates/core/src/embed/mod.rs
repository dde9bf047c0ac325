//! Embedding similarity: pooling, the built-in embedder, exhaustive cosine
//! search and the EMB1/TOK1/IDS1 files.

mod builtin;
mod io;
mod search;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtin::{BuiltinEmbedder, Embedder};
pub use io::{
    ids_path, load_embeddings, read_emb1, read_ids, read_tok1, save_embeddings, write_emb1,
    write_ids, write_tok1,
};
pub use search::{
    build_embedding_index, embed_names, link_embedding, name_key, split_name_key, EmbeddingSearcher,
};

/// `n` row vectors of dimension `dim` with a parallel id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    ids: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Invalid(format!(
                "{} values do not form {} rows of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value in row {}", i / dim)));
        }
        Ok(EmbeddingMatrix {
            rows: ids.len(),
            dim,
            data,
            ids,
        })
    }

    pub fn from_rows(rows: Vec<(String, Vec<f32>)>, dim: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        let mut ids = Vec::with_capacity(rows.len());
        for (id, row) in rows {
            if row.len() != dim {
                return Err(Error::Dimension { expected: dim, got: row.len() });
            }
            data.extend_from_slice(&row);
            ids.push(id);
        }
        Self::new(dim, data, ids)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(
            self.dim,
            self.data.iter().map(|v| v * factor).collect(),
            self.ids.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum TokenKind {
    Regular = 0,
    Cls = 1,
    Sep = 2,
    Pad = 3,
}

impl TokenKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => TokenKind::Regular,
            1 => TokenKind::Cls,
            2 => TokenKind::Sep,
            3 => TokenKind::Pad,
            _ => return None,
        })
    }
}

/// Per-token vectors of one input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    dim: usize,
    data: Vec<f32>,
    mask: Vec<TokenKind>,
}

impl TokenEmbeddings {
    /// Checks shape, that `[CLS]` appears only at position 0 and that padding
    /// forms a suffix.
    pub fn new(dim: usize, data: Vec<f32>, mask: Vec<TokenKind>) -> Result<Self> {
        if dim == 0 || data.len() != mask.len() * dim {
            return Err(Error::Invalid(format!(
                "{} values do not form {} tokens of dimension {dim}",
                data.len(),
                mask.len()
            )));
        }
        if mask.iter().skip(1).any(|k| *k == TokenKind::Cls) {
            return Err(Error::Invalid("[CLS] is only allowed at position 0".into()));
        }
        if let Some(first_pad) = mask.iter().position(|k| *k == TokenKind::Pad) {
            if mask[first_pad..].iter().any(|k| *k != TokenKind::Pad) {
                return Err(Error::Invalid("padding must be a suffix".into()));
            }
        }
        Ok(TokenEmbeddings { dim, data, mask })
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> &[TokenKind] {
        &self.mask
    }
}

/// Which token vectors are pooled into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionConfig {
    /// The first token's vector.
    Cls,
    /// Mean over regular tokens only.
    Nospec,
    /// Mean over every non-padding token.
    All,
}

impl ExtractionConfig {
    pub const ALL: [ExtractionConfig; 3] =
        [ExtractionConfig::Cls, ExtractionConfig::Nospec, ExtractionConfig::All];
}

impl fmt::Display for ExtractionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtractionConfig::Cls => "cls",
            ExtractionConfig::Nospec => "nospec",
            ExtractionConfig::All => "all",
        })
    }
}

impl FromStr for ExtractionConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(ExtractionConfig::Cls),
            "nospec" => Ok(ExtractionConfig::Nospec),
            "all" => Ok(ExtractionConfig::All),
            other => Err(Error::Invalid(format!("unknown extraction config {other:?}"))),
        }
    }
}

/// Pools token vectors into a single vector. Means accumulate in `f64`.
pub fn pool(te: &TokenEmbeddings, cfg: ExtractionConfig) -> Result<Vec<f32>> {
    if cfg == ExtractionConfig::Cls {
        if te.is_empty() || te.mask[0] == TokenKind::Pad {
            return Err(Error::Invalid("no first token to extract".into()));
        }
        return Ok(te.row(0).to_vec());
    }
    let include = |k: TokenKind| match cfg {
        ExtractionConfig::Nospec => k == TokenKind::Regular,
        _ => k != TokenKind::Pad,
    };
    let mut sum = vec![0f64; te.dim];
    let mut count = 0usize;
    for (i, &k) in te.mask.iter().enumerate() {
        if include(k) {
            count += 1;
            for (s, v) in sum.iter_mut().zip(te.row(i)) {
                *s += f64::from(*v);
            }
        }
    }
    if count == 0 {
        return Err(Error::Invalid(format!("no tokens to pool under `{cfg}`")));
    }
    Ok(sum.into_iter().map(|s| (s / count as f64) as f32).collect())
}

/// Dot product with `f64` accumulation over eight lanes.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0f64; 8];
    let (xa, xb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = xa
        .remainder()
        .iter()
        .zip(xb.remainder())
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum();
    for (x, y) in xa.zip(xb) {
        for l in 0..8 {
            acc[l] += f64::from(x[l]) * f64::from(y[l]);
        }
    }
    acc.iter().sum::<f64>() + tail
}

pub(crate) fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of the angle between two vectors.
pub fn cosine_similarity(v: &[f32], w: &[f32]) -> Result<f64> {
    if v.len() != w.len() {
        return Err(Error::Dimension { expected: v.len(), got: w.len() });
    }
    let (nv, nw) = (norm(v), norm(w));
    if nv == 0.0 || nw == 0.0 {
        return Err(Error::Invalid("cosine similarity of a zero vector".into()));
    }
    Ok(dot(v, w) / (nv * nw))
}
