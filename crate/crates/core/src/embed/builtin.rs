use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TokenEmbeddings, TokenKind};
use crate::bpe::{Bpe, CLS_ID, SEP_ID, SPECIAL_TOKENS, UNK_ID};
use crate::error::Result;
use crate::text::pre_split;

/// Produces per-token vectors for a text or an already tokenized sequence.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_text(&self, text: &str) -> Result<TokenEmbeddings>;

    /// Embeds BPE token strings as produced by the tokenizer's `tokenize`.
    fn embed_tokens(&self, tokens: &[String]) -> Result<TokenEmbeddings>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // final avalanche so the low bits used for bucketing are well mixed
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

/// Character trigrams of a token piece; pieces shorter than three characters
/// are a single gram.
pub(crate) fn trigrams(piece: &str) -> Vec<String> {
    let chars: Vec<char> = piece.replace(crate::bpe::END_OF_WORD, "$").chars().collect();
    if chars.len() < 3 {
        return vec![chars.into_iter().collect()];
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Deterministic stand-in for a transformer encoder.
///
/// Each token row is a seeded random vector from a per-token table plus a
/// signed feature-hashed vector of the token's character trigrams, so tokens
/// that share spelling share direction. `[CLS]` and `[SEP]` rows come from the
/// table only.
#[derive(Debug, Clone)]
pub struct BuiltinEmbedder {
    bpe: Arc<Bpe>,
    dim: usize,
    seed: u64,
    table: Vec<f32>,
}

impl BuiltinEmbedder {
    pub fn new(bpe: Arc<Bpe>, dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f32).sqrt();
        let table = (0..bpe.vocab().len() * dim)
            .map(|_| rng.random_range(-1.0f32..1.0) * scale)
            .collect();
        BuiltinEmbedder { bpe, dim, seed, table }
    }

    pub fn bpe(&self) -> &Bpe {
        &self.bpe
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn table_row(&self, id: u32) -> &[f32] {
        &self.table[id as usize * self.dim..(id as usize + 1) * self.dim]
    }

    /// The hashed trigram part of a token row.
    pub fn trigram_vector(&self, piece: &str) -> Vec<f32> {
        let grams = trigrams(piece);
        let weight = 1.0 / (grams.len() as f32).sqrt();
        let mut v = vec![0f32; self.dim];
        for g in grams {
            let h = fnv1a(self.seed, g.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign * weight;
        }
        v
    }

    fn push_row(&self, data: &mut Vec<f32>, id: u32, piece: Option<&str>) {
        let base = self.table_row(id);
        match piece {
            Some(p) => {
                let tri = self.trigram_vector(p);
                data.extend(base.iter().zip(&tri).map(|(a, b)| a + b));
            }
            None => data.extend_from_slice(base),
        }
    }

    fn assemble<'a>(&self, pieces: impl Iterator<Item = (u32, &'a str)>) -> Result<TokenEmbeddings> {
        let mut data = Vec::new();
        let mut mask = vec![TokenKind::Cls];
        self.push_row(&mut data, CLS_ID, None);
        for (id, piece) in pieces {
            self.push_row(&mut data, id, Some(piece));
            mask.push(TokenKind::Regular);
        }
        self.push_row(&mut data, SEP_ID, None);
        mask.push(TokenKind::Sep);
        TokenEmbeddings::new(self.dim, data, mask)
    }
}

impl Embedder for BuiltinEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<TokenEmbeddings> {
        let symbols: Vec<String> = pre_split(text)
            .into_iter()
            .flat_map(|w| self.bpe.word_symbols(w))
            .collect();
        let vocab = self.bpe.vocab();
        self.assemble(
            symbols
                .iter()
                .map(|s| (vocab.id(s).unwrap_or(UNK_ID), s.as_str())),
        )
    }

    fn embed_tokens(&self, tokens: &[String]) -> Result<TokenEmbeddings> {
        let vocab = self.bpe.vocab();
        self.assemble(tokens.iter().filter_map(|t| {
            let id = vocab.id(t).unwrap_or(UNK_ID);
            // specials other than [UNK] are not content
            ((id as usize) >= SPECIAL_TOKENS.len() || id == UNK_ID).then_some((id, t.as_str()))
        }))
    }
}
