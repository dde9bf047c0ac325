//! Corpus-level glue: mention token sequences under a context mode, mention
//! embedding and linking whole corpora.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::Prediction;
use crate::embed::{pool, Embedder, EmbeddingMatrix, EmbeddingSearcher, ExtractionConfig};
use crate::error::{Error, Result};
use crate::string_link::StringIndex;
use crate::text::{context_window, sentence_context, ContextualMention};
use crate::text::{Mention, Post};
use crate::text::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    /// The mention alone.
    None,
    /// A fixed token budget around the mention.
    Window,
    /// The enclosing sentence, cut down to a maximum length.
    Sentence,
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextMode::None => "none",
            ContextMode::Window => "window",
            ContextMode::Sentence => "sentence",
        })
    }
}

impl FromStr for ContextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ContextMode::None),
            "window" => Ok(ContextMode::Window),
            "sentence" => Ok(ContextMode::Sentence),
            other => Err(Error::Invalid(format!("unknown context mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSettings {
    pub mode: ContextMode,
    pub window_tokens: usize,
    pub max_sentence_tokens: usize,
}

impl Default for ContextSettings {
    fn default() -> Self {
        ContextSettings {
            mode: ContextMode::None,
            window_tokens: 64,
            max_sentence_tokens: 150,
        }
    }
}

/// Cuts a contextual mention down to `total` tokens with the window split
/// (left gets the ceiling of half the remaining budget).
pub fn truncate_context(cm: ContextualMention, total: usize) -> Result<ContextualMention> {
    if cm.len() <= total {
        return Ok(cm);
    }
    let m = cm.mention_tokens.len();
    if m > total {
        return Err(Error::Invalid(format!("mention of {m} tokens exceeds the limit of {total}")));
    }
    let budget = total - m;
    let left = budget.div_ceil(2).min(cm.ctx_a.len());
    let right = (budget / 2).min(cm.ctx_b.len());
    let ctx_a = cm.ctx_a[cm.ctx_a.len() - left..].to_vec();
    let ctx_b = cm.ctx_b[..right].to_vec();
    Ok(ContextualMention {
        mention_token_span: (ctx_a.len(), ctx_a.len() + m),
        ctx_a,
        mention_tokens: cm.mention_tokens,
        ctx_b,
    })
}

/// The token sequence fed to the embedder for one mention.
pub fn mention_context(
    post: &Post,
    mention: &Mention,
    tokenizer: &dyn Tokenizer,
    settings: ContextSettings,
) -> Result<ContextualMention> {
    match settings.mode {
        ContextMode::None => {
            let tokens = tokenizer.tokenize(&mention.surface);
            Ok(ContextualMention {
                mention_token_span: (0, tokens.len()),
                ctx_a: Vec::new(),
                mention_tokens: tokens,
                ctx_b: Vec::new(),
            })
        }
        ContextMode::Window => context_window(post, mention, settings.window_tokens, tokenizer),
        ContextMode::Sentence => truncate_context(
            sentence_context(post, mention, tokenizer)?,
            settings.max_sentence_tokens,
        ),
    }
}

/// One pooled vector per mention, rows in corpus order, ids = mention ids.
pub fn embed_mentions(
    posts: &[Post],
    embedder: &dyn Embedder,
    tokenizer: &dyn Tokenizer,
    settings: ContextSettings,
    cfg: ExtractionConfig,
) -> Result<EmbeddingMatrix> {
    let items: Vec<(&Post, &Mention)> =
        posts.iter().flat_map(|p| p.mentions.iter().map(move |m| (p, m))).collect();
    let rows = items
        .par_iter()
        .map(|(post, m)| {
            let cm = mention_context(post, m, tokenizer, settings)?;
            let te = embedder.embed_tokens(&cm.tokens())?;
            Ok((m.id.clone(), pool(&te, cfg)?))
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingMatrix::from_rows(rows, embedder.dim())
}

/// Links every row of a mention matrix against a name index.
pub fn link_mentions_embedding(
    index: &EmbeddingMatrix,
    mentions: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<Prediction>> {
    let searcher = EmbeddingSearcher::new(index)?;
    let lists = searcher.search_all(mentions, k)?;
    Ok(mentions
        .ids()
        .iter()
        .zip(lists)
        .map(|(id, candidates)| Prediction {
            mention_id: id.clone(),
            candidates,
        })
        .collect())
}

/// Links every mention of a corpus by edit distance.
pub fn link_corpus_string(posts: &[Post], index: &StringIndex, k: usize) -> Result<Vec<Prediction>> {
    let mentions: Vec<&Mention> = posts.iter().flat_map(|p| &p.mentions).collect();
    let surfaces: Vec<&str> = mentions.iter().map(|m| m.surface.as_str()).collect();
    let lists = index.link_batch(&surfaces, k)?;
    Ok(mentions
        .iter()
        .zip(lists)
        .map(|(m, candidates)| Prediction {
            mention_id: m.id.clone(),
            candidates,
        })
        .collect())
}
