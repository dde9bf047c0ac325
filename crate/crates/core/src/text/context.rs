use serde::{Deserialize, Serialize};

use super::{char_slice, split_sentences, Mention, Post, Span, Tokenizer};
use crate::error::{Error, Result};

/// A mention with the tokens before (`ctx_a`) and after (`ctx_b`) it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextualMention {
    pub ctx_a: Vec<String>,
    pub mention_tokens: Vec<String>,
    pub ctx_b: Vec<String>,
    /// Start and end (exclusive) of the mention within [`Self::tokens`].
    pub mention_token_span: (usize, usize),
}

impl ContextualMention {
    fn assemble(ctx_a: Vec<String>, mention_tokens: Vec<String>, ctx_b: Vec<String>) -> Self {
        let span = (ctx_a.len(), ctx_a.len() + mention_tokens.len());
        ContextualMention {
            ctx_a,
            mention_tokens,
            ctx_b,
            mention_token_span: span,
        }
    }

    /// `ctx_a ++ mention_tokens ++ ctx_b`
    pub fn tokens(&self) -> Vec<String> {
        let mut all = Vec::with_capacity(self.len());
        all.extend_from_slice(&self.ctx_a);
        all.extend_from_slice(&self.mention_tokens);
        all.extend_from_slice(&self.ctx_b);
        all
    }

    pub fn len(&self) -> usize {
        self.ctx_a.len() + self.mention_tokens.len() + self.ctx_b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn slice(post: &Post, start: usize, end: usize) -> Result<&str> {
    char_slice(&post.text, start, end)
        .ok_or_else(|| Error::Invalid(format!("span {start}..{end} outside post {}", post.id)))
}

/// Fixed-budget context window around a mention.
///
/// With `b = total_tokens - |m|`, the left context gets at most `ceil(b/2)`
/// tokens and the right context at most `floor(b/2)`. Budget left unused on a
/// side that hits the post boundary is not moved to the other side.
///
/// The post is tokenized as three pieces (before, mention, after), so the
/// result is always a contiguous run of that token sequence.
pub fn context_window(
    post: &Post,
    mention: &Mention,
    total_tokens: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<ContextualMention> {
    let surface = slice(post, mention.start, mention.end)?;
    let mention_tokens = tokenizer.tokenize(surface);
    if mention_tokens.len() > total_tokens {
        return Err(Error::Invalid(format!(
            "mention {} has {} tokens, more than the window of {}",
            mention.id,
            mention_tokens.len(),
            total_tokens
        )));
    }
    let budget = total_tokens - mention_tokens.len();
    let left_budget = budget.div_ceil(2);
    let right_budget = budget / 2;

    let n_chars = post.text.chars().count();
    let before = tokenizer.tokenize(slice(post, 0, mention.start)?);
    let after = tokenizer.tokenize(slice(post, mention.end, n_chars)?);
    let ctx_a = before[before.len().saturating_sub(left_budget)..].to_vec();
    let ctx_b = after.into_iter().take(right_budget).collect();
    Ok(ContextualMention::assemble(ctx_a, mention_tokens, ctx_b))
}

/// The sentence containing the mention, split into the parts before and after
/// it. If the mention crosses sentence boundaries the overlapping sentences
/// are merged.
pub fn sentence_context(
    post: &Post,
    mention: &Mention,
    tokenizer: &dyn Tokenizer,
) -> Result<ContextualMention> {
    let surface = slice(post, mention.start, mention.end)?;
    let sentence = enclosing_sentence(&split_sentences(&post.text), mention.start, mention.end);
    let before = slice(post, sentence.start, mention.start)?;
    let after = slice(post, mention.end, sentence.end)?;
    Ok(ContextualMention::assemble(
        tokenizer.tokenize(before),
        tokenizer.tokenize(surface),
        tokenizer.tokenize(after),
    ))
}

/// Smallest union of sentence spans covering `start..end`.
pub(crate) fn enclosing_sentence(spans: &[Span], start: usize, end: usize) -> Span {
    let mut out = Span::new(start, end);
    for s in spans.iter().filter(|s| s.overlaps(start, end)) {
        out.start = out.start.min(s.start);
        out.end = out.end.max(s.end);
    }
    out
}
