//! Text normalization, stemming, tokenization and mention context.

mod context;
mod corpus;
mod dedup;
mod sentence;
mod stem;

use unicode_normalization::UnicodeNormalization;

pub use context::{context_window, sentence_context, ContextualMention};
pub use corpus::{read_corpus, write_corpus, Mention, MentionKind, Post};
pub use dedup::unique_mentions;
pub use sentence::{split_sentences, Span};
pub use stem::{GermanStemmer, Stemmer};

/// NFC-normalizes, lowercases and collapses runs of whitespace to a single
/// space. Leading and trailing whitespace is removed.
pub fn normalize(text: &str) -> String {
    let composed: String = text.nfc().collect();
    let lower = composed.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for word in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    // Lowercasing can produce decomposed sequences (e.g. 'İ').
    out.nfc().collect()
}

/// Normalizes `text` and stems every whitespace-separated word, re-joining
/// with single spaces.
pub fn normalize_stemmed(text: &str, stemmer: &dyn Stemmer) -> String {
    let norm = normalize(text);
    let mut out = String::with_capacity(norm.len());
    for word in norm.split(' ').filter(|w| !w.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&stemmer.stem(word));
    }
    out
}

/// Key used to compare strings for equality: normalized, and stemmed per word
/// when a stemmer is given.
pub fn match_key(text: &str, stemmer: Option<&dyn Stemmer>) -> String {
    match stemmer {
        Some(s) => normalize_stemmed(text, s),
        None => normalize(text),
    }
}

/// Splits text into tokens.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

impl<T: Tokenizer + ?Sized> Tokenizer for &T {
    fn tokenize(&self, text: &str) -> Vec<String> {
        (**self).tokenize(text)
    }
}

/// Splits on Unicode whitespace; punctuation characters become one-character
/// words of their own.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordTokenizer;

impl Tokenizer for WordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        pre_split(text).into_iter().map(str::to_owned).collect()
    }
}

pub(crate) fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '„' | '“' | '”' | '‚' | '‘' | '’' | '«' | '»' | '–' | '—' | '…' | '·' | '¿' | '¡'
        )
}

/// Word pre-splitting shared by the BPE tokenizer and [`WordTokenizer`].
pub fn pre_split(text: &str) -> Vec<&str> {
    let mut words = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() || is_punctuation(c) {
            if let Some(s) = start.take() {
                words.push(&text[s..i]);
            }
            if !c.is_whitespace() {
                words.push(&text[i..i + c.len_utf8()]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        words.push(&text[s..]);
    }
    words
}

/// Byte offset of the `char_idx`-th code point, or `text.len()` at the end.
pub(crate) fn byte_offset(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in text.char_indices() {
        if count == char_idx {
            return Some(b);
        }
        count += 1;
    }
    (count == char_idx).then_some(text.len())
}

/// Slice by code-point offsets, end exclusive.
pub(crate) fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    let s = byte_offset(text, start)?;
    let e = byte_offset(text, end)?;
    (s <= e).then(|| &text[s..e])
}
