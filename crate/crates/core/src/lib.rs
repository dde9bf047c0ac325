//! Concept normalization toolkit.
//!
//! Links free-text medical mentions to concepts of a UMLS-style knowledge base
//! with two candidate generators (edit distance over a stemmed name index, and
//! cosine similarity over name embeddings), re-ranks candidates with context,
//! and evaluates the result with top-n accuracy, support-weighted
//! precision/recall/F1 and a rule-based error taxonomy. The [`align`] module
//! holds the metric-learning math (hard-pair mining, multi-similarity loss,
//! triplet loss) over a trainable linear projection.
//!
//! The guide under `book/` walks through each module; its code snippets are
//! compiled and run as doctests of this crate.

pub mod align;
pub mod analysis;
pub mod bpe;
pub mod candidates;
pub mod embed;
pub mod error;
pub mod kb;
pub mod metrics;
pub mod pipeline;
pub mod rerank;
pub mod string_link;
pub mod text;

pub use candidates::{Candidate, Prediction};
pub use error::{Error, Result};
pub use kb::KnowledgeBase;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/knowledge-base.md")]
    mod knowledge_base {}
    #[doc = include_str!("../../../book/src/text.md")]
    mod text {}
    #[doc = include_str!("../../../book/src/bpe.md")]
    mod bpe {}
    #[doc = include_str!("../../../book/src/string-linking.md")]
    mod string_linking {}
    #[doc = include_str!("../../../book/src/embedding-linking.md")]
    mod embedding_linking {}
    #[doc = include_str!("../../../book/src/self-alignment.md")]
    mod self_alignment {}
    #[doc = include_str!("../../../book/src/reranking.md")]
    mod reranking {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/error-analysis.md")]
    mod error_analysis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
