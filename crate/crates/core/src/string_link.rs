//! Edit-distance candidate generation over a stemmed name index.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::candidates::{renumber, Candidate};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::text::{match_key, GermanStemmer, Stemmer};

/// Unit-cost Levenshtein distance over code points.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_bounded(&a, &b, usize::MAX).unwrap()
}

/// Levenshtein distance if it is at most `max`, otherwise `None`.
pub fn levenshtein_bounded(a: &[char], b: &[char], max: usize) -> Option<usize> {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if a.len() - b.len() > max {
        return None;
    }
    if b.is_empty() {
        return Some(a.len());
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > max {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= max).then_some(d)
}

/// Levenshtein distance divided by the longer length; 0 for two empty strings.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / longest as f64
}

/// How candidate scores are reported. Both are "higher is better".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ScoreKind {
    /// `-distance`
    #[default]
    NegDistance,
    /// `1 - normalized distance`
    Similarity,
}

#[derive(Clone)]
pub struct StringPipeline {
    pub stemmer: Option<Arc<dyn Stemmer>>,
    pub score: ScoreKind,
}

impl Default for StringPipeline {
    fn default() -> Self {
        StringPipeline {
            stemmer: Some(Arc::new(GermanStemmer)),
            score: ScoreKind::NegDistance,
        }
    }
}

impl StringPipeline {
    pub fn term(&self, text: &str) -> String {
        match_key(text, self.stemmer.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub term: String,
    pub original_name: String,
    pub cui: String,
    chars: Vec<char>,
}

/// In-memory name index. Each entry's term is the name normalized and
/// stemmed per word under the index's pipeline.
pub struct StringIndex {
    entries: Vec<IndexEntry>,
    pipeline: StringPipeline,
}

/// One entry per `(name, cui)` pair of every non-retired concept.
pub fn build_string_index(kb: &KnowledgeBase, pipeline: StringPipeline) -> StringIndex {
    let mut seen = std::collections::HashSet::new();
    let entries: Vec<IndexEntry> = kb
        .concepts()
        .filter(|c| !c.retired)
        .flat_map(|c| c.names.iter())
        // the same surface from two sources yields one entry
        .filter(|n| seen.insert((n.cui.as_str(), n.surface.as_str())))
        .map(|n| {
            let term = pipeline.term(&n.surface);
            IndexEntry {
                chars: term.chars().collect(),
                term,
                original_name: n.surface.clone(),
                cui: n.cui.clone(),
            }
        })
        .collect();
    StringIndex { entries, pipeline }
}

/// Per-CUI best match while scanning.
struct Best<'a> {
    cost: f64,
    name: &'a str,
}

impl StringIndex {
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pipeline(&self) -> &StringPipeline {
        &self.pipeline
    }

    /// Top-`k` distinct concepts for a mention.
    ///
    /// The query goes through the same normalize+stem pipeline as the index.
    /// Each CUI is represented by its best-scoring name; ties are broken by
    /// `(distance, cui, name)` ascending.
    pub fn link(&self, mention: &str, k: usize) -> Result<Vec<Candidate>> {
        if k == 0 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        if self.entries.is_empty() {
            return Err(Error::Empty("string index"));
        }
        let query = self.pipeline.term(mention);
        let q: Vec<char> = query.chars().collect();
        let prune = self.pipeline.score == ScoreKind::NegDistance;

        let mut best: HashMap<&str, Best<'_>> = HashMap::new();
        // Upper bound on the final k-th best distinct-CUI distance.
        let mut threshold = usize::MAX;
        for (i, e) in self.entries.iter().enumerate() {
            if prune && i % 1024 == 0 && best.len() >= k {
                let mut costs: Vec<f64> = best.values().map(|b| b.cost).collect();
                let (_, kth, _) = costs.select_nth_unstable_by(k - 1, f64::total_cmp);
                threshold = *kth as usize;
            }
            let cost = if prune {
                match levenshtein_bounded(&q, &e.chars, threshold) {
                    Some(d) => d as f64,
                    None => continue,
                }
            } else {
                let longest = q.len().max(e.chars.len());
                if longest == 0 {
                    0.0
                } else {
                    levenshtein_bounded(&q, &e.chars, usize::MAX).unwrap() as f64 / longest as f64
                }
            };
            let name = e.original_name.as_str();
            best.entry(e.cui.as_str())
                .and_modify(|b| {
                    if (cost, name) < (b.cost, b.name) {
                        *b = Best { cost, name };
                    }
                })
                .or_insert(Best { cost, name });
        }

        let mut ranked: Vec<(&str, Best<'_>)> = best.into_iter().collect();
        ranked.sort_by(|(ca, a), (cb, b)| {
            a.cost
                .total_cmp(&b.cost)
                .then_with(|| ca.cmp(cb))
                .then_with(|| a.name.cmp(b.name))
        });
        ranked.truncate(k);
        let mut out: Vec<Candidate> = ranked
            .into_iter()
            .map(|(cui, b)| Candidate {
                cui: cui.to_owned(),
                matched_name: b.name.to_owned(),
                score: match self.pipeline.score {
                    ScoreKind::NegDistance => -b.cost,
                    ScoreKind::Similarity => 1.0 - b.cost,
                },
                rank: 0,
            })
            .collect();
        renumber(&mut out);
        Ok(out)
    }

    /// Links many mentions in parallel; output order follows input order.
    pub fn link_batch(&self, mentions: &[&str], k: usize) -> Result<Vec<Vec<Candidate>>> {
        mentions.par_iter().map(|m| self.link(m, k)).collect()
    }
}

pub fn link_string(index: &StringIndex, mention: &str, k: usize) -> Result<Vec<Candidate>> {
    index.link(mention, k)
}
