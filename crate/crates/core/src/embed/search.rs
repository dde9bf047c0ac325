use std::collections::HashMap;

use rayon::prelude::*;

use super::{dot, norm, pool, Embedder, EmbeddingMatrix, ExtractionConfig};
use crate::candidates::{renumber, Candidate};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;

/// Row id of a name in an index: `cui<TAB>surface`.
pub fn name_key(cui: &str, surface: &str) -> String {
    format!("{cui}\t{surface}")
}

pub fn split_name_key(key: &str) -> Option<(&str, &str)> {
    key.split_once('\t')
}

/// Embeds every name of every non-retired concept, one row per name.
pub fn build_embedding_index(
    kb: &KnowledgeBase,
    embedder: &dyn Embedder,
    cfg: ExtractionConfig,
) -> Result<EmbeddingMatrix> {
    let mut seen = std::collections::HashSet::new();
    let names: Vec<(&str, &str)> = kb
        .concepts()
        .filter(|c| !c.retired)
        .flat_map(|c| c.names.iter())
        .map(|n| (n.cui.as_str(), n.surface.as_str()))
        .filter(|p| seen.insert(*p))
        .collect();
    embed_names(&names, embedder, cfg)
}

/// Embeds `(cui, surface)` pairs in order.
pub fn embed_names(
    names: &[(&str, &str)],
    embedder: &dyn Embedder,
    cfg: ExtractionConfig,
) -> Result<EmbeddingMatrix> {
    let rows: Vec<(String, Vec<f32>)> = names
        .par_iter()
        .map(|(cui, surface)| {
            let te = embedder.embed_text(surface)?;
            Ok((name_key(cui, surface), pool(&te, cfg)?))
        })
        .collect::<Result<_>>()?;
    EmbeddingMatrix::from_rows(rows, embedder.dim())
}

/// Exhaustive cosine search over a name index, deduplicated to concepts.
pub struct EmbeddingSearcher<'a> {
    index: &'a EmbeddingMatrix,
    norms: Vec<f64>,
    /// Concept slot of each row.
    row_cui: Vec<usize>,
    row_name: Vec<&'a str>,
    cuis: Vec<&'a str>,
}

impl<'a> EmbeddingSearcher<'a> {
    pub fn new(index: &'a EmbeddingMatrix) -> Result<Self> {
        if index.rows() == 0 {
            return Err(Error::Empty("embedding index"));
        }
        let mut slots: HashMap<&str, usize> = HashMap::new();
        let mut cuis = Vec::new();
        let mut row_cui = Vec::with_capacity(index.rows());
        let mut row_name = Vec::with_capacity(index.rows());
        for id in index.ids() {
            let (cui, name) = split_name_key(id).ok_or_else(|| {
                Error::Invalid(format!("index id {id:?} is not a `cui<TAB>name` key"))
            })?;
            let slot = *slots.entry(cui).or_insert_with(|| {
                cuis.push(cui);
                cuis.len() - 1
            });
            row_cui.push(slot);
            row_name.push(name);
        }
        let norms = (0..index.rows())
            .into_par_iter()
            .map(|i| norm(index.row(i)))
            .collect();
        Ok(EmbeddingSearcher {
            index,
            norms,
            row_cui,
            row_name,
            cuis,
        })
    }

    pub fn concept_count(&self) -> usize {
        self.cuis.len()
    }

    /// Top-`k` concepts by cosine similarity of their best name. Ties are
    /// broken by `(-score, cui, name)` ascending. Zero rows never match.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<Candidate>> {
        if k == 0 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        if query.len() != self.index.dim() {
            return Err(Error::Dimension {
                expected: self.index.dim(),
                got: query.len(),
            });
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(Error::Invalid("query vector is zero".into()));
        }
        let mut best = vec![f64::NEG_INFINITY; self.cuis.len()];
        let mut best_row = vec![usize::MAX; self.cuis.len()];
        for (i, row) in self.index.data().chunks_exact(self.index.dim()).enumerate() {
            let rn = self.norms[i];
            if rn == 0.0 {
                continue;
            }
            let s = dot(query, row) / (qn * rn);
            let slot = self.row_cui[i];
            if s > best[slot]
                || (s == best[slot] && self.row_name[i] < self.row_name[best_row[slot]])
            {
                best[slot] = s;
                best_row[slot] = i;
            }
        }
        let order = |a: &usize, b: &usize| {
            best[*b]
                .total_cmp(&best[*a])
                .then_with(|| self.cuis[*a].cmp(self.cuis[*b]))
                .then_with(|| self.row_name[best_row[*a]].cmp(self.row_name[best_row[*b]]))
        };
        let mut slots: Vec<usize> = (0..self.cuis.len())
            .filter(|&s| best_row[s] != usize::MAX)
            .collect();
        if slots.len() > k {
            slots.select_nth_unstable_by(k - 1, order);
            slots.truncate(k);
        }
        slots.sort_by(order);
        let mut out: Vec<Candidate> = slots
            .into_iter()
            .map(|s| Candidate {
                cui: self.cuis[s].to_owned(),
                matched_name: self.row_name[best_row[s]].to_owned(),
                score: best[s],
                rank: 0,
            })
            .collect();
        renumber(&mut out);
        Ok(out)
    }

    /// Searches every row of `queries` in parallel.
    pub fn search_all(&self, queries: &EmbeddingMatrix, k: usize) -> Result<Vec<Vec<Candidate>>> {
        (0..queries.rows())
            .into_par_iter()
            .map(|i| self.search(queries.row(i), k))
            .collect()
    }
}

/// One-shot search; prefer [`EmbeddingSearcher`] for many queries.
pub fn link_embedding(index: &EmbeddingMatrix, mention_vec: &[f32], k: usize) -> Result<Vec<Candidate>> {
    EmbeddingSearcher::new(index)?.search(mention_vec, k)
}
