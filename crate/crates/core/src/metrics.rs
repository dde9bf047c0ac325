//! Accuracy@n, support-weighted precision/recall/F1 and Cohen's kappa.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::candidates::{by_mention, Prediction};
use crate::error::{Error, Result};
use crate::text::{MentionKind, Post};

/// Cut-offs reported by default.
pub const DEFAULT_NS: [usize; 5] = [1, 5, 10, 32, 64];

/// Mention id to gold CUI.
pub type GoldLabels = BTreeMap<String, String>;

/// Gold labels and mention kinds of every labelled mention in a corpus.
pub fn gold_from_corpus(posts: &[Post]) -> Result<(GoldLabels, BTreeMap<String, MentionKind>)> {
    let mut gold = GoldLabels::new();
    let mut kinds = BTreeMap::new();
    for m in posts.iter().flat_map(|p| &p.mentions) {
        if kinds.insert(m.id.clone(), m.kind).is_some() {
            return Err(Error::Invalid(format!("duplicate mention id {}", m.id)));
        }
        if let Some(cui) = &m.gold_cui {
            gold.insert(m.id.clone(), cui.clone());
        }
    }
    Ok((gold, kinds))
}

fn gold_of<'a>(gold: &'a GoldLabels, p: &Prediction) -> Result<&'a str> {
    gold.get(&p.mention_id)
        .map(String::as_str)
        .ok_or_else(|| Error::MissingGold(p.mention_id.clone()))
}

/// Fraction of predictions whose gold CUI is among their first `n` candidates.
pub fn accuracy_at(predictions: &[Prediction], gold: &GoldLabels, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invalid("accuracy cut-off must be at least 1".into()));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let mut hits = 0usize;
    for p in predictions {
        let g = gold_of(gold, p)?;
        if p.candidates.iter().take(n).any(|c| c.cui == g) {
            hits += 1;
        }
    }
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold classes that were never predicted; their precision counts as 0.
    pub zero_division_warnings: usize,
    pub support: BTreeMap<String, usize>,
}

/// One-vs-rest precision, recall and F1 per gold class over top-1
/// predictions, averaged with gold-support weights. A mention with no
/// candidates counts as predicting nothing.
pub fn weighted_prf(predictions: &[Prediction], gold: &GoldLabels) -> Result<Prf> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let mut support: BTreeMap<String, usize> = BTreeMap::new();
    let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut predicted: BTreeMap<&str, usize> = BTreeMap::new();
    for p in predictions {
        let g = gold_of(gold, p)?;
        *support.entry(g.to_owned()).or_default() += 1;
        if let Some(top) = p.top() {
            *predicted.entry(top.cui.as_str()).or_default() += 1;
            if top.cui == g {
                *tp.entry(g).or_default() += 1;
            }
        }
    }
    let total = predictions.len() as f64;
    let (mut precision, mut recall, mut f1, mut warnings) = (0.0, 0.0, 0.0, 0);
    for (class, &s) in &support {
        let t = tp.get(class.as_str()).copied().unwrap_or(0) as f64;
        let pred = predicted.get(class.as_str()).copied().unwrap_or(0);
        let p = if pred == 0 {
            warnings += 1;
            0.0
        } else {
            t / pred as f64
        };
        let r = t / s as f64;
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let w = s as f64 / total;
        precision += w * p;
        recall += w * r;
        f1 += w * f;
    }
    Ok(Prf {
        precision,
        recall,
        f1,
        zero_division_warnings: warnings,
        support,
    })
}

/// Kappa of a 2×2 agreement table `[[yes/yes, yes/no], [no/yes, no/no]]`.
/// Perfect agreement with `p_e = 1` is defined as 1.
pub fn cohens_kappa(confusion: [[u64; 2]; 2]) -> Result<f64> {
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let n = total as f64;
    let p_o = (confusion[0][0] + confusion[1][1]) as f64 / n;
    let row = [confusion[0][0] + confusion[0][1], confusion[1][0] + confusion[1][1]];
    let col = [confusion[0][0] + confusion[1][0], confusion[0][1] + confusion[1][1]];
    let p_e = (row[0] * col[0] + row[1] * col[1]) as f64 / (n * n);
    if p_e == 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindBreakdown {
    pub n_mentions: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy_at: BTreeMap<usize, f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_mentions: usize,
    pub zero_division_warnings: usize,
    pub support: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_kind: BTreeMap<MentionKind, KindBreakdown>,
}

/// Top-1 correctness per mention kind.
pub fn per_kind_accuracy(
    predictions: &[Prediction],
    gold: &GoldLabels,
    kinds: &BTreeMap<String, MentionKind>,
) -> Result<BTreeMap<MentionKind, KindBreakdown>> {
    let mut out: BTreeMap<MentionKind, KindBreakdown> = BTreeMap::new();
    for p in predictions {
        let g = gold_of(gold, p)?;
        let Some(kind) = kinds.get(&p.mention_id) else {
            continue;
        };
        let entry = out.entry(*kind).or_insert(KindBreakdown {
            n_mentions: 0,
            correct: 0,
            accuracy: 0.0,
        });
        entry.n_mentions += 1;
        if p.top().is_some_and(|c| c.cui == g) {
            entry.correct += 1;
        }
    }
    for b in out.values_mut() {
        b.accuracy = b.correct as f64 / b.n_mentions as f64;
    }
    Ok(out)
}

/// Full evaluation. Every gold mention needs exactly one prediction and every
/// prediction needs a gold label.
pub fn evaluate(
    predictions: &[Prediction],
    gold: &GoldLabels,
    kinds: Option<&BTreeMap<String, MentionKind>>,
    ns: &[usize],
) -> Result<MetricsReport> {
    let indexed = by_mention(predictions)?;
    for p in predictions {
        gold_of(gold, p)?;
    }
    if let Some(missing) = gold.keys().find(|id| !indexed.contains_key(id.as_str())) {
        return Err(Error::MissingPrediction(missing.clone()));
    }
    let ns: BTreeSet<usize> = ns.iter().copied().collect();
    let mut accuracy = BTreeMap::new();
    for n in ns {
        accuracy.insert(n, accuracy_at(predictions, gold, n)?);
    }
    let prf = weighted_prf(predictions, gold)?;
    let per_kind = match kinds {
        Some(k) => per_kind_accuracy(predictions, gold, k)?,
        None => BTreeMap::new(),
    };
    Ok(MetricsReport {
        accuracy_at: accuracy,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        n_mentions: predictions.len(),
        zero_division_warnings: prf.zero_division_warnings,
        support: prf.support,
        per_kind,
    })
}
