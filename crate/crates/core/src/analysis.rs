//! Rule-based categories for top-1 errors, and edit-distance profiling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::candidates::Prediction;
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::metrics::{per_kind_accuracy, GoldLabels, KindBreakdown};
use crate::string_link::normalized_edit_distance;
use crate::text::{MentionKind, Post};
use crate::text::normalize;

static ABBREVIATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-ZÄÖÜ]{2,3}$").unwrap());

/// Minimum whitespace-separated words for a complex entity.
pub const COMPLEX_MIN_WORDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Abbreviation,
    ComplexEntity,
    SameSynonyms,
    ParentOrChild,
    WrongSemanticType,
    WrongSemanticGroup,
    Unknown,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 7] = [
        ErrorCategory::Abbreviation,
        ErrorCategory::ComplexEntity,
        ErrorCategory::SameSynonyms,
        ErrorCategory::ParentOrChild,
        ErrorCategory::WrongSemanticType,
        ErrorCategory::WrongSemanticGroup,
        ErrorCategory::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Abbreviation => "abbreviation",
            ErrorCategory::ComplexEntity => "complex_entity",
            ErrorCategory::SameSynonyms => "same_synonyms",
            ErrorCategory::ParentOrChild => "parent_or_child",
            ErrorCategory::WrongSemanticType => "wrong_semantic_type",
            ErrorCategory::WrongSemanticGroup => "wrong_semantic_group",
            ErrorCategory::Unknown => "unknown",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn normalized_names(kb: &KnowledgeBase, cui: &str) -> BTreeSet<String> {
    kb.concept(cui)
        .map(|c| c.names.iter().map(|n| normalize(&n.surface)).collect())
        .unwrap_or_default()
}

/// Categories of a wrong top-1 prediction. `surface` is the raw mention text.
pub fn categorize(
    surface: &str,
    predicted: &str,
    gold: &str,
    kb: &KnowledgeBase,
) -> Result<BTreeSet<ErrorCategory>> {
    if predicted == gold {
        return Err(Error::Invalid(format!("prediction {predicted} equals gold; not an error")));
    }
    let missing: Vec<String> =
        [predicted, gold].into_iter().filter(|c| !kb.contains(c)).map(str::to_owned).collect();
    if !missing.is_empty() {
        return Err(Error::UnknownCui(missing));
    }
    let mut out = BTreeSet::new();
    if ABBREVIATION.is_match(surface) {
        out.insert(ErrorCategory::Abbreviation);
    }
    if surface.split_whitespace().count() >= COMPLEX_MIN_WORDS {
        out.insert(ErrorCategory::ComplexEntity);
    }
    if !normalized_names(kb, predicted).is_disjoint(&normalized_names(kb, gold)) {
        out.insert(ErrorCategory::SameSynonyms);
    }
    if kb.is_ancestor(predicted, gold)? || kb.is_ancestor(gold, predicted)? {
        out.insert(ErrorCategory::ParentOrChild);
    }
    if kb.semantic_types(predicted)?.is_disjoint(kb.semantic_types(gold)?) {
        out.insert(ErrorCategory::WrongSemanticType);
    }
    if kb.semantic_groups(predicted)?.is_disjoint(&kb.semantic_groups(gold)?) {
        out.insert(ErrorCategory::WrongSemanticGroup);
    }
    if out.is_empty() {
        out.insert(ErrorCategory::Unknown);
    }
    Ok(out)
}

/// Surface and kind of a mention, keyed by mention id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionInfo {
    pub surface: String,
    pub kind: MentionKind,
}

/// Mention lookup from resolved posts.
pub fn mention_info(posts: &[Post]) -> BTreeMap<String, MentionInfo> {
    posts
        .iter()
        .flat_map(|p| &p.mentions)
        .map(|m| {
            (
                m.id.clone(),
                MentionInfo {
                    surface: m.surface.clone(),
                    kind: m.kind,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub mention_id: String,
    pub surface: String,
    pub kind: MentionKind,
    pub predicted_cui: String,
    pub gold_cui: String,
    pub categories: BTreeSet<ErrorCategory>,
    /// Human-assigned sub-label, e.g. for unknown-class review.
    #[serde(default)]
    pub manual_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub total_errors: usize,
    pub category_counts: BTreeMap<ErrorCategory, usize>,
    pub per_kind: BTreeMap<MentionKind, KindBreakdown>,
    /// Mentions with an empty candidate list; counted as wrong, not categorized.
    pub no_prediction: usize,
    #[serde(skip)]
    pub records: Vec<ErrorRecord>,
}

fn info<'a>(mentions: &'a BTreeMap<String, MentionInfo>, id: &str) -> Result<&'a MentionInfo> {
    mentions
        .get(id)
        .ok_or_else(|| Error::Invalid(format!("mention {id} is not in the corpus")))
}

/// Categorizes every wrong top-1 prediction. Records come out in mention-id
/// order so the report does not depend on prediction order.
pub fn analyze(
    predictions: &[Prediction],
    gold: &GoldLabels,
    mentions: &BTreeMap<String, MentionInfo>,
    kb: &KnowledgeBase,
) -> Result<ErrorReport> {
    let kinds: BTreeMap<String, MentionKind> =
        mentions.iter().map(|(id, m)| (id.clone(), m.kind)).collect();
    let per_kind = per_kind_accuracy(predictions, gold, &kinds)?;
    let mut records = Vec::new();
    let mut no_prediction = 0;
    for p in predictions {
        let g = gold.get(&p.mention_id).ok_or_else(|| Error::MissingGold(p.mention_id.clone()))?;
        let m = info(mentions, &p.mention_id)?;
        let Some(top) = p.top() else {
            no_prediction += 1;
            continue;
        };
        if &top.cui == g {
            continue;
        }
        records.push(ErrorRecord {
            mention_id: p.mention_id.clone(),
            surface: m.surface.clone(),
            kind: m.kind,
            predicted_cui: top.cui.clone(),
            gold_cui: g.clone(),
            categories: categorize(&m.surface, &top.cui, g, kb)?,
            manual_label: None,
        });
    }
    records.sort_by(|a, b| a.mention_id.cmp(&b.mention_id));
    let mut category_counts: BTreeMap<ErrorCategory, usize> =
        ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect();
    for r in &records {
        for c in &r.categories {
            *category_counts.get_mut(c).unwrap() += 1;
        }
    }
    Ok(ErrorReport {
        total_errors: records.len(),
        category_counts,
        per_kind,
        no_prediction,
        records,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    mention_id: &'a str,
    surface: &'a str,
    kind: MentionKind,
    predicted_cui: &'a str,
    gold_cui: &'a str,
    categories: String,
    manual_label: &'a str,
}

/// CSV dump of error records; categories are `;`-joined and `manual_label`
/// is left for a reviewer to fill.
pub fn write_error_csv<W: Write>(out: W, records: &[ErrorRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            mention_id: &r.mention_id,
            surface: &r.surface,
            kind: r.kind,
            predicted_cui: &r.predicted_cui,
            gold_cui: &r.gold_cui,
            categories: r.categories.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(";"),
            manual_label: r.manual_label.as_deref().unwrap_or(""),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Mean normalized edit distance between each mention and the name of its
/// top candidate, both normalized. With `correct_only`, only mentions whose
/// top candidate is the gold concept count.
pub fn edit_distance_profile(
    predictions: &[Prediction],
    gold: &GoldLabels,
    mentions: &BTreeMap<String, MentionInfo>,
    correct_only: bool,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in predictions {
        let Some(top) = p.top() else { continue };
        if correct_only {
            let g = gold.get(&p.mention_id).ok_or_else(|| Error::MissingGold(p.mention_id.clone()))?;
            if &top.cui != g {
                continue;
            }
        }
        let m = info(mentions, &p.mention_id)?;
        sum += normalized_edit_distance(&normalize(&m.surface), &normalize(&top.matched_name));
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("edit-distance selection"));
    }
    Ok(sum / n as f64)
}
