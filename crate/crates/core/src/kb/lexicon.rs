use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConceptName, KnowledgeBase};
use crate::error::{Error, Result};
use crate::text::{match_key, Stemmer};

/// Source tag given to names added from an auxiliary lexicon.
pub const LEXICON_SOURCE: &str = "LEXICON";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub headword: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

/// Reads a LEX1 JSON-lines lexicon.
pub fn read_lexicon(path: impl AsRef<Path>) -> Result<Vec<LexiconEntry>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LexiconEntry =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if entry.headword.trim().is_empty() {
            return Err(Error::parse(path, i + 1, "empty headword"));
        }
        entries.push(entry);
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MergeReport {
    pub cuis_extended: usize,
    pub names_added: usize,
    pub skipped_ambiguous: usize,
    pub skipped_unmatched: usize,
}

impl KnowledgeBase {
    /// Adds lexicon entries whose headword names exactly one concept.
    ///
    /// Matching compares normalized strings, stemmed per word when a stemmer
    /// is given, and always runs against the names present before the merge.
    /// The headword and its synonyms become names of the matched concept with
    /// source [`LEXICON_SOURCE`]. Entries matching no concept or several are
    /// counted and skipped.
    pub fn merge_lexicon(
        &mut self,
        entries: &[LexiconEntry],
        stemmer: Option<&dyn Stemmer>,
    ) -> MergeReport {
        let stemmed_index: Option<HashMap<String, BTreeSet<String>>> = stemmer.map(|s| {
            let mut idx: HashMap<String, BTreeSet<String>> = HashMap::new();
            for n in self.names() {
                idx.entry(match_key(&n.surface, Some(s)))
                    .or_default()
                    .insert(n.cui.clone());
            }
            idx
        });

        let mut report = MergeReport::default();
        let mut additions: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for entry in entries {
            let key = match_key(&entry.headword, stemmer);
            let hits = match &stemmed_index {
                Some(idx) => idx.get(&key),
                None => self.lookup_normalized(&key),
            };
            match hits.map(BTreeSet::len).unwrap_or(0) {
                0 => report.skipped_unmatched += 1,
                1 => {
                    let cui = hits.unwrap().iter().next().unwrap().clone();
                    let surfaces = additions.entry(cui).or_default();
                    surfaces.push(entry.headword.clone());
                    surfaces.extend(entry.synonyms.iter().cloned());
                }
                _ => report.skipped_ambiguous += 1,
            }
        }

        for (cui, surfaces) in additions {
            let mut added_here = 0;
            for surface in surfaces {
                if surface.trim().is_empty() {
                    continue;
                }
                let name = ConceptName {
                    surface,
                    cui: cui.clone(),
                    source: LEXICON_SOURCE.to_owned(),
                    preferred: false,
                };
                // cui exists and the surface is non-empty, so this cannot fail
                if self.add_name(name).unwrap_or(false) {
                    added_here += 1;
                }
            }
            if added_here > 0 {
                report.cuis_extended += 1;
                report.names_added += added_here;
            }
        }
        report
    }
}
