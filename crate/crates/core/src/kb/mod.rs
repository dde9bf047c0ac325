//! Concept store: names, semantic types, hierarchy and semantic groups.
//!
//! A [`KnowledgeBase`] is built once (load, then optionally merge a lexicon)
//! and is read-only afterwards.

mod io;
mod lexicon;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::text::normalize;

pub use io::{CONCEPTS_FILE, GROUPS_FILE, HIERARCHY_FILE, RETIRED_FILE, TYPES_FILE};
pub use lexicon::{read_lexicon, LexiconEntry, MergeReport, LEXICON_SOURCE};

pub const DEFAULT_CUI_PATTERN: &str = r"^C\d{7}$";
pub const TUI_PATTERN: &str = r"^T\d{3}$";

static TUI_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(TUI_PATTERN).unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptName {
    pub surface: String,
    pub cui: String,
    pub source: String,
    pub preferred: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub cui: String,
    pub names: Vec<ConceptName>,
    pub semantic_types: BTreeSet<String>,
    pub retired: bool,
}

impl Concept {
    pub fn preferred_name(&self) -> &ConceptName {
        self.names
            .iter()
            .find(|n| n.preferred)
            .unwrap_or(&self.names[0])
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    concepts: BTreeMap<String, Concept>,
    name_index: HashMap<String, BTreeSet<String>>,
    /// child -> parents
    parents: BTreeMap<String, BTreeSet<String>>,
    group_map: BTreeMap<String, String>,
    cui_pattern: Regex,
    duplicates_skipped: usize,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new()
    }
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::with_cui_pattern(Regex::new(DEFAULT_CUI_PATTERN).unwrap())
    }

    pub fn with_cui_pattern(cui_pattern: Regex) -> Self {
        KnowledgeBase {
            concepts: BTreeMap::new(),
            name_index: HashMap::new(),
            parents: BTreeMap::new(),
            group_map: BTreeMap::new(),
            cui_pattern,
            duplicates_skipped: 0,
        }
    }

    pub fn is_valid_cui(&self, cui: &str) -> bool {
        self.cui_pattern.is_match(cui)
    }

    /// Adds a name, creating the concept if needed. Returns `false` when the
    /// `(cui, surface, source)` triple already exists.
    pub fn add_name(&mut self, name: ConceptName) -> Result<bool> {
        if name.surface.trim().is_empty() {
            return Err(Error::Invalid(format!("empty surface for {}", name.cui)));
        }
        if !self.is_valid_cui(&name.cui) {
            return Err(Error::Invalid(format!("malformed cui {:?}", name.cui)));
        }
        let concept = self
            .concepts
            .entry(name.cui.clone())
            .or_insert_with(|| Concept {
                cui: name.cui.clone(),
                names: Vec::new(),
                semantic_types: BTreeSet::new(),
                retired: false,
            });
        if concept
            .names
            .iter()
            .any(|n| n.surface == name.surface && n.source == name.source)
        {
            self.duplicates_skipped += 1;
            return Ok(false);
        }
        if name.preferred
            && concept
                .names
                .iter()
                .any(|n| n.preferred && n.source == name.source)
        {
            return Err(Error::Invalid(format!(
                "second preferred name for {} in source {}",
                name.cui, name.source
            )));
        }
        self.name_index
            .entry(normalize(&name.surface))
            .or_default()
            .insert(name.cui.clone());
        concept.names.push(name);
        Ok(true)
    }

    pub fn add_semantic_type(&mut self, cui: &str, tui: &str) -> Result<()> {
        if !TUI_RE.is_match(tui) {
            return Err(Error::Invalid(format!("malformed tui {tui:?}")));
        }
        let concept = self
            .concepts
            .get_mut(cui)
            .ok_or_else(|| Error::UnknownCui(vec![cui.to_owned()]))?;
        concept.semantic_types.insert(tui.to_owned());
        Ok(())
    }

    /// Adds a child -> parent edge. Cycles are only detected by
    /// [`Self::check_acyclic`], which the loaders call once per file.
    pub fn add_edge(&mut self, child: &str, parent: &str) -> Result<()> {
        let edge_err = |reason: &str| Error::Hierarchy {
            child: child.to_owned(),
            parent: parent.to_owned(),
            reason: reason.to_owned(),
        };
        if child == parent {
            return Err(edge_err("self-loop"));
        }
        for end in [child, parent] {
            if !self.concepts.contains_key(end) {
                return Err(edge_err(&format!("dangling endpoint {end}")));
            }
        }
        self.parents
            .entry(child.to_owned())
            .or_default()
            .insert(parent.to_owned());
        Ok(())
    }

    pub fn set_group(&mut self, tui: &str, group: &str) {
        self.group_map.insert(tui.to_owned(), group.to_owned());
    }

    pub fn set_retired(&mut self, cui: &str, retired: bool) -> Result<()> {
        let concept = self
            .concepts
            .get_mut(cui)
            .ok_or_else(|| Error::UnknownCui(vec![cui.to_owned()]))?;
        concept.retired = retired;
        Ok(())
    }

    /// Fails with one offending edge if the hierarchy contains a cycle.
    pub fn check_acyclic(&self) -> Result<()> {
        // Kahn's algorithm over child -> parent edges.
        let mut indegree: HashMap<&str, usize> = HashMap::new();
        for (child, parents) in &self.parents {
            indegree.entry(child.as_str()).or_insert(0);
            for p in parents {
                *indegree.entry(p.as_str()).or_insert(0) += 1;
            }
        }
        let mut queue: VecDeque<&str> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&n, _)| n)
            .collect();
        let mut seen = 0;
        while let Some(node) = queue.pop_front() {
            seen += 1;
            if let Some(ps) = self.parents.get(node) {
                for p in ps {
                    let d = indegree.get_mut(p.as_str()).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        queue.push_back(p);
                    }
                }
            }
        }
        if seen == indegree.len() {
            return Ok(());
        }
        let (child, parent) = self
            .parents
            .iter()
            .filter(|(c, _)| indegree[c.as_str()] > 0)
            .flat_map(|(c, ps)| ps.iter().map(move |p| (c, p)))
            .find(|(_, p)| indegree[p.as_str()] > 0)
            .expect("a cycle leaves an edge between unprocessed nodes");
        Err(Error::Hierarchy {
            child: child.clone(),
            parent: parent.clone(),
            reason: "edge lies on a cycle".into(),
        })
    }

    pub fn concept(&self, cui: &str) -> Option<&Concept> {
        self.concepts.get(cui)
    }

    pub fn contains(&self, cui: &str) -> bool {
        self.concepts.contains_key(cui)
    }

    /// Concepts in CUI order.
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &ConceptName> {
        self.concepts.values().flat_map(|c| c.names.iter())
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn name_count(&self) -> usize {
        self.concepts.values().map(|c| c.names.len()).sum()
    }

    pub fn duplicates_skipped(&self) -> usize {
        self.duplicates_skipped
    }

    /// CUIs having a name that normalizes to `key` (already normalized).
    pub fn lookup_normalized(&self, key: &str) -> Option<&BTreeSet<String>> {
        self.name_index.get(key)
    }

    pub fn lookup(&self, surface: &str) -> Option<&BTreeSet<String>> {
        self.lookup_normalized(&normalize(surface))
    }

    /// Rebuilds the name index from scratch and compares it with the live one.
    pub fn name_index_consistent(&self) -> bool {
        let mut fresh: HashMap<String, BTreeSet<String>> = HashMap::new();
        for n in self.names() {
            fresh
                .entry(normalize(&n.surface))
                .or_default()
                .insert(n.cui.clone());
        }
        fresh == self.name_index
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parents
            .iter()
            .flat_map(|(c, ps)| ps.iter().map(move |p| (c.as_str(), p.as_str())))
    }

    pub fn group_of(&self, tui: &str) -> Option<&str> {
        self.group_map.get(tui).map(String::as_str)
    }

    pub fn group_map(&self) -> &BTreeMap<String, String> {
        &self.group_map
    }

    pub fn semantic_types(&self, cui: &str) -> Result<&BTreeSet<String>> {
        self.concepts
            .get(cui)
            .map(|c| &c.semantic_types)
            .ok_or_else(|| Error::UnknownCui(vec![cui.to_owned()]))
    }

    /// Semantic groups of a concept's types. Types without a group mapping
    /// contribute nothing.
    pub fn semantic_groups(&self, cui: &str) -> Result<BTreeSet<&str>> {
        Ok(self
            .semantic_types(cui)?
            .iter()
            .filter_map(|t| self.group_of(t))
            .collect())
    }

    /// True iff following child -> parent edges from `descendant` reaches
    /// `ancestor`. A concept is not its own ancestor.
    pub fn is_ancestor(&self, ancestor: &str, descendant: &str) -> Result<bool> {
        let missing: Vec<String> = [ancestor, descendant]
            .into_iter()
            .filter(|c| !self.contains(c))
            .map(str::to_owned)
            .collect();
        if !missing.is_empty() {
            return Err(Error::UnknownCui(missing));
        }
        if ancestor == descendant {
            return Ok(false);
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::from([descendant]);
        while let Some(node) = queue.pop_front() {
            for p in self.parents.get(node).into_iter().flatten() {
                if p == ancestor {
                    return Ok(true);
                }
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        Ok(false)
    }

    pub fn stats(&self) -> KbStats {
        let mut per_source: BTreeMap<&str, (usize, BTreeSet<&str>)> = BTreeMap::new();
        for n in self.names() {
            let entry = per_source.entry(&n.source).or_default();
            entry.0 += 1;
            entry.1.insert(&n.cui);
        }
        KbStats {
            rows: per_source
                .into_iter()
                .map(|(source, (names, cuis))| SourceStats {
                    source: source.to_owned(),
                    names,
                    concepts: cuis.len(),
                })
                .collect(),
            total_names: self.name_count(),
            total_concepts: self.concept_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceStats {
    pub source: String,
    pub names: usize,
    pub concepts: usize,
}

/// Name and concept counts per source vocabulary. A concept with names from
/// several sources is counted once in each source's row, so the per-source
/// concept column can sum to more than the total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KbStats {
    pub rows: Vec<SourceStats>,
    pub total_names: usize,
    pub total_concepts: usize,
}

impl fmt::Display for KbStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "source\tnames\tconcepts")?;
        for r in &self.rows {
            writeln!(f, "{}\t{}\t{}", r.source, r.names, r.concepts)?;
        }
        writeln!(f, "TOTAL\t{}\t{}", self.total_names, self.total_concepts)
    }
}
