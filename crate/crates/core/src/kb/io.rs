//! TSV readers and writers for the concept, type, hierarchy and group tables.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{ConceptName, KnowledgeBase};
use crate::error::{Error, Result};

pub const CONCEPTS_FILE: &str = "concepts.tsv";
pub const TYPES_FILE: &str = "types.tsv";
pub const HIERARCHY_FILE: &str = "hierarchy.tsv";
pub const GROUPS_FILE: &str = "groups.tsv";
pub const RETIRED_FILE: &str = "retired.txt";

const CONC1_HEADER: &str = "cui\tsurface\tsource\tpreferred";
const TYPE1_HEADER: &str = "cui\ttui";
const HIER1_HEADER: &str = "child_cui\tparent_cui";
const GRP1_HEADER: &str = "tui\tgroup";

/// Yields `(line_number, fields)` for every data row after the header.
fn tsv_rows(
    path: &Path,
    header: &str,
    columns: usize,
    mut row: impl FnMut(usize, Vec<&str>) -> Result<()>,
) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen_header = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if !seen_header {
            if line != header {
                return Err(Error::parse(path, lineno, format!("expected header {header:?}")));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {columns} columns, found {}", fields.len()),
            ));
        }
        row(lineno, fields).map_err(|e| match e {
            Error::Parse { .. } => e,
            other => Error::parse(path, lineno, other.to_string()),
        })?;
    }
    if !seen_header {
        return Err(Error::parse(path, 1, format!("missing header {header:?}")));
    }
    Ok(())
}

impl KnowledgeBase {
    /// Reads a CONC1 table into a fresh knowledge base.
    pub fn load_concept_table(path: impl AsRef<Path>) -> Result<Self> {
        let mut kb = KnowledgeBase::new();
        kb.read_concept_table(path)?;
        Ok(kb)
    }

    /// Reads a CONC1 table into this knowledge base (keeps its CUI pattern).
    pub fn read_concept_table(&mut self, path: impl AsRef<Path>) -> Result<()> {
        tsv_rows(path.as_ref(), CONC1_HEADER, 4, |_, f| {
            let preferred = match f[3] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Invalid(format!("preferred must be 0 or 1, got {other:?}"))),
            };
            self.add_name(ConceptName {
                cui: f[0].to_owned(),
                surface: f[1].to_owned(),
                source: f[2].to_owned(),
                preferred,
            })?;
            Ok(())
        })
    }

    /// Reads a TYPE1 table. Every row is checked before anything is applied;
    /// unknown CUIs are reported together.
    pub fn load_semantic_types(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let mut pairs = Vec::new();
        let mut unknown = BTreeSet::new();
        tsv_rows(path.as_ref(), TYPE1_HEADER, 2, |_, f| {
            if !self.contains(f[0]) {
                unknown.insert(f[0].to_owned());
            }
            pairs.push((f[0].to_owned(), f[1].to_owned()));
            Ok(())
        })?;
        if !unknown.is_empty() {
            return Err(Error::UnknownCui(unknown.into_iter().collect()));
        }
        for (cui, tui) in pairs {
            self.add_semantic_type(&cui, &tui)?;
        }
        Ok(())
    }

    /// Reads a HIER1 table and rejects cycles.
    pub fn load_hierarchy(&mut self, path: impl AsRef<Path>) -> Result<()> {
        tsv_rows(path.as_ref(), HIER1_HEADER, 2, |_, f| self.add_edge(f[0], f[1]))?;
        self.check_acyclic()
    }

    /// Reads a GRP1 table.
    pub fn load_semantic_groups(&mut self, path: impl AsRef<Path>) -> Result<()> {
        tsv_rows(path.as_ref(), GRP1_HEADER, 2, |_, f| {
            if f[0].is_empty() || f[1].is_empty() {
                return Err(Error::Invalid("empty tui or group".into()));
            }
            self.set_group(f[0], f[1]);
            Ok(())
        })
    }

    /// Reads a list of retired CUIs, one per line.
    pub fn load_retired(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let cui = line.trim();
            if cui.is_empty() {
                continue;
            }
            self.set_retired(cui, true)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    /// Loads a knowledge-base directory. Only `concepts.tsv` is required.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut kb = Self::load_concept_table(dir.join(CONCEPTS_FILE))?;
        if dir.join(TYPES_FILE).exists() {
            kb.load_semantic_types(dir.join(TYPES_FILE))?;
        }
        if dir.join(HIERARCHY_FILE).exists() {
            kb.load_hierarchy(dir.join(HIERARCHY_FILE))?;
        }
        if dir.join(GROUPS_FILE).exists() {
            kb.load_semantic_groups(dir.join(GROUPS_FILE))?;
        }
        if dir.join(RETIRED_FILE).exists() {
            kb.load_retired(dir.join(RETIRED_FILE))?;
        }
        Ok(kb)
    }

    /// Writes CONC1 rows in canonical `(cui, surface, source)` order.
    pub fn save_concept_table<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CONC1_HEADER}")?;
        let mut names: Vec<&ConceptName> = self.names().collect();
        names.sort_by(|a, b| (&a.cui, &a.surface, &a.source).cmp(&(&b.cui, &b.surface, &b.source)));
        for n in names {
            writeln!(out, "{}\t{}\t{}\t{}", n.cui, n.surface, n.source, u8::from(n.preferred))?;
        }
        Ok(())
    }

    pub fn save_semantic_types<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TYPE1_HEADER}")?;
        for c in self.concepts() {
            for t in &c.semantic_types {
                writeln!(out, "{}\t{}", c.cui, t)?;
            }
        }
        Ok(())
    }

    pub fn save_hierarchy<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{HIER1_HEADER}")?;
        for (c, p) in self.edges() {
            writeln!(out, "{c}\t{p}")?;
        }
        Ok(())
    }

    pub fn save_semantic_groups<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{GRP1_HEADER}")?;
        for (t, g) in self.group_map() {
            writeln!(out, "{t}\t{g}")?;
        }
        Ok(())
    }

    pub fn save_retired<W: Write>(&self, mut out: W) -> Result<()> {
        for c in self.concepts().filter(|c| c.retired) {
            writeln!(out, "{}", c.cui)?;
        }
        Ok(())
    }
}
