use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::char_slice;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Lay,
    Technical,
}

/// An annotated span of a post. Offsets are code-point offsets, end exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub id: String,
    pub start: usize,
    pub end: usize,
    pub kind: MentionKind,
    #[serde(default)]
    pub gold_cui: Option<String>,
    #[serde(default)]
    pub synonyms: Vec<String>,
    /// `text[start..end]` of the owning post; filled in on load.
    #[serde(skip)]
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub mentions: Vec<Mention>,
}

impl Post {
    /// Fills in mention surfaces and checks span bounds.
    pub fn resolve(&mut self) -> Result<()> {
        for m in &mut self.mentions {
            if m.start >= m.end {
                return Err(Error::Invalid(format!(
                    "mention {} has empty or inverted span {}..{}",
                    m.id, m.start, m.end
                )));
            }
            let surface = char_slice(&self.text, m.start, m.end).ok_or_else(|| {
                Error::Invalid(format!(
                    "mention {} span {}..{} is outside post {}",
                    m.id, m.start, m.end, self.id
                ))
            })?;
            m.surface = surface.to_owned();
        }
        Ok(())
    }
}

/// Reads a CORP1 JSON-lines corpus. Blank lines are skipped.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Post>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut posts = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut post: Post =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        post.resolve()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        posts.push(post);
    }
    Ok(posts)
}

pub fn write_corpus<W: Write>(mut out: W, posts: &[Post]) -> Result<()> {
    for post in posts {
        serde_json::to_writer(&mut out, post)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
