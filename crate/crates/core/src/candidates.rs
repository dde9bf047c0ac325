//! Ranked candidate lists and the PRED1 predictions file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum candidates stored per mention in a PRED1 file.
pub const MAX_CANDIDATES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub cui: String,
    #[serde(rename = "name")]
    pub matched_name: String,
    /// Higher is better.
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Candidates for one mention, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mention_id: String,
    pub candidates: Vec<Candidate>,
}

impl Prediction {
    pub fn top(&self) -> Option<&Candidate> {
        self.candidates.first()
    }

    /// 1-based rank of `cui`, if present.
    pub fn rank_of(&self, cui: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c.cui == cui).map(|i| i + 1)
    }
}

/// Renumbers ranks 1..=n in list order.
pub fn renumber(candidates: &mut [Candidate]) {
    for (i, c) in candidates.iter_mut().enumerate() {
        c.rank = i + 1;
    }
}

/// Writes PRED1 JSON-lines.
pub fn write_predictions<W: Write>(mut out: W, predictions: &[Prediction]) -> Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if p.candidates.len() > MAX_CANDIDATES {
            return Err(Error::parse(
                path,
                i + 1,
                format!("{} candidates, at most {MAX_CANDIDATES} allowed", p.candidates.len()),
            ));
        }
        out.push(p);
    }
    Ok(out)
}

/// Index by mention id; fails on duplicates.
pub fn by_mention(predictions: &[Prediction]) -> Result<BTreeMap<&str, &Prediction>> {
    let mut map = BTreeMap::new();
    for p in predictions {
        if map.insert(p.mention_id.as_str(), p).is_some() {
            return Err(Error::Invalid(format!("duplicate prediction for mention {}", p.mention_id)));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pred1_shape() {
        let p = Prediction {
            mention_id: "m1".into(),
            candidates: vec![Candidate {
                cui: "C0000001".into(),
                matched_name: "Diabetes".into(),
                score: -0.0,
                rank: 1,
            }],
        };
        let mut buf = Vec::new();
        write_predictions(&mut buf, &[p.clone()]).unwrap();
        assert_eq!(
            std::str::from_utf8(&buf).unwrap(),
            "{\"mention_id\":\"m1\",\"candidates\":[{\"cui\":\"C0000001\",\"name\":\"Diabetes\",\"score\":-0.0,\"rank\":1}]}\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), vec![p]);
    }

    #[test]
    fn duplicate_mentions_rejected() {
        let p = Prediction { mention_id: "m".into(), candidates: vec![] };
        assert!(by_mention(&[p.clone(), p]).is_err());
    }
}
