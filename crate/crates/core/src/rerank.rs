//! Candidate re-ranking and construction of cross-encoder training data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{renumber, Candidate};
use crate::embed::{cosine_similarity, pool, Embedder, ExtractionConfig};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::text::sentence_context;
use crate::text::Post;
use crate::text::Tokenizer;

/// One RRK1 line: a sentence with a marked mention and its candidate CUIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankExample {
    pub example_id: String,
    pub sentence: Vec<String>,
    pub mention_start_token: usize,
    /// Exclusive.
    pub mention_end_token: usize,
    pub gold_cui: String,
    pub candidates: Vec<String>,
}

impl RerankExample {
    pub fn mention_token_span(&self) -> (usize, usize) {
        (self.mention_start_token, self.mention_end_token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankDataParams {
    pub negatives: usize,
    pub max_tokens: usize,
    /// Fraction of examples in the training split.
    pub split: f64,
    pub seed: u64,
}

impl Default for RerankDataParams {
    fn default() -> Self {
        RerankDataParams {
            negatives: 63,
            max_tokens: 150,
            split: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RerankDataset {
    pub train: Vec<RerankExample>,
    pub validation: Vec<RerankExample>,
    /// Mentions whose sentence exceeded `max_tokens`.
    pub dropped_too_long: usize,
}

/// One example per labelled mention: its sentence, the gold CUI and
/// `negatives` distinct other CUIs drawn uniformly without replacement, with
/// the candidate order shuffled. Negatives are fixed per example.
pub fn build_rerank_dataset(
    posts: &[Post],
    kb: &KnowledgeBase,
    tokenizer: &dyn Tokenizer,
    params: RerankDataParams,
) -> Result<RerankDataset> {
    if !(0.0..=1.0).contains(&params.split) {
        return Err(Error::Invalid(format!("split {} outside [0, 1]", params.split)));
    }
    let all: Vec<&str> = kb.concepts().map(|c| c.cui.as_str()).collect();
    if all.len() < params.negatives + 1 {
        return Err(Error::Invalid(format!(
            "knowledge base has {} concepts; {} negatives plus gold are needed",
            all.len(),
            params.negatives
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut examples = Vec::new();
    let mut dropped = 0;
    for post in posts {
        for m in &post.mentions {
            let Some(gold) = &m.gold_cui else { continue };
            let Ok(gold_pos) = all.binary_search(&gold.as_str()) else {
                return Err(Error::UnknownCui(vec![gold.clone()]));
            };
            let ctx = sentence_context(post, m, tokenizer)?;
            if ctx.len() > params.max_tokens {
                dropped += 1;
                continue;
            }
            let mut candidates: Vec<String> = index::sample(&mut rng, all.len() - 1, params.negatives)
                .into_iter()
                .map(|i| all[if i >= gold_pos { i + 1 } else { i }].to_owned())
                .collect();
            candidates.push(gold.clone());
            candidates.shuffle(&mut rng);
            let (start, end) = ctx.mention_token_span;
            examples.push(RerankExample {
                example_id: m.id.clone(),
                sentence: ctx.tokens(),
                mention_start_token: start,
                mention_end_token: end,
                gold_cui: gold.clone(),
                candidates,
            });
        }
    }
    examples.shuffle(&mut rng);
    let n_train = (params.split * examples.len() as f64).round() as usize;
    let validation = examples.split_off(n_train);
    Ok(RerankDataset {
        train: examples,
        validation,
        dropped_too_long: dropped,
    })
}

pub fn write_rrk1<W: Write>(mut out: W, examples: &[RerankExample]) -> Result<()> {
    for e in examples {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push((i + 1, v));
    }
    Ok(out)
}

pub fn read_rrk1(path: impl AsRef<Path>) -> Result<Vec<RerankExample>> {
    let path = path.as_ref();
    read_json_lines::<RerankExample>(path)?
        .into_iter()
        .map(|(line, e)| {
            if e.mention_start_token > e.mention_end_token || e.mention_end_token > e.sentence.len() {
                return Err(Error::parse(path, line, "mention token span outside the sentence"));
            }
            if !e.candidates.contains(&e.gold_cui) {
                return Err(Error::parse(path, line, "gold CUI is not among the candidates"));
            }
            Ok(e)
        })
        .collect()
}

/// One line of a scores file, aligned with a candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub example_id: String,
    pub scores: Vec<f64>,
}

/// Reads a scores file keyed by example id.
pub fn read_scores(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (line, s) in read_json_lines::<ScoreLine>(path)? {
        if out.insert(s.example_id.clone(), s.scores).is_some() {
            return Err(Error::parse(path, line, format!("duplicate example id {}", s.example_id)));
        }
    }
    Ok(out)
}

pub fn write_scores<W: Write>(mut out: W, lines: &[ScoreLine]) -> Result<()> {
    for l in lines {
        serde_json::to_writer(&mut out, l)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Sentence tokens with the mention's token span.
#[derive(Debug, Clone, Copy)]
pub struct RerankContext<'a> {
    pub sentence: &'a [String],
    pub mention_token_span: (usize, usize),
}

/// Scores a concept name against a mention in context. Must be deterministic.
pub trait Scorer: Send + Sync {
    fn score(&self, ctx: RerankContext<'_>, concept_name: &str) -> Result<f64>;
}

impl<F> Scorer for F
where
    F: Fn(RerankContext<'_>, &str) -> Result<f64> + Send + Sync,
{
    fn score(&self, ctx: RerankContext<'_>, concept_name: &str) -> Result<f64> {
        self(ctx, concept_name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reranked {
    pub candidates: Vec<Candidate>,
    /// Positions (0-based) whose score could not be computed; those
    /// candidates kept their place and their old score.
    pub failed: Vec<usize>,
}

/// Reorders candidates by descending score. `None` (or a non-finite score)
/// pins the candidate to its current position. Equal scores keep incoming
/// order.
pub fn rerank_with_scores(candidates: &[Candidate], scores: &[Option<f64>]) -> Result<Reranked> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    if scores.len() != candidates.len() {
        return Err(Error::Dimension {
            expected: candidates.len(),
            got: scores.len(),
        });
    }
    let mut movable: Vec<(usize, f64)> = Vec::new();
    let mut failed = Vec::new();
    for (i, s) in scores.iter().enumerate() {
        match s {
            Some(v) if v.is_finite() => movable.push((i, *v)),
            _ => failed.push(i),
        }
    }
    movable.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut sorted = movable.into_iter();
    let mut out = Vec::with_capacity(candidates.len());
    for i in 0..candidates.len() {
        if failed.binary_search(&i).is_ok() {
            out.push(candidates[i].clone());
        } else {
            let (j, score) = sorted.next().expect("slot count matches movable count");
            out.push(Candidate {
                score,
                ..candidates[j].clone()
            });
        }
    }
    renumber(&mut out);
    Ok(Reranked { candidates: out, failed })
}

/// Scores every candidate's matched name and reorders.
pub fn rerank(candidates: &[Candidate], ctx: RerankContext<'_>, scorer: &dyn Scorer) -> Result<Reranked> {
    let scores: Vec<Option<f64>> = candidates
        .iter()
        .map(|c| scorer.score(ctx, &c.matched_name).ok())
        .collect();
    rerank_with_scores(candidates, &scores)
}

/// Cosine between the pooled sentence embedding and the pooled name
/// embedding. A deterministic stand-in for a trained cross-encoder.
#[derive(Clone)]
pub struct BaselineContextScorer {
    embedder: Arc<dyn Embedder>,
    cfg: ExtractionConfig,
}

impl BaselineContextScorer {
    pub fn new(embedder: Arc<dyn Embedder>, cfg: ExtractionConfig) -> Self {
        BaselineContextScorer { embedder, cfg }
    }

    pub fn sentence_vector(&self, sentence: &[String]) -> Result<Vec<f32>> {
        pool(&self.embedder.embed_tokens(sentence)?, self.cfg)
    }

    pub fn name_vector(&self, name: &str) -> Result<Vec<f32>> {
        pool(&self.embedder.embed_text(name)?, self.cfg)
    }
}

impl Scorer for BaselineContextScorer {
    fn score(&self, ctx: RerankContext<'_>, concept_name: &str) -> Result<f64> {
        cosine_similarity(&self.sentence_vector(ctx.sentence)?, &self.name_vector(concept_name)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::{train_bpe, word_counts};
    use crate::embed::BuiltinEmbedder;
    use crate::kb::ConceptName;
    use crate::text::{Mention, MentionKind};
    use crate::text::WordTokenizer;
    use rand::Rng;

    fn cands(cuis: &[&str]) -> Vec<Candidate> {
        cuis.iter()
            .enumerate()
            .map(|(i, c)| Candidate {
                cui: (*c).into(),
                matched_name: format!("n{c}"),
                score: -(i as f64),
                rank: i + 1,
            })
            .collect()
    }

    fn order(r: &Reranked) -> Vec<&str> {
        r.candidates.iter().map(|c| c.cui.as_str()).collect()
    }

    const CTX: RerankContext<'static> = RerankContext {
        sentence: &[],
        mention_token_span: (0, 0),
    };

    #[test]
    fn identity_and_reversal() {
        let c = cands(&["A", "B", "C", "D"]);
        let rank_of = |name: &str| c.iter().find(|x| x.matched_name == name).unwrap().rank as f64;
        let neg = |_: RerankContext<'_>, n: &str| Ok(-rank_of(n));
        let pos = |_: RerankContext<'_>, n: &str| Ok(rank_of(n));
        assert_eq!(order(&rerank(&c, CTX, &neg).unwrap()), ["A", "B", "C", "D"]);
        assert_eq!(order(&rerank(&c, CTX, &pos).unwrap()), ["D", "C", "B", "A"]);
        let constant = |_: RerankContext<'_>, _: &str| Ok(0.5);
        let r = rerank(&c, CTX, &constant).unwrap();
        assert_eq!(order(&r), ["A", "B", "C", "D"]);
        assert!(r.candidates.iter().all(|x| x.score == 0.5));
        assert_eq!(r.candidates.iter().map(|x| x.rank).collect::<Vec<_>>(), [1, 2, 3, 4]);
        assert!(rerank(&[], CTX, &constant).is_err());
    }

    #[test]
    fn score_table_matches_manual_sort() {
        let c = cands(&["A", "B", "C", "D", "E"]);
        let table = [0.1, 0.9, 0.4, 0.9, -2.0];
        let r = rerank_with_scores(&c, &table.map(Some)).unwrap();
        // B and D tie; B came first
        assert_eq!(order(&r), ["B", "D", "C", "A", "E"]);
        assert_eq!(r.candidates.iter().map(|x| x.score).collect::<Vec<_>>(), [0.9, 0.9, 0.4, 0.1, -2.0]);
    }

    #[test]
    fn failed_scores_keep_position() {
        let c = cands(&["A", "B", "C", "D"]);
        let r = rerank_with_scores(&c, &[Some(0.0), None, Some(5.0), Some(f64::NAN)]).unwrap();
        assert_eq!(order(&r), ["C", "B", "A", "D"]);
        assert_eq!(r.failed, [1, 3]);
        assert_eq!(r.candidates[1].score, -1.0);
        let failing = |_: RerankContext<'_>, n: &str| {
            if n == "nB" {
                Err(Error::Invalid("boom".into()))
            } else {
                Ok(n.len() as f64)
            }
        };
        assert_eq!(rerank(&c, CTX, &failing).unwrap().failed, [1]);
    }

    fn kb(n: usize) -> KnowledgeBase {
        let mut kb = KnowledgeBase::new();
        for i in 0..n {
            kb.add_name(ConceptName {
                surface: format!("konzept {i}"),
                cui: format!("C{i:07}"),
                source: "T".into(),
                preferred: true,
            })
            .unwrap();
        }
        kb
    }

    fn post(id: &str, text: &str, mentions: &[(usize, usize, &str)]) -> Post {
        let mut p = Post {
            id: id.into(),
            text: text.into(),
            mentions: mentions
                .iter()
                .enumerate()
                .map(|(i, (s, e, g))| Mention {
                    id: format!("{id}-{i}"),
                    start: *s,
                    end: *e,
                    kind: MentionKind::Lay,
                    gold_cui: Some((*g).into()),
                    synonyms: vec![],
                    surface: String::new(),
                })
                .collect(),
        };
        p.resolve().unwrap();
        p
    }

    #[test]
    fn dataset_with_exactly_enough_concepts() {
        let kb = kb(64);
        let posts = vec![post("p", "Ich habe Kopfweh. Und Bauchweh.", &[(9, 16, "C0000003"), (22, 30, "C0000063")])];
        let ds = build_rerank_dataset(&posts, &kb, &WordTokenizer, RerankDataParams { split: 0.5, ..Default::default() }).unwrap();
        assert_eq!(ds.train.len() + ds.validation.len(), 2);
        let all: std::collections::BTreeSet<String> = kb.concepts().map(|c| c.cui.clone()).collect();
        for e in ds.train.iter().chain(&ds.validation) {
            let set: std::collections::BTreeSet<String> = e.candidates.iter().cloned().collect();
            assert_eq!(set, all);
            assert_eq!(e.candidates.len(), 64);
        }
        assert!(build_rerank_dataset(&posts, &kb, &WordTokenizer, RerankDataParams { negatives: 64, ..Default::default() }).is_err());
    }

    #[test]
    fn long_sentences_are_dropped() {
        let kb = kb(100);
        let long: String = std::iter::repeat_n("wort", 150).collect::<Vec<_>>().join(" ");
        let fits: String = std::iter::repeat_n("wort", 149).collect::<Vec<_>>().join(" ");
        let text = format!("{long} x. {fits}.");
        // first sentence: 150 words + "x" + "." = 152 tokens; second: 149 + "." = 150
        let first = long.chars().count() + 1;
        let second = text.chars().count() - 2;
        let posts = vec![post("p", &text, &[(first, first + 1, "C0000001"), (second - 3, second + 1, "C0000002")])];
        let ds = build_rerank_dataset(&posts, &kb, &WordTokenizer, RerankDataParams::default()).unwrap();
        assert_eq!(ds.dropped_too_long, 1);
        assert_eq!(ds.train.len() + ds.validation.len(), 1);
    }

    #[test]
    fn dataset_is_seeded() {
        let kb = kb(200);
        let text = (0..10).map(|i| format!("Satz nummer {i} hier.")).collect::<Vec<_>>().join(" ");
        let spans: Vec<(usize, usize, String)> = (0..10)
            .map(|i| {
                let needle = format!("nummer {i}");
                let at = text.find(&needle).unwrap();
                (at, at + needle.len(), format!("C{:07}", i * 7))
            })
            .collect();
        let refs: Vec<(usize, usize, &str)> = spans.iter().map(|(a, b, c)| (*a, *b, c.as_str())).collect();
        let posts = vec![post("p", &text, &refs)];
        let p = RerankDataParams { seed: 9, ..Default::default() };
        let a = build_rerank_dataset(&posts, &kb, &WordTokenizer, p).unwrap();
        let b = build_rerank_dataset(&posts, &kb, &WordTokenizer, p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 8);
        for e in a.train.iter().chain(&a.validation) {
            let distinct: std::collections::BTreeSet<&String> = e.candidates.iter().collect();
            assert_eq!(distinct.len(), 64);
            assert_eq!(e.candidates.iter().filter(|c| **c == e.gold_cui).count(), 1);
            let expect = vec!["nummer".to_string(), e.example_id[2..].to_string()];
            assert_eq!(e.sentence[e.mention_start_token..e.mention_end_token].to_vec(), expect);
        }
        let c = build_rerank_dataset(&posts, &kb, &WordTokenizer, RerankDataParams { seed: 10, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rrk1_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.rrk1");
        let e = RerankExample {
            example_id: "m1".into(),
            sentence: vec!["ich".into(), "habe".into(), "kopfweh".into()],
            mention_start_token: 2,
            mention_end_token: 3,
            gold_cui: "C1".into(),
            candidates: vec!["C2".into(), "C1".into()],
        };
        let mut buf = Vec::new();
        write_rrk1(&mut buf, std::slice::from_ref(&e)).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for key in ["sentence", "mention_start_token", "mention_end_token", "gold_cui", "candidates"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(read_rrk1(&path).unwrap(), vec![e.clone()]);
        let bad = RerankExample { mention_end_token: 4, ..e };
        let mut buf = Vec::new();
        write_rrk1(&mut buf, &[bad]).unwrap();
        std::fs::write(&path, &buf).unwrap();
        assert!(read_rrk1(&path).is_err());
    }

    #[test]
    fn scores_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        std::fs::write(&path, "{\"example_id\":\"a\",\"scores\":[1.0,2.5]}\n{\"example_id\":\"b\",\"scores\":[]}\n").unwrap();
        let s = read_scores(&path).unwrap();
        assert_eq!(s["a"], [1.0, 2.5]);
        std::fs::write(&path, "{\"example_id\":\"a\",\"scores\":[]}\n{\"example_id\":\"a\",\"scores\":[]}\n").unwrap();
        assert!(read_scores(&path).is_err());
    }

    #[test]
    fn baseline_prefers_token_identical_name() {
        let texts = ["ich habe starke kopfschmerzen seit gestern", "bauchweh", "zahnfleischbluten", "kopfschmerzen"];
        let bpe = train_bpe(&word_counts(texts.iter().copied()), 60).unwrap();
        let bpe = Arc::new(bpe);
        let embedder: Arc<dyn Embedder> = Arc::new(BuiltinEmbedder::new(bpe.clone(), 32, 3));
        let scorer = BaselineContextScorer::new(embedder, ExtractionConfig::Nospec);
        let sentence = bpe.tokenize("kopfschmerzen");
        let ctx = RerankContext { sentence: &sentence, mention_token_span: (0, sentence.len()) };
        let c = vec![
            Candidate { cui: "B".into(), matched_name: "bauchweh".into(), score: 0.0, rank: 1 },
            Candidate { cui: "Z".into(), matched_name: "zahnfleischbluten".into(), score: 0.0, rank: 2 },
            Candidate { cui: "K".into(), matched_name: "kopfschmerzen".into(), score: 0.0, rank: 3 },
        ];
        let r = rerank(&c, ctx, &scorer).unwrap();
        assert_eq!(r.candidates[0].cui, "K");
        assert!((r.candidates[0].score - 1.0).abs() < 1e-6);
        assert!(r.failed.is_empty());
    }

    proptest::proptest! {
        #[test]
        fn rerank_is_a_permutation(seed in 0u64..10_000, len in 1usize..64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c: Vec<Candidate> = (0..len).map(|i| Candidate {
                cui: format!("C{}", rng.random_range(0..1000)),
                matched_name: format!("n{i}"),
                score: 0.0,
                rank: i + 1,
            }).collect();
            let scores: Vec<Option<f64>> = (0..len).map(|_| rng.random_bool(0.9).then(|| rng.random_range(-1.0..1.0))).collect();
            let r = rerank_with_scores(&c, &scores).unwrap();
            let mut a: Vec<_> = c.iter().map(|x| x.cui.clone()).collect();
            let mut b: Vec<_> = r.candidates.iter().map(|x| x.cui.clone()).collect();
            a.sort();
            b.sort();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
