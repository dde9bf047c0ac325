use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use normkit::align::{train, LabeledVector, ProjectionModel, TrainConfig};
use normkit::analysis::{analyze, edit_distance_profile, mention_info, write_error_csv, ErrorReport};
use normkit::bpe::{train_bpe, vocab_path, word_counts, Bpe};
use normkit::candidates::{read_predictions, write_predictions, Prediction};
use normkit::embed::{
    build_embedding_index, ids_path, load_embeddings, split_name_key, write_emb1, write_ids, BuiltinEmbedder,
    Embedder, EmbeddingMatrix, ExtractionConfig,
};
use normkit::kb::{
    read_lexicon, KnowledgeBase, CONCEPTS_FILE, GROUPS_FILE, HIERARCHY_FILE, RETIRED_FILE, TYPES_FILE,
};
use normkit::metrics::{evaluate, gold_from_corpus};
use normkit::pipeline::{embed_mentions as embed_corpus_mentions, link_corpus_string, link_mentions_embedding, mention_context, ContextMode, ContextSettings};
use normkit::rerank::{
    build_rerank_dataset, read_scores, rerank, rerank_with_scores, write_rrk1, BaselineContextScorer,
    RerankContext, RerankDataParams,
};
use normkit::string_link::{build_string_index, ScoreKind, StringPipeline};
use normkit::text::{read_corpus, GermanStemmer, Post, Stemmer, Tokenizer, WordTokenizer};

use crate::output::{read_manifest_args, write_atomic, write_json, write_manifest};
use crate::{
    usage, AlignTrainArgs, AnalyzeErrorsArgs, BpeTrainArgs, ContextArgs, EmbedIndexArgs,
    EmbedMentionsArgs, EmbedderArgs, EvalArgs, KbBuildArgs, KbMergeArgs, KbStatsArgs, LinkEmbedArgs,
    LinkStringArgs, RerankApplyArgs, RerankBuildArgs, ScoreArg,
};

fn load_kb(dir: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::load_dir(dir).with_context(|| format!("loading knowledge base {}", dir.display()))
}

fn load_corpus(path: &Path) -> Result<Vec<Post>> {
    Ok(read_corpus(path)?)
}

fn save_kb(kb: &KnowledgeBase, dir: &Path) -> Result<()> {
    write_atomic(&dir.join(CONCEPTS_FILE), |w| kb.save_concept_table(w))?;
    write_atomic(&dir.join(TYPES_FILE), |w| kb.save_semantic_types(w))?;
    write_atomic(&dir.join(HIERARCHY_FILE), |w| kb.save_hierarchy(w))?;
    write_atomic(&dir.join(GROUPS_FILE), |w| kb.save_semantic_groups(w))?;
    write_atomic(&dir.join(RETIRED_FILE), |w| kb.save_retired(w))?;
    Ok(())
}

fn save_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_emb1(w, m))?;
    write_atomic(&ids_path(path), |w| write_ids(w, m.ids()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn stemmer(no_stem: bool) -> Option<GermanStemmer> {
    (!no_stem).then_some(GermanStemmer)
}

fn load_bpe(args: &EmbedderArgs) -> Result<Arc<Bpe>> {
    let Some(path) = &args.bpe else {
        return Err(usage("the built-in embedder needs --bpe"));
    };
    Ok(Arc::new(Bpe::load(path).with_context(|| format!("loading tokenizer {}", path.display()))?))
}

fn builtin(args: &EmbedderArgs) -> Result<(Arc<Bpe>, BuiltinEmbedder)> {
    if args.dim == 0 {
        return Err(usage("--dim must be at least 1"));
    }
    let bpe = load_bpe(args)?;
    let embedder = BuiltinEmbedder::new(bpe.clone(), args.dim, args.seed);
    Ok((bpe, embedder))
}

fn context_settings(c: &ContextArgs) -> ContextSettings {
    ContextSettings {
        mode: c.context.into(),
        window_tokens: c.window_tokens,
        max_sentence_tokens: c.max_sentence_tokens,
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > normkit::candidates::MAX_CANDIDATES {
        return Err(usage(format!("--k must be between 1 and {}", normkit::candidates::MAX_CANDIDATES)));
    }
    Ok(())
}

fn merge(kb: &mut KnowledgeBase, lexicon: &Path, no_stem: bool) -> Result<normkit::kb::MergeReport> {
    let entries = read_lexicon(lexicon)?;
    let s = stemmer(no_stem);
    Ok(kb.merge_lexicon(&entries, s.as_ref().map(|s| s as &dyn Stemmer)))
}

pub fn kb_build(a: &KbBuildArgs) -> Result<()> {
    let mut kb = load_kb(&a.kb)?;
    if let Some(lex) = &a.lexicon {
        let report = merge(&mut kb, lex, a.no_stem)?;
        eprintln!("{}", serde_json::to_string(&report)?);
    }
    save_kb(&kb, &a.out)?;
    write_manifest(&a.out, "kb build", a)?;
    print!("{}", kb.stats());
    Ok(())
}

pub fn kb_merge(a: &KbMergeArgs) -> Result<()> {
    let mut kb = load_kb(&a.kb)?;
    let report = merge(&mut kb, &a.lexicon, a.no_stem)?;
    save_kb(&kb, &a.out)?;
    write_manifest(&a.out, "kb merge-lexicon", a)?;
    print_json(&report)
}

pub fn kb_stats(a: &KbStatsArgs) -> Result<()> {
    let stats = load_kb(&a.kb)?.stats();
    print!("{stats}");
    if let Some(out) = &a.out {
        write_atomic(out, |w| Ok(write!(w, "{stats}")?))?;
        write_manifest(out, "kb stats", a)?;
    }
    Ok(())
}

pub fn bpe_train(a: &BpeTrainArgs) -> Result<()> {
    if a.kb.is_none() && a.corpus.is_none() {
        return Err(usage("bpe train needs --kb, --corpus or both"));
    }
    let mut texts: Vec<String> = Vec::new();
    if let Some(dir) = &a.kb {
        texts.extend(load_kb(dir)?.names().map(|n| n.surface.clone()));
    }
    if let Some(path) = &a.corpus {
        texts.extend(load_corpus(path)?.into_iter().map(|p| p.text));
    }
    let counts = word_counts(texts.iter().map(String::as_str));
    let bpe = train_bpe(&counts, a.merges)?;
    write_atomic(&a.out, |w| bpe.merges().write(w))?;
    write_atomic(&vocab_path(&a.out), |w| bpe.vocab().write(w))?;
    write_manifest(&a.out, "bpe train", a)?;
    eprintln!("{} merges, {} vocabulary entries", bpe.merges().len(), bpe.vocab().len());
    Ok(())
}

pub fn embed_index(a: &EmbedIndexArgs) -> Result<()> {
    let kb = load_kb(&a.kb)?;
    let (_, embedder) = builtin(&a.embedder)?;
    let index = build_embedding_index(&kb, &embedder, a.config.into())?;
    save_embeddings(&index, &a.out)?;
    write_manifest(&a.out, "embed index", a)?;
    eprintln!("{} x {}", index.rows(), index.dim());
    Ok(())
}

pub fn embed_mentions(a: &EmbedMentionsArgs) -> Result<()> {
    let posts = load_corpus(&a.corpus)?;
    let (bpe, embedder) = builtin(&a.embedder)?;
    let m = embed_corpus_mentions(&posts, &embedder, bpe.as_ref(), context_settings(&a.context), a.config.into())?;
    save_embeddings(&m, &a.out)?;
    write_manifest(&a.out, "embed mentions", a)?;
    eprintln!("{} x {}", m.rows(), m.dim());
    Ok(())
}

fn write_pred1(path: &Path, predictions: &[Prediction]) -> Result<()> {
    write_atomic(path, |w| write_predictions(w, predictions))
}

pub fn link_string(a: &LinkStringArgs) -> Result<()> {
    check_k(a.k)?;
    let kb = load_kb(&a.kb)?;
    let posts = load_corpus(&a.corpus)?;
    let pipeline = StringPipeline {
        stemmer: stemmer(a.no_stem).map(|s| Arc::new(s) as Arc<dyn Stemmer>),
        score: match a.score {
            ScoreArg::Distance => ScoreKind::NegDistance,
            ScoreArg::Similarity => ScoreKind::Similarity,
        },
    };
    let index = build_string_index(&kb, pipeline);
    let predictions = link_corpus_string(&posts, &index, a.k)?;
    write_pred1(&a.out, &predictions)?;
    write_manifest(&a.out, "link string", a)
}

/// Extraction config recorded in the manifest of a precomputed file.
fn recorded_config(path: &Path) -> Result<Option<ExtractionConfig>> {
    let Some(args) = read_manifest_args(path)? else {
        return Ok(None);
    };
    match args.get("config").and_then(|v| v.as_str()) {
        Some(s) => Ok(Some(s.parse()?)),
        None => Ok(None),
    }
}

pub fn link_embed(a: &LinkEmbedArgs) -> Result<()> {
    check_k(a.k)?;
    let requested: ExtractionConfig = a.config.into();
    let mut builtin_parts: Option<(Arc<Bpe>, BuiltinEmbedder)> = None;
    let mut get_builtin = || -> Result<(Arc<Bpe>, BuiltinEmbedder)> {
        if builtin_parts.is_none() {
            builtin_parts = Some(builtin(&a.embedder)?);
        }
        Ok(builtin_parts.clone().unwrap())
    };

    let (index, index_cfg) = match (&a.index, &a.kb) {
        (Some(path), _) => (load_embeddings(path)?, recorded_config(path)?.unwrap_or(requested)),
        (None, Some(dir)) => {
            let kb = load_kb(dir)?;
            let (_, embedder) = get_builtin()?;
            (build_embedding_index(&kb, &embedder, requested)?, requested)
        }
        (None, None) => return Err(usage("link embed needs --index or --kb")),
    };
    let (mentions, mention_cfg) = match (&a.embeddings, &a.corpus) {
        (Some(path), _) => (load_embeddings(path)?, recorded_config(path)?.unwrap_or(requested)),
        (None, Some(corpus)) => {
            let posts = load_corpus(corpus)?;
            let (bpe, embedder) = get_builtin()?;
            let m = embed_corpus_mentions(&posts, &embedder, bpe.as_ref(), context_settings(&a.context), requested)?;
            (m, requested)
        }
        (None, None) => return Err(usage("link embed needs --embeddings or --corpus")),
    };
    if index_cfg != mention_cfg && !a.allow_mixed_config {
        return Err(usage(format!(
            "index was pooled with `{index_cfg}` but mentions with `{mention_cfg}`; pass --allow-mixed-config to proceed"
        )));
    }
    let predictions = link_mentions_embedding(&index, &mentions, a.k)?;
    write_pred1(&a.out, &predictions)?;
    write_manifest(&a.out, "link embed", a)
}

#[derive(Serialize)]
struct RerankBuildSummary {
    train: usize,
    validation: usize,
    dropped_too_long: usize,
}

pub fn rerank_build(a: &RerankBuildArgs) -> Result<()> {
    let posts = load_corpus(&a.corpus)?;
    let kb = load_kb(&a.kb)?;
    let bpe = match &a.bpe {
        Some(p) => Some(Bpe::load(p)?),
        None => None,
    };
    let tokenizer: &dyn Tokenizer = match &bpe {
        Some(b) => b,
        None => &WordTokenizer,
    };
    let params = RerankDataParams {
        negatives: a.negatives,
        max_tokens: a.max_sentence_tokens,
        split: a.split,
        seed: a.seed,
    };
    let ds = build_rerank_dataset(&posts, &kb, tokenizer, params)?;
    write_atomic(&a.out.join("train.rrk1"), |w| write_rrk1(w, &ds.train))?;
    write_atomic(&a.out.join("validation.rrk1"), |w| write_rrk1(w, &ds.validation))?;
    write_manifest(&a.out, "rerank build-data", a)?;
    print_json(&RerankBuildSummary {
        train: ds.train.len(),
        validation: ds.validation.len(),
        dropped_too_long: ds.dropped_too_long,
    })
}

pub fn rerank_apply(a: &RerankApplyArgs) -> Result<()> {
    let predictions = read_predictions(&a.predictions)?;
    let (reranked, flagged): (Vec<Prediction>, usize) = match (&a.scores, &a.corpus) {
        (Some(scores), None) => {
            let table = read_scores(scores)?;
            let mut flagged = 0;
            let mut out = Vec::with_capacity(predictions.len());
            for p in predictions {
                if p.candidates.is_empty() {
                    out.push(p);
                    continue;
                }
                let Some(s) = table.get(&p.mention_id) else {
                    bail!("no scores for mention {}", p.mention_id);
                };
                let opts: Vec<Option<f64>> = s.iter().copied().map(Some).collect();
                let r = rerank_with_scores(&p.candidates, &opts)
                    .with_context(|| format!("scores for mention {}", p.mention_id))?;
                flagged += r.failed.len();
                out.push(Prediction { mention_id: p.mention_id, candidates: r.candidates });
            }
            (out, flagged)
        }
        (None, Some(corpus)) => {
            let posts = load_corpus(corpus)?;
            let (bpe, embedder) = builtin(&a.embedder)?;
            let by_id: BTreeMap<&str, (&Post, &normkit::text::Mention)> = posts
                .iter()
                .flat_map(|p| p.mentions.iter().map(move |m| (m.id.as_str(), (p, m))))
                .collect();
            let scorer = BaselineContextScorer::new(Arc::new(embedder) as Arc<dyn Embedder>, a.config.into());
            let settings = ContextSettings {
                mode: ContextMode::Sentence,
                max_sentence_tokens: a.max_sentence_tokens,
                ..ContextSettings::default()
            };
            let results: Vec<(Prediction, usize)> = predictions
                .into_par_iter()
                .map(|p| {
                    if p.candidates.is_empty() {
                        return Ok((p, 0));
                    }
                    let Some((post, m)) = by_id.get(p.mention_id.as_str()) else {
                        bail!("mention {} is not in the corpus", p.mention_id);
                    };
                    let cm = mention_context(post, m, bpe.as_ref(), settings)?;
                    let sentence = cm.tokens();
                    let ctx = RerankContext { sentence: &sentence, mention_token_span: cm.mention_token_span };
                    let r = rerank(&p.candidates, ctx, &scorer)?;
                    let n = r.failed.len();
                    Ok((Prediction { mention_id: p.mention_id, candidates: r.candidates }, n))
                })
                .collect::<Result<_>>()?;
            let flagged = results.iter().map(|r| r.1).sum();
            (results.into_iter().map(|r| r.0).collect(), flagged)
        }
        _ => return Err(usage("rerank apply needs exactly one of --scores or --corpus")),
    };
    write_pred1(&a.out, &reranked)?;
    write_manifest(&a.out, "rerank apply", a)?;
    if flagged > 0 {
        eprintln!("{flagged} candidate(s) could not be scored and kept their position");
    }
    Ok(())
}

/// Consecutive label groups packed into batches of at most `size` vectors.
/// Groups larger than a batch are split.
fn make_batches(vectors: Vec<LabeledVector>, size: usize) -> Vec<Vec<LabeledVector>> {
    let mut groups: BTreeMap<String, Vec<LabeledVector>> = BTreeMap::new();
    for v in vectors {
        groups.entry(v.label.clone()).or_default().push(v);
    }
    let mut batches: Vec<Vec<LabeledVector>> = Vec::new();
    let mut current = Vec::new();
    for group in groups.into_values() {
        for chunk in group.chunks(size) {
            if current.len() + chunk.len() > size {
                batches.push(std::mem::take(&mut current));
            }
            current.extend_from_slice(chunk);
        }
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

pub fn align_train(a: &AlignTrainArgs) -> Result<()> {
    if a.batch_size < 2 {
        return Err(usage("--batch-size must be at least 2"));
    }
    let config: TrainConfig = match &a.train_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    if !(config.alpha > 0.0 && config.beta > 0.0 && config.lambda >= 0.0 && config.rate.is_finite()) {
        bail!("training config needs alpha > 0, beta > 0, lambda >= 0 and a finite rate");
    }
    let m = load_embeddings(&a.embeddings)?;
    let vectors: Vec<LabeledVector> = m
        .iter()
        .map(|(id, row)| {
            let label = split_name_key(id).map_or(id, |(cui, _)| cui);
            LabeledVector::new(row.iter().map(|&v| f64::from(v)).collect::<Vec<_>>(), label)
        })
        .collect();
    let d_in = m.dim();
    let d_out = a.dim_out.unwrap_or(d_in);
    if d_out == 0 {
        return Err(usage("--dim-out must be at least 1"));
    }
    let model = if d_out == d_in {
        ProjectionModel::identity(d_in)
    } else {
        ProjectionModel::random(d_out, d_in, config.seed)
    };
    let outcome = train(&make_batches(vectors, a.batch_size), model, &config)?;
    let w = &outcome.model.w;
    let rows: Vec<(String, Vec<f32>)> = (0..w.nrows())
        .map(|r| (format!("w{r}"), w.row(r).iter().map(|&v| v as f32).collect()))
        .collect();
    save_embeddings(&EmbeddingMatrix::from_rows(rows, d_in)?, &a.out)?;
    let mut loss_path = a.out.as_os_str().to_owned();
    loss_path.push(".loss.csv");
    let csv = outcome.loss_csv();
    write_atomic(Path::new(&loss_path), |w| Ok(w.write_all(csv.as_bytes())?))?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        args: &'a AlignTrainArgs,
        resolved: TrainConfig,
    }
    write_manifest(&a.out, "align train", &Resolved { args: a, resolved: config })?;
    if let (Some(first), Some(last)) = (outcome.losses.first(), outcome.losses.last()) {
        eprintln!("loss {first} -> {last}");
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if a.n.contains(&0) {
        return Err(usage("accuracy cut-offs must be at least 1"));
    }
    let posts = load_corpus(&a.corpus)?;
    let (gold, kinds) = gold_from_corpus(&posts)?;
    let predictions = read_predictions(&a.predictions)?;
    let report = evaluate(&predictions, &gold, Some(&kinds), &a.n)?;
    print_json(&report)?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        write_manifest(out, "eval", a)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ErrorOutput {
    #[serde(flatten)]
    report: ErrorReport,
    /// Mean normalized edit distance between mention and matched name over
    /// correct top-1 predictions; absent when nothing is correct.
    edit_distance_correct: Option<f64>,
}

pub fn analyze_errors(a: &AnalyzeErrorsArgs) -> Result<()> {
    let posts = load_corpus(&a.corpus)?;
    let kb = load_kb(&a.kb)?;
    let (gold, _) = gold_from_corpus(&posts)?;
    let mentions = mention_info(&posts);
    let predictions = read_predictions(&a.predictions)?;
    let report = analyze(&predictions, &gold, &mentions, &kb)?;
    let edit_distance_correct = match edit_distance_profile(&predictions, &gold, &mentions, true) {
        Ok(v) => Some(v),
        Err(normkit::Error::Empty(_)) => None,
        Err(e) => return Err(e.into()),
    };
    if let Some(csv) = &a.csv {
        write_atomic(csv, |w| write_error_csv(w, &report.records))?;
    }
    let out = ErrorOutput { report, edit_distance_correct };
    print_json(&out)?;
    if let Some(path) = &a.out {
        write_json(path, &out)?;
        write_manifest(path, "analyze errors", a)?;
    }
    Ok(())
}
