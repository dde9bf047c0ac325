//! Acceptance checks for the library and the `normkit` binary. Prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use normkit::align::{
    batch_loss, mean_cosines, mine_hard_pairs, ms_loss, ms_loss_gradient, train, LabeledVector,
    MiningParams, MsLossParams, PairSets, ProjectionModel, TrainConfig,
};
use normkit::analysis::{analyze, ErrorCategory, MentionInfo};
use normkit::embed::{cosine_similarity, name_key, EmbeddingMatrix, EmbeddingSearcher};
use normkit::kb::{ConceptName, LexiconEntry};
use normkit::metrics::{accuracy_at, cohens_kappa, weighted_prf, GoldLabels};
use normkit::rerank::{rerank, rerank_with_scores, RerankContext};
use normkit::string_link::{build_string_index, levenshtein, StringPipeline};
use normkit::text::{context_window, Mention, MentionKind, Post, WordTokenizer};
use normkit::{Candidate, KnowledgeBase, Prediction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Box-Muller
    (0..n)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            let v: f64 = rng.random();
            (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
        })
        .collect()
}

fn random_word(rng: &mut ChaCha8Rng, alphabet: &[char], max_len: usize) -> String {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

fn lev_recursive(a: &[char], b: &[char]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = lev_recursive(ra, rb) + usize::from(x != y);
            sub.min(lev_recursive(ra, b) + 1).min(lev_recursive(a, rb) + 1)
        }
    }
}

fn lev_dp(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 0..=a.len() {
        d[i][0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            d[i][j] = (d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]))
                .min(d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn levenshtein_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let alphabet: Vec<char> = "abcäöüß".chars().collect();
    let words: Vec<String> = (0..1000).map(|_| random_word(&mut rng, &alphabet, 7)).collect();
    for pair in words.chunks(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let got = levenshtein(a, b);
        let want = lev_recursive(&a.chars().collect::<Vec<_>>(), &b.chars().collect::<Vec<_>>());
        ensure!(got == want, "lev({a:?}, {b:?}) = {got}, oracle {want}");
    }
    for t in words.chunks(3).take(300) {
        let (a, b, c) = (&t[0], &t[1], &t[2]);
        ensure!(levenshtein(a, a) == 0, "identity fails for {a:?}");
        ensure!((levenshtein(a, b) == 0) == (a == b), "indiscernibles fail for {a:?} {b:?}");
        ensure!(levenshtein(a, b) == levenshtein(b, a), "symmetry fails for {a:?} {b:?}");
        ensure!(
            levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c),
            "triangle fails for {a:?} {b:?} {c:?}"
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("500 pairs, axioms on 300 triples, {elapsed:.2?}"))
}

fn synthetic_kb(rng: &mut ChaCha8Rng, concepts: usize, names: usize) -> KnowledgeBase {
    let syllables = ["ma", "ki", "ne", "ro", "sch", "ber", "tal", "gen", "ü", "lo", "fe", "ä"];
    let mut kb = KnowledgeBase::new();
    let mut added = 0;
    while added < names {
        let cui = if added < concepts { added } else { rng.random_range(0..concepts) };
        let words = rng.random_range(1..=2);
        let surface: Vec<String> = (0..words)
            .map(|_| (0..rng.random_range(2..=4)).map(|_| syllables[rng.random_range(0..syllables.len())]).collect())
            .collect();
        let name = ConceptName {
            surface: surface.join(" "),
            cui: format!("C{cui:07}"),
            source: "SYN".into(),
            preferred: added < concepts,
        };
        if kb.add_name(name).unwrap() {
            added += 1;
        }
    }
    kb
}

fn string_linker_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kb = synthetic_kb(&mut rng, 50, 120);
    ensure!(kb.concept_count() == 50 && kb.name_count() == 120, "fixture has {} / {}", kb.concept_count(), kb.name_count());
    let pipeline = StringPipeline::default();
    let index = build_string_index(&kb, pipeline.clone());
    let surfaces: Vec<&ConceptName> = kb.names().collect();
    let alphabet: Vec<char> = "makinerosch ".chars().collect();
    for q in 0..100 {
        let query = if q % 2 == 0 {
            surfaces[rng.random_range(0..surfaces.len())].surface.clone()
        } else {
            random_word(&mut rng, &alphabet, 12)
        };
        let term = pipeline.term(&query);
        let mut best: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for n in kb.names() {
            let d = lev_dp(&term, &pipeline.term(&n.surface));
            let e = best.entry(n.cui.as_str()).or_insert((d, n.surface.as_str()));
            if (d, n.surface.as_str()) < *e {
                *e = (d, n.surface.as_str());
            }
        }
        let mut want: Vec<(usize, &str, &str)> = best.into_iter().map(|(c, (d, s))| (d, c, s)).collect();
        want.sort();
        let got = index.link(&query, 64).map_err(|e| e.to_string())?;
        let got: Vec<(usize, &str, &str)> =
            got.iter().map(|c| ((-c.score) as usize, c.cui.as_str(), c.matched_name.as_str())).collect();
        ensure!(got == want, "query {query:?}: ranking differs from oracle");
    }
    let mut by_term: HashMap<String, BTreeSet<&str>> = HashMap::new();
    for n in kb.names() {
        by_term.entry(pipeline.term(&n.surface)).or_default().insert(&n.cui);
    }
    let mut unique = 0;
    for n in kb.names().filter(|n| by_term[&pipeline.term(&n.surface)].len() == 1) {
        unique += 1;
        let top = index.link(&n.surface, 64).map_err(|e| e.to_string())?;
        ensure!(top[0].cui == n.cui, "{:?} ranked {} first", n.surface, top[0].cui);
    }
    Ok(format!("100 queries match oracle; Acc@1 = 1.0 on {unique} unique names"))
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    gaussian(rng, d).into_iter().map(|v| v as f32).collect()
}

fn cosine_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let d = rng.random_range(1..=64);
        let (v, w) = (random_vec(&mut rng, d), random_vec(&mut rng, d));
        let a = cosine_similarity(&v, &w).map_err(|e| e.to_string())?;
        let b = cosine_similarity(&w, &v).map_err(|e| e.to_string())?;
        ensure!(a == b, "asymmetric: {a} vs {b}");
        ensure!(a.abs() <= 1.0 + 1e-6, "out of bounds: {a}");
    }
    let index = random_index(&mut rng, 300, 100, 32);
    for factor in [2.0f32, 3.7, 0.01] {
        let scaled = index.scaled(factor).map_err(|e| e.to_string())?;
        let (s0, s1) = (EmbeddingSearcher::new(&index).unwrap(), EmbeddingSearcher::new(&scaled).unwrap());
        for _ in 0..50 {
            let q = random_vec(&mut rng, 32);
            let a: Vec<String> = s0.search(&q, 64).unwrap().into_iter().map(|c| c.cui).collect();
            let b: Vec<String> = s1.search(&q, 64).unwrap().into_iter().map(|c| c.cui).collect();
            ensure!(a == b, "order changed under scale {factor}");
        }
    }
    Ok("1000 pairs symmetric and bounded; order identical under 3 scalings x 50 queries".into())
}

fn random_index(rng: &mut ChaCha8Rng, rows: usize, concepts: usize, d: usize) -> EmbeddingMatrix {
    let rows = (0..rows)
        .map(|i| {
            let cui = if i < concepts { i } else { rng.random_range(0..concepts) };
            (name_key(&format!("C{cui:07}"), &format!("n{i}")), random_vec(rng, d))
        })
        .collect();
    EmbeddingMatrix::from_rows(rows, d).unwrap()
}

fn embedding_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 16;
    let index = random_index(&mut rng, 200, 90, d);
    let searcher = EmbeddingSearcher::new(&index).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let q = random_vec(&mut rng, d);
        let qn: f64 = q.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        let mut scored: Vec<(f64, &str, &str)> = index
            .iter()
            .map(|(id, row)| {
                let (cui, name) = id.split_once('\t').unwrap();
                let dot: f64 = row.iter().zip(&q).map(|(&a, &b)| a as f64 * b as f64).sum();
                let rn: f64 = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
                (dot / (qn * rn), cui, name)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)).then_with(|| a.2.cmp(b.2)));
        let mut seen = BTreeSet::new();
        let want: Vec<(&str, &str)> =
            scored.into_iter().filter(|s| seen.insert(s.1)).take(64).map(|s| (s.1, s.2)).collect();
        let got = searcher.search(&q, 64).map_err(|e| e.to_string())?;
        let got: Vec<(&str, &str)> = got.iter().map(|c| (c.cui.as_str(), c.matched_name.as_str())).collect();
        ensure!(got == want, "top-64 differs from exhaustive sort");
    }
    Ok("100 queries over 200 names agree rank for rank".into())
}

fn random_batch(rng: &mut ChaCha8Rng, max_m: usize) -> (Vec<LabeledVector>, ProjectionModel) {
    let d_in = rng.random_range(2..=8);
    let d_out = rng.random_range(1..=d_in);
    let m = rng.random_range(3..=max_m);
    let labels = rng.random_range(2..=3);
    let batch = (0..m).map(|i| LabeledVector::new(gaussian(rng, d_in), format!("L{}", i % labels))).collect();
    (batch, ProjectionModel::random(d_out, d_in, rng.random()))
}

fn ms_gradient() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = MsLossParams::default();
    let h = 1e-5;
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 100 {
        let (batch, model) = random_batch(&mut rng, 10);
        let lambda = [0.2, 10.0][checked % 2];
        let pairs = mine_hard_pairs(&batch, &model, MiningParams { lambda }).unwrap();
        if pairs.is_empty() {
            continue;
        }
        let g = ms_loss_gradient(&batch, &model, &pairs, p).map_err(|e| e.to_string())?;
        let fd = DMatrix::from_fn(model.d_out(), model.d_in(), |r, c| {
            let mut plus = model.clone();
            plus.w[(r, c)] += h;
            let mut minus = model.clone();
            minus.w[(r, c)] -= h;
            (batch_loss(&batch, &plus, &pairs, p).unwrap() - batch_loss(&batch, &minus, &pairs, p).unwrap()) / (2.0 * h)
        });
        let rel = (&g - &fd).norm() / fd.norm().max(1e-9);
        worst = worst.max(rel);
        ensure!(rel < 1e-4, "instance {checked}: relative error {rel}");
        checked += 1;
    }
    let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let empty = ms_loss(&s, &PairSets::default(), p).map_err(|e| e.to_string())?;
    ensure!(empty == 0.0, "empty pair sets give {empty}");
    // both anchors see one positive at S = ε
    let pairs = PairSets { positives: [(0, 1), (1, 0)].into(), negatives: BTreeSet::new() };
    let l = ms_loss(&s, &pairs, p).map_err(|e| e.to_string())?;
    let want = std::f64::consts::LN_2 / p.beta;
    ensure!((l - want).abs() < 1e-12, "closed form {l} vs {want}");
    Ok(format!("100 instances, worst relative error {worst:.1e}; empty = 0; closed form ok"))
}

fn hard_pair_mining() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut total = 0;
    for lambda in [0.0, 0.2, 10.0] {
        for _ in 0..50 {
            let (batch, model) = random_batch(&mut rng, 12);
            let f: Vec<Vec<f64>> = batch.iter().map(|v| (&model.w * &v.x).iter().copied().collect()).collect();
            let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            let mut want = PairSets::default();
            for a in 0..batch.len() {
                for p in 0..batch.len() {
                    for n in 0..batch.len() {
                        let valid = p != a && batch[a].label == batch[p].label && batch[a].label != batch[n].label;
                        if valid && sq(&f[a], &f[p]) < sq(&f[a], &f[n]) + lambda {
                            want.positives.insert((a, p));
                            want.negatives.insert((a, n));
                        }
                    }
                }
            }
            total += want.positives.len();
            let got = mine_hard_pairs(&batch, &model, MiningParams { lambda }).map_err(|e| e.to_string())?;
            ensure!(got == want, "λ = {lambda}: sets differ");
        }
    }
    Ok(format!("150 batches agree with the triple loop ({total} positives total)"))
}

fn training_effect() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let centers = [gaussian(&mut rng, 6), gaussian(&mut rng, 6)];
    let mut batch = Vec::new();
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..5 {
            let noise = gaussian(&mut rng, c.len());
            let noisy: Vec<f64> = c.iter().zip(noise).map(|(v, e)| v + 0.6 * e).collect();
            batch.push(LabeledVector::new(noisy, format!("C{label}")));
        }
    }
    let model = ProjectionModel::random(4, 6, 8);
    let (intra0, inter0) = mean_cosines(&batch, &model).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { epochs: 50, rate: 0.5, ..TrainConfig::default() };
    let out = train(&[batch.clone()], model, &cfg).map_err(|e| e.to_string())?;
    let (intra1, inter1) = mean_cosines(&batch, &out.model).map_err(|e| e.to_string())?;
    let msg = format!("intra {intra0:.3} -> {intra1:.3}, inter {inter0:.3} -> {inter1:.3}");
    ensure!(intra1 - intra0 > 0.05 && inter0 - inter1 > 0.05, "{msg}");
    Ok(msg)
}

fn post_of(words: usize, start_word: usize, mention_words: usize) -> (Post, Mention) {
    let tokens: Vec<String> = (0..words).map(|i| format!("w{i}")).collect();
    let text = tokens.join(" ");
    let start: usize = tokens[..start_word].iter().map(|t| t.chars().count() + 1).sum();
    let end = start + tokens[start_word..start_word + mention_words].join(" ").chars().count();
    let mention = Mention {
        id: "m".into(),
        start,
        end,
        kind: MentionKind::Lay,
        gold_cui: None,
        synonyms: vec![],
        surface: text.chars().skip(start).take(end - start).collect(),
    };
    (Post { id: "p".into(), text, mentions: vec![mention.clone()] }, mention)
}

fn context_assembly() -> Check {
    let mut sizes = Vec::new();
    for (m, want) in [(10, (27, 27)), (9, (28, 27))] {
        let (post, mention) = post_of(200, 100, m);
        let cm = context_window(&post, &mention, 64, &WordTokenizer).map_err(|e| e.to_string())?;
        let got = (cm.ctx_a.len(), cm.ctx_b.len());
        ensure!(cm.mention_tokens.len() == m && got == want, "|m| = {m}: got {got:?}, want {want:?}");
        ensure!(cm.ctx_a.last().map(String::as_str) == Some("w99"), "left context not adjacent");
        sizes.push(format!("{got:?}"));
    }
    let (post, mention) = post_of(200, 0, 3);
    let cm = context_window(&post, &mention, 64, &WordTokenizer).map_err(|e| e.to_string())?;
    ensure!(cm.ctx_a.is_empty() && cm.ctx_b.len() == 30, "at start: ({}, {})", cm.ctx_a.len(), cm.ctx_b.len());
    Ok(format!("budgets {}; |ctx_a| = 0 at start", sizes.join(" and ")))
}

fn pred(id: &str, cuis: &[&str]) -> Prediction {
    let mut candidates: Vec<Candidate> = cuis
        .iter()
        .enumerate()
        .map(|(i, c)| Candidate { cui: c.to_string(), matched_name: c.to_string(), score: -(i as f64), rank: i + 1 })
        .collect();
    normkit::candidates::renumber(&mut candidates);
    Prediction { mention_id: id.into(), candidates }
}

fn metrics_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let mut preds = Vec::new();
        let mut gold = GoldLabels::new();
        for m in 0..rng.random_range(1..30) {
            let mut cuis: Vec<String> = (0..20).map(|c| format!("C{c:07}")).collect();
            for i in (1..cuis.len()).rev() {
                cuis.swap(i, rng.random_range(0..=i));
            }
            let len = rng.random_range(0..=cuis.len());
            gold.insert(format!("m{m}"), format!("C{:07}", rng.random_range(0..20)));
            preds.push(pred(&format!("m{m}"), &cuis[..len].iter().map(String::as_str).collect::<Vec<_>>()));
        }
        let mut last = 0.0;
        for n in 1..=65 {
            let a = accuracy_at(&preds, &gold, n).map_err(|e| e.to_string())?;
            ensure!(a >= last, "accuracy_at drops at n = {n}");
            last = a;
        }
    }
    let preds = vec![pred("a1", &["A"]), pred("a2", &["A"]), pred("b1", &["C"]), pred("b2", &["C"])];
    let gold: GoldLabels = [("a1", "A"), ("a2", "A"), ("b1", "B"), ("b2", "B")]
        .iter()
        .map(|(m, c)| (m.to_string(), c.to_string()))
        .collect();
    let f1 = weighted_prf(&preds, &gold).map_err(|e| e.to_string())?.f1;
    ensure!(f1 == 0.5, "weighted F1 {f1}");
    let k = [
        cohens_kappa([[10, 0], [0, 10]]).map_err(|e| e.to_string())?,
        cohens_kappa([[25, 25], [25, 25]]).map_err(|e| e.to_string())?,
        cohens_kappa([[40, 10], [5, 45]]).map_err(|e| e.to_string())?,
    ];
    ensure!(k[0] == 1.0 && k[1] == 0.0 && (k[2] - 0.70).abs() <= 0.01, "kappa {k:?}");
    Ok(format!("monotone on 100 fixtures; F1 = {f1}; kappa {:.3}/{:.3}/{:.3}", k[0], k[1], k[2]))
}

fn rerank_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let tokens: Vec<String> = ["mir", "ist", "übel"].iter().map(|s| s.to_string()).collect();
    let ctx = RerankContext { sentence: &tokens, mention_token_span: (2, 3) };
    let mut before = Vec::new();
    let mut after = Vec::new();
    let mut gold = GoldLabels::new();
    for l in 0..200 {
        let len = rng.random_range(1..=64);
        let cuis: Vec<String> = (0..len).map(|i| format!("C{:07}", i * 7 + l)).collect();
        let p = pred(&format!("m{l}"), &cuis.iter().map(String::as_str).collect::<Vec<_>>());
        let g = if rng.random_bool(0.3) { "C9999999".to_string() } else { cuis[rng.random_range(0..len)].clone() };
        gold.insert(p.mention_id.clone(), g);
        let scores: Vec<Option<f64>> = (0..len)
            .map(|_| if rng.random_bool(0.1) { None } else { Some(rng.random_range(-1.0..1.0)) })
            .collect();
        let r = rerank_with_scores(&p.candidates, &scores).map_err(|e| e.to_string())?;
        let multiset = |c: &[Candidate]| c.iter().map(|c| c.cui.clone()).collect::<BTreeSet<_>>();
        ensure!(r.candidates.len() == len && multiset(&r.candidates) == multiset(&p.candidates), "list {l} lost candidates");
        ensure!(r.candidates.iter().enumerate().all(|(i, c)| c.rank == i + 1), "list {l} ranks not renumbered");
        let constant = |_: RerankContext<'_>, _: &str| Ok(0.25);
        let same = rerank(&p.candidates, ctx, &constant).map_err(|e| e.to_string())?;
        let order = |c: &[Candidate]| c.iter().map(|c| c.cui.clone()).collect::<Vec<_>>();
        ensure!(order(&same.candidates) == order(&p.candidates), "constant scorer moved list {l}");
        after.push(Prediction { mention_id: p.mention_id.clone(), candidates: r.candidates });
        before.push(p);
    }
    let a0 = accuracy_at(&before, &gold, 64).map_err(|e| e.to_string())?;
    let a1 = accuracy_at(&after, &gold, 64).map_err(|e| e.to_string())?;
    ensure!(a0 == a1, "Acc@64 {a0} -> {a1}");
    Ok(format!("200 lists permuted in place; Acc@64 stays {a1}; constant scorer keeps order"))
}

fn error_kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    let names = [
        ("C0000001", "Krankenhaus", "T073"),
        ("C0000002", "Kaliumkanal", "T116"),
        ("C0000003", "Niere", "T023"),
        ("C0000004", "Nierenbecken", "T023"),
        ("C0000005", "Hämatom", "T046"),
        ("C0000006", "Bluterguss", "T046"),
        ("C0000006", "Hämatom", "T046"),
        ("C0000007", "Kopfschmerz", "T184"),
        ("C0000008", "Migräne", "T047"),
        ("C0000009", "Clusterkopfschmerz", "T047"),
    ];
    for (cui, s, tui) in names {
        kb.add_name(ConceptName { surface: s.into(), cui: cui.into(), source: "T".into(), preferred: false }).unwrap();
        kb.add_semantic_type(cui, tui).unwrap();
    }
    for (t, g) in [("T073", "DEVI"), ("T116", "CHEM"), ("T023", "ANAT"), ("T046", "DISO"), ("T184", "DISO"), ("T047", "DISO")] {
        kb.set_group(t, g);
    }
    kb.add_edge("C0000004", "C0000003").unwrap();
    kb
}

fn error_analyzer() -> Check {
    use ErrorCategory::*;
    let kb = error_kb();
    // (mention, surface, predicted, gold, expected categories)
    let cases: [(&str, &str, &str, &str, &[ErrorCategory]); 7] = [
        ("e1", "KK", "C0000002", "C0000001", &[Abbreviation, WrongSemanticType, WrongSemanticGroup]),
        ("e2", "Blutergüsse an der Niere", "C0000003", "C0000006", &[ComplexEntity, WrongSemanticType, WrongSemanticGroup]),
        ("e3", "hämatom", "C0000005", "C0000006", &[SameSynonyms]),
        ("e4", "nierenbecken", "C0000003", "C0000004", &[ParentOrChild]),
        ("e5", "kopfweh", "C0000008", "C0000007", &[WrongSemanticType]),
        ("e6", "irgendwas", "C0000009", "C0000008", &[Unknown]),
        ("ok", "Migräne", "C0000008", "C0000008", &[]),
    ];
    let preds: Vec<Prediction> = cases.iter().map(|(m, _, p, _, _)| pred(m, &[p])).collect();
    let gold: GoldLabels = cases.iter().map(|(m, _, _, g, _)| (m.to_string(), g.to_string())).collect();
    let mentions: BTreeMap<String, MentionInfo> = cases
        .iter()
        .map(|(m, s, ..)| (m.to_string(), MentionInfo { surface: s.to_string(), kind: MentionKind::Lay }))
        .collect();
    let report = analyze(&preds, &gold, &mentions, &kb).map_err(|e| e.to_string())?;
    ensure!(report.total_errors == 6, "{} errors", report.total_errors);
    let mut covered = BTreeSet::new();
    for rec in &report.records {
        let (_, _, _, _, want) = cases.iter().find(|c| c.0 == rec.mention_id).unwrap();
        let want: BTreeSet<ErrorCategory> = want.iter().copied().collect();
        ensure!(rec.categories == want, "{}: {:?} vs {:?}", rec.mention_id, rec.categories, want);
        ensure!(!rec.categories.contains(&Unknown) || rec.categories.len() == 1, "{}: unknown co-occurs", rec.mention_id);
        covered.extend(rec.categories.iter().copied());
    }
    ensure!(covered.len() == ErrorCategory::ALL.len(), "only {} categories covered", covered.len());
    Ok("6 errors match hand-derived sets across all 7 categories".into())
}

fn merge_rule() -> Check {
    let mut kb = KnowledgeBase::new();
    for (cui, s) in [("C0000001", "Kopfschmerz"), ("C0000002", "Schnupfen"), ("C0000003", "Schnupfen")] {
        kb.add_name(ConceptName { surface: s.into(), cui: cui.into(), source: "MSH".into(), preferred: true }).unwrap();
    }
    let entries = vec![
        LexiconEntry { headword: "kopfschmerz".into(), synonyms: vec!["Kopfweh".into(), "Schädelbrummen".into()] },
        LexiconEntry { headword: "Schnupfen".into(), synonyms: vec!["Rhinitis".into()] },
        LexiconEntry { headword: "Gibtsnicht".into(), synonyms: vec!["Nix".into()] },
    ];
    let before = kb.name_count();
    let r = kb.merge_lexicon(&entries, None);
    let grown = kb.name_count() - before;
    ensure!(
        (r.cuis_extended, r.skipped_ambiguous, r.skipped_unmatched) == (1, 1, 1),
        "report {r:?}"
    );
    ensure!(grown == 1 + entries[0].synonyms.len(), "name count grew by {grown}");
    Ok(format!("report (1, 1, 1); names +{grown}"))
}

fn end_to_end_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    common::write_kb(d);
    common::exact_corpus(d);
    let run = |args: &[&str]| -> Result<(), String> {
        let out = common::run(d, args);
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("normkit {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
        }
    };
    run(&["bpe", "train", "--kb", "kb", "--corpus", "corpus.jsonl", "--merges", "300", "--out", "tok.bpe"])?;
    for out in ["a.jsonl", "b.jsonl"] {
        run(&[
            "link", "embed", "--kb", "kb", "--corpus", "corpus.jsonl", "--bpe", "tok.bpe", "--seed", "11",
            "--context", "window", "--out", out,
        ])?;
    }
    let a = fs::read(d.join("a.jsonl")).map_err(|e| e.to_string())?;
    let b = fs::read(d.join("b.jsonl")).map_err(|e| e.to_string())?;
    ensure!(!a.is_empty() && a == b, "PRED1 files differ");
    Ok(format!("two runs wrote identical {} byte PRED1 files", a.len()))
}

fn performance() -> Check {
    let (n, d) = (218_000, 128);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data: Vec<f32> = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let ids = (0..n).map(|i| name_key(&format!("C{:07}", i / 2), &format!("n{i}"))).collect();
    let index = EmbeddingMatrix::new(d, data, ids).map_err(|e| e.to_string())?;
    let queries: Vec<Vec<f32>> = (0..100).map(|_| (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect();
    let start = Instant::now();
    let searcher = EmbeddingSearcher::new(&index).map_err(|e| e.to_string())?;
    for q in &queries {
        let top = searcher.search(q, 64).map_err(|e| e.to_string())?;
        ensure!(top.len() == 64, "short result");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "100 queries took {elapsed:?}");
    Ok(format!("100 sequential queries over {n}x{d} in {elapsed:.2?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 14] = [
        ("levenshtein oracle equivalence", levenshtein_oracle),
        ("string linker exactness", string_linker_exactness),
        ("cosine and pooling checks", cosine_checks),
        ("embedding linker oracle", embedding_oracle),
        ("ms loss gradient", ms_gradient),
        ("hard pair mining", hard_pair_mining),
        ("self alignment training effect", training_effect),
        ("context assembly", context_assembly),
        ("metrics", metrics_checks),
        ("rerank permutation invariants", rerank_invariants),
        ("error analyzer", error_analyzer),
        ("lexicon merge rule", merge_rule),
        ("end to end determinism", end_to_end_determinism),
        ("performance sanity", performance),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
