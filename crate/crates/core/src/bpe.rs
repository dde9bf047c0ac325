//! Byte-pair encoding: training, encoding, decoding and the BPE1/VOC1 files.
//!
//! Words are split into characters plus an end-of-word marker [`END_OF_WORD`];
//! training repeatedly merges the most frequent adjacent symbol pair, breaking
//! frequency ties by the lexicographically smallest `(left, right)`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::text::{pre_split, Tokenizer};

pub const END_OF_WORD: &str = "</w>";

pub const PAD_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[CLS]", "[SEP]", "[UNK]"];

/// Merges in training order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeList(pub Vec<(String, String)>);

impl MergeList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, String)> {
        self.0.iter()
    }

    /// BPE1: one `left right` pair per line.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (l, r) in &self.0 {
            writeln!(out, "{l} {r}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut merges = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (l, r) = line
                .split_once(' ')
                .filter(|(l, r)| !l.is_empty() && !r.is_empty() && !r.contains(' '))
                .ok_or_else(|| Error::format("BPE1", format!("line {}: expected `left right`", i + 1)))?;
            if !seen.insert((l.to_owned(), r.to_owned())) {
                return Err(Error::format("BPE1", format!("line {}: duplicate merge", i + 1)));
            }
            merges.push((l.to_owned(), r.to_owned()));
        }
        Ok(MergeList(merges))
    }
}

/// Dense token ids with the four special tokens at ids 0..=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for t in SPECIAL_TOKENS {
            v.insert(t);
        }
        v
    }
}

impl Vocabulary {
    /// Adds a token if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_owned());
        self.ids.insert(token.to_owned(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    /// VOC1: `token<TAB>id` per line, in id order.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (id, t) in self.tokens.iter().enumerate() {
            writeln!(out, "{t}\t{id}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = || Error::format("VOC1", format!("line {}: expected `token<TAB>id`", i + 1));
            let (t, id) = line.rsplit_once('\t').ok_or_else(bad)?;
            let id: u32 = id.parse().map_err(|_| bad())?;
            pairs.push((id, t.to_owned()));
        }
        pairs.sort();
        let mut v = Vocabulary {
            tokens: Vec::with_capacity(pairs.len()),
            ids: HashMap::with_capacity(pairs.len()),
        };
        for (expected, (id, t)) in pairs.into_iter().enumerate() {
            if id as usize != expected || v.ids.contains_key(&t) {
                return Err(Error::format("VOC1", format!("ids must be dense and unique (at {t:?})")));
            }
            v.insert(&t);
        }
        for (id, t) in SPECIAL_TOKENS.iter().enumerate() {
            if v.token(id as u32) != Some(t) {
                return Err(Error::format("VOC1", format!("special token {t} must have id {id}")));
            }
        }
        Ok(v)
    }
}

/// A trained tokenizer: merges plus vocabulary.
#[derive(Debug, Clone)]
pub struct Bpe {
    merges: MergeList,
    ranks: HashMap<(String, String), usize>,
    vocab: Vocabulary,
}

fn initial_symbols(word: &str) -> Vec<String> {
    let mut s: Vec<String> = word.chars().map(String::from).collect();
    s.push(END_OF_WORD.to_owned());
    s
}

/// Counts words after whitespace/punctuation pre-splitting.
pub fn word_counts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vec<(String, u64)> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in texts {
        for w in pre_split(t) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    let mut out: Vec<(String, u64)> = counts.into_iter().map(|(w, c)| (w.to_owned(), c)).collect();
    out.sort();
    out
}

struct Trainer {
    symbols: Vec<String>,
    symbol_ids: HashMap<String, u32>,
    words: Vec<(Vec<u32>, u64)>,
    pair_counts: HashMap<(u32, u32), u64>,
    pair_words: HashMap<(u32, u32), HashSet<usize>>,
}

impl Trainer {
    fn symbol(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.symbol_ids.get(s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(s.to_owned());
        self.symbol_ids.insert(s.to_owned(), id);
        id
    }

    fn count_word(&mut self, w: usize, sign_add: bool) {
        let (syms, count) = &self.words[w];
        for pair in syms.windows(2).map(|p| (p[0], p[1])) {
            if sign_add {
                *self.pair_counts.entry(pair).or_insert(0) += count;
                self.pair_words.entry(pair).or_default().insert(w);
            } else if let Some(c) = self.pair_counts.get_mut(&pair) {
                *c -= count;
                if *c == 0 {
                    self.pair_counts.remove(&pair);
                }
            }
        }
    }

    fn best_pair(&self) -> Option<(u32, u32)> {
        let name = |p: &(u32, u32)| (&self.symbols[p.0 as usize], &self.symbols[p.1 as usize]);
        self.pair_counts
            .iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| name(pb).cmp(&name(pa))))
            .map(|(p, _)| *p)
    }

    fn apply(&mut self, pair: (u32, u32), merged: u32) {
        let affected: Vec<usize> = self
            .pair_words
            .remove(&pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        for w in affected {
            self.count_word(w, false);
            let syms = &self.words[w].0;
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            self.words[w].0 = out;
            self.count_word(w, true);
        }
        self.pair_counts.remove(&pair);
    }
}

/// Learns up to `num_merges` merges from `(word, count)` pairs.
pub fn train_bpe(corpus: &[(String, u64)], num_merges: usize) -> Result<Bpe> {
    let mut trainer = Trainer {
        symbols: Vec::new(),
        symbol_ids: HashMap::new(),
        words: Vec::new(),
        pair_counts: HashMap::new(),
        pair_words: HashMap::new(),
    };
    let mut alphabet: Vec<String> = Vec::new();
    for (word, count) in corpus {
        if word.is_empty() || *count == 0 {
            continue;
        }
        let syms: Vec<u32> = initial_symbols(word)
            .iter()
            .map(|s| {
                if !trainer.symbol_ids.contains_key(s) {
                    alphabet.push(s.clone());
                }
                trainer.symbol(s)
            })
            .collect();
        trainer.words.push((syms, *count));
    }
    if trainer.words.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    for w in 0..trainer.words.len() {
        trainer.count_word(w, true);
    }

    let mut vocab = Vocabulary::default();
    alphabet.sort();
    for s in &alphabet {
        vocab.insert(s);
    }
    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let Some(pair) = trainer.best_pair() else { break };
        let left = trainer.symbols[pair.0 as usize].clone();
        let right = trainer.symbols[pair.1 as usize].clone();
        let joined = format!("{left}{right}");
        let merged = trainer.symbol(&joined);
        trainer.apply(pair, merged);
        vocab.insert(&joined);
        merges.push((left, right));
    }
    Ok(Bpe::new(MergeList(merges), vocab))
}

/// Vocabulary file stored next to a merge list: `<merges>.vocab`.
pub fn vocab_path(merges: &Path) -> PathBuf {
    let mut s = merges.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

impl Bpe {
    /// Loads a merge list and its sidecar vocabulary.
    pub fn load(merges: impl AsRef<Path>) -> Result<Self> {
        let merges = merges.as_ref();
        let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| Error::io(p, e));
        let m = MergeList::read(open(merges)?)?;
        let vp = vocab_path(merges);
        let v = Vocabulary::read(open(&vp)?)?;
        Ok(Bpe::new(m, v))
    }

    pub fn new(merges: MergeList, vocab: Vocabulary) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        Bpe { merges, ranks, vocab }
    }

    pub fn merges(&self) -> &MergeList {
        &self.merges
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Applies merges to one pre-split word, lowest training rank first.
    pub fn word_symbols(&self, word: &str) -> Vec<String> {
        let mut syms = initial_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0].clone(), p[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges.0[rank];
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && &syms[i] == l && &syms[i + 1] == r {
                    out.push(format!("{l}{r}"));
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            syms = out;
        }
        syms
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        pre_split(text)
            .into_iter()
            .flat_map(|w| self.word_symbols(w))
            .map(|s| self.vocab.id(&s).unwrap_or(UNK_ID))
            .collect()
    }

    /// Inverse of [`Self::encode`] over the training alphabet. Special tokens
    /// are dropped and end-of-word markers become spaces.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let token = self
                .vocab
                .token(id)
                .ok_or_else(|| Error::Invalid(format!("token id {id} not in vocabulary")))?;
            if (id as usize) < SPECIAL_TOKENS.len() {
                continue;
            }
            out.push_str(&token.replace(END_OF_WORD, " "));
        }
        Ok(out.trim_end().to_owned())
    }
}

impl Tokenizer for Bpe {
    fn tokenize(&self, text: &str) -> Vec<String> {
        pre_split(text)
            .into_iter()
            .flat_map(|w| self.word_symbols(w))
            .map(|s| {
                if self.vocab.id(&s).is_some() {
                    s
                } else {
                    SPECIAL_TOKENS[UNK_ID as usize].to_owned()
                }
            })
            .collect()
    }
}
