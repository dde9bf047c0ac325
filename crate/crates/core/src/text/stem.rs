use unicode_normalization::UnicodeNormalization;

/// Maps a single word to its stem.
pub trait Stemmer: Send + Sync {
    fn stem(&self, word: &str) -> String;
}

struct Rule {
    suffix: &'static str,
    replacement: &'static str,
    /// When set, the character before the suffix must be one of these.
    after: Option<&'static [char]>,
}

// Longest suffix first.
const RULES: &[Rule] = &[
    Rule { suffix: "ungen", replacement: "ung", after: None },
    Rule { suffix: "nden", replacement: "", after: None },
    Rule { suffix: "itis", replacement: "", after: None },
    Rule { suffix: "en", replacement: "", after: None },
    Rule { suffix: "es", replacement: "", after: None },
    Rule { suffix: "e", replacement: "", after: None },
    Rule { suffix: "n", replacement: "", after: Some(&['l', 'r']) },
    Rule { suffix: "s", replacement: "", after: None },
];

/// Table-driven German suffix stripper.
///
/// Rules are tried longest suffix first and re-applied until none fires, so
/// the stemmer is idempotent. A rule only fires if the result keeps at least
/// [`GermanStemmer::MIN_STEM`] characters. Bare `-n` is only stripped after
/// `l` or `r` (`Kugeln`, `Adern`), which leaves `pyelon` intact.
#[derive(Debug, Clone, Copy, Default)]
pub struct GermanStemmer;

impl GermanStemmer {
    pub const MIN_STEM: usize = 4;

    fn strip_once(word: &[char]) -> Option<Vec<char>> {
        for rule in RULES {
            let suffix: Vec<char> = rule.suffix.chars().collect();
            if word.len() < suffix.len() || !word.ends_with(&suffix) {
                continue;
            }
            let base = &word[..word.len() - suffix.len()];
            if let Some(allowed) = rule.after {
                match base.last() {
                    Some(c) if allowed.contains(c) => {}
                    _ => continue,
                }
            }
            let result_len = base.len() + rule.replacement.chars().count();
            if result_len < Self::MIN_STEM {
                continue;
            }
            let mut out = base.to_vec();
            out.extend(rule.replacement.chars());
            return Some(out);
        }
        None
    }
}

impl Stemmer for GermanStemmer {
    fn stem(&self, word: &str) -> String {
        let lower: String = word.nfc().collect::<String>().to_lowercase();
        let mut chars: Vec<char> = lower.chars().collect();
        while let Some(next) = Self::strip_once(&chars) {
            chars = next;
        }
        chars.into_iter().collect()
    }
}
