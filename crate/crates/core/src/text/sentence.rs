/// A half-open range of code-point offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn contains(&self, start: usize, end: usize) -> bool {
        self.start <= start && end <= self.end
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }
}

/// Lowercased tokens that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "z.b.", "d.h.", "u.a.", "o.ä.", "u.u.", "s.o.", "s.u.", "v.a.", "bzw.", "usw.", "ca.",
    "evtl.", "ggf.", "dr.", "prof.", "nr.", "vgl.", "etc.", "bspw.", "inkl.", "max.", "min.",
    "mind.", "std.", "tägl.", "med.", "sog.", "allg.",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '»' | '“' | '”' | '’')
}

/// Rule-based sentence splitter.
///
/// A sentence ends after a run of terminal punctuation (plus closing quotes or
/// brackets) that is followed by whitespace or the end of the text, unless the
/// token ending in a single period is a known abbreviation. Returned spans
/// start and end on non-whitespace characters; whitespace between sentences
/// belongs to no span.
pub fn split_sentences(text: &str) -> Vec<Span> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(i);
        }
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && is_terminal(chars[j]) {
            j += 1;
        }
        let run_len = j - i;
        while j < chars.len() && is_closing(chars[j]) {
            j += 1;
        }
        let at_break = j == chars.len() || chars[j].is_whitespace();
        let abbreviation = run_len == 1 && c == '.' && {
            let mut w = i;
            while w > 0 && !chars[w - 1].is_whitespace() {
                w -= 1;
            }
            let token: String = chars[w..=i].iter().collect::<String>().to_lowercase();
            ABBREVIATIONS.contains(&token.as_str())
        };
        if at_break && !abbreviation {
            spans.push(Span::new(start.take().unwrap(), j));
        }
        i = j;
    }
    if let Some(s) = start {
        let mut end = chars.len();
        while end > s && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        spans.push(Span::new(s, end));
    }
    spans
}
