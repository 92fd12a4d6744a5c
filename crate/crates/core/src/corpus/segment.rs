use serde::{Deserialize, Serialize};

/// Abbreviations (lowercase, with their final period) after which a period
/// does not end a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "etc.", "cf.", "vs.", "viz.", "al.", "no.", "nos.", "sec.", "secs.", "art.", "arts.", "para.",
    "paras.", "ch.", "p.", "pp.", "fig.", "vol.", "ed.", "approx.", "incl.", "excl.", "dept.", "est.", "inc.",
    "ltd.", "llc.", "co.", "corp.", "plc.", "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "u.s.",
    "u.k.", "e.u.", "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.", "sept.", "oct.", "nov.",
    "dec.", "tel.", "ext.",
];

/// Sentences with fewer whitespace-separated words are joined to the next.
pub const MIN_WORDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    /// byte offsets into the text it was cut from; `text == source[start..end]`
    pub start: usize,
    pub end: usize,
}

const CLOSERS: &[char] = &['"', '\'', ')', ']', '’', '”', '»'];
const OPENERS: &[char] = &['"', '\'', '“', '‘', '«', '('];

fn ends_with_abbreviation(before: &str) -> bool {
    let word = before.rsplit(char::is_whitespace).next().unwrap_or("");
    let word = word.trim_start_matches(OPENERS);
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Byte positions where a sentence ends (exclusive).
fn boundaries(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut k = 0;
    while k < chars.len() {
        let (pos, c) = chars[k];
        if c == '\n' {
            out.push(pos);
            k += 1;
            continue;
        }
        if !matches!(c, '.' | '?' | '!') {
            k += 1;
            continue;
        }
        let mut j = k + 1;
        while j < chars.len() && matches!(chars[j].1, '.' | '?' | '!') {
            j += 1;
        }
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let mut w = j;
        while w < chars.len() && chars[w].1.is_whitespace() && chars[w].1 != '\n' {
            w += 1;
        }
        let next = chars.get(w).map(|&(_, ch)| ch);
        let starts_new = w > j
            && matches!(next, Some(n) if n.is_uppercase() || n.is_ascii_digit() || OPENERS.contains(&n));
        let guarded = c == '.' && ends_with_abbreviation(&text[..pos + 1]);
        if starts_new && !guarded {
            out.push(end);
        }
        k = j.max(k + 1);
    }
    out
}

/// Splits text into sentences. A sentence ends after `.`, `?` or `!`
/// (and any closing quotes or brackets) when whitespace and an uppercase
/// letter, digit or opening quote follow, unless the period belongs to a
/// known abbreviation. Line breaks always end a sentence. Pieces shorter
/// than [`MIN_WORDS`] words are merged into the following sentence.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for b in boundaries(text).into_iter().chain([text.len()]) {
        if b < start {
            continue;
        }
        let seg = &text[start..b];
        let lead = seg.len() - seg.trim_start().len();
        let trimmed = seg.trim();
        if !trimmed.is_empty() {
            pieces.push((start + lead, start + lead + trimmed.len()));
        }
        start = b;
    }
    let mut out: Vec<Sentence> = Vec::with_capacity(pieces.len());
    let mut pending: Option<usize> = None;
    for (i, &(s, e)) in pieces.iter().enumerate() {
        let s = pending.take().unwrap_or(s);
        let words = text[s..e].split_whitespace().count();
        if words < MIN_WORDS && i + 1 < pieces.len() {
            pending = Some(s);
            continue;
        }
        out.push(Sentence {
            text: text[s..e].to_string(),
            start: s,
            end: e,
        });
    }
    out
}
