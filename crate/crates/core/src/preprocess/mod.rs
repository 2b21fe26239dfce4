//! Tokenization, token classing and word-context features.

mod encode;
mod tagger;
mod vocab;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use encode::{
    char_embed_ids, char_id, encode_sequence, EncodedSequence, Preprocessor, CHAR_OTHER,
    CHAR_PAD, CHAR_VOCAB_SIZE, CONTEXT_FEATURES, DEFAULT_MAX_CHARS, DEFAULT_STEPS,
};
pub use tagger::{
    parse_tagged_corpus, read_pos_sidecar, PerceptronTagger, PosSidecar, PosTag, TaggedSentence,
    BUNDLED_TAGGED_SAMPLE, PENN_TAGS, POS_PAD, POS_VOCAB_SIZE,
};
pub use vocab::{Vocab, DEFAULT_MIN_FREQ};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("lexicon {path}: {source}")]
    LexiconIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("lexicon {0} contains no words")]
    EmptyLexicon(PathBuf),
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("min_freq must be at least 1")]
    BadMinFreq,
    #[error("POS sidecar has {got} tags for {expected} tokens (article {article})")]
    SidecarLengthMismatch {
        article: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown POS tag {0:?}")]
    UnknownTag(String),
    #[error("{path}:{line}: {msg}")]
    BadSidecarLine {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("tagged corpus line {line}: bad token {token:?}")]
    BadTaggedToken { line: usize, token: String },
    #[error("vocabulary file {path}: {msg}")]
    BadVocab { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Set of legitimate (dictionary) English words, stored lowercase.
#[derive(Clone, Debug)]
pub struct Lexicon {
    words: HashSet<String>,
}

impl Lexicon {
    /// Builds a lexicon from an iterator of words. Returns `None` when no
    /// non-blank word is supplied.
    pub fn from_words<I, S>(words: I) -> Option<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: HashSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            None
        } else {
            Some(Self { words })
        }
    }

    /// Reads a one-word-per-line lexicon file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PreprocessError::LexiconIo {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_words(text.lines()).ok_or_else(|| PreprocessError::EmptyLexicon(path.into()))
    }

    /// The small English word list bundled with the crate.
    pub fn bundled() -> Self {
        Self::from_words(BUNDLED_LEXICON.lines()).expect("bundled lexicon is non-empty")
    }

    /// One word per line, sorted.
    pub fn to_text(&self) -> String {
        let mut words: Vec<&str> = self.words.iter().map(String::as_str).collect();
        words.sort_unstable();
        let mut s = words.join("\n");
        s.push('\n');
        s
    }

    pub fn contains(&self, word: &str) -> bool {
        if self.words.contains(word) {
            return true;
        }
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Bundled lexicon text (one lowercase word per line).
pub const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenClass {
    Legit,
    Ilgte,
    Num,
    DollarNum,
}

impl TokenClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenClass::Legit => "LEGIT",
            TokenClass::Ilgte => "ILGTE",
            TokenClass::Num => "NUM",
            TokenClass::DollarNum => "DOLLAR_NUM",
        }
    }
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A token together with its class and word-context features.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenRecord {
    pub surface: String,
    pub token_class: TokenClass,
    pub cap_flag: bool,
    pub legit_flag: bool,
    pub pos_tag: PosTag,
    pub domain_suffix_flag: bool,
}

impl TokenRecord {
    pub fn new(surface: &str, pos_tag: PosTag, lexicon: &Lexicon) -> Self {
        let token_class = classify_token(surface, lexicon);
        let ctx = word_context(surface, lexicon);
        Self {
            surface: surface.to_string(),
            token_class,
            cap_flag: ctx.cap,
            legit_flag: ctx.legit,
            pos_tag,
            domain_suffix_flag: ctx.domain_suffix,
        }
    }
}

// Both ends.
const PUNCT_TRAILING: &[char] = &[
    '.', ',', ';', ':', '!', '?', '(', ')', '"', '\'', '\u{201c}', '\u{201d}', '\u{2018}',
    '\u{2019}',
];
const PUNCT_LEADING: &[char] = &['(', ')', '"', '\'', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];

/// Splits text into word tokens.
///
/// Whitespace separates chunks, every hyphen splits a chunk (the hyphen is
/// dropped), and punctuation at either end of a piece becomes its own token.
/// A `$` fused to a number is left in place.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        for piece in chunk.split('-') {
            push_piece(piece, &mut out);
        }
    }
    out
}

fn push_piece(piece: &str, out: &mut Vec<String>) {
    let mut start = 0;
    let mut leading = Vec::new();
    for (i, c) in piece.char_indices() {
        if PUNCT_LEADING.contains(&c) {
            leading.push(c);
            start = i + c.len_utf8();
        } else {
            break;
        }
    }
    let rest = &piece[start..];
    let mut end = rest.len();
    let mut trailing = Vec::new();
    for (i, c) in rest.char_indices().rev() {
        if PUNCT_TRAILING.contains(&c) {
            trailing.push(c);
            end = i;
        } else {
            break;
        }
    }
    out.extend(leading.into_iter().map(String::from));
    if end > 0 {
        out.push(rest[..end].to_string());
    }
    out.extend(trailing.into_iter().rev().map(String::from));
}

/// Words that end in a period without ending a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "Inc.", "Ltd.", "Corp.", "Co.", "Cos.", "Bros.", "Plc.", "U.S.", "U.K.", "U.N.", "E.U.",
    "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "Jr.", "Sr.", "St.", "vs.", "e.g.", "i.e.", "etc.",
    "No.", "approx.", "Jan.", "Feb.", "Mar.", "Apr.", "Aug.", "Sept.", "Sep.", "Oct.", "Nov.",
    "Dec.",
];

const CLOSERS: &[char] = &['"', '\'', ')', '\u{201d}', '\u{2019}'];

/// Splits text into sentences at `.`, `!` or `?` followed by whitespace and an
/// uppercase letter, or by the end of the text. Decimal points and the
/// abbreviations in [`ABBREVIATIONS`] never end a sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            // Absorb runs of terminators and closing quotes/brackets.
            let mut j = i + 1;
            while j < chars.len() && (matches!(chars[j].1, '.' | '!' | '?') || CLOSERS.contains(&chars[j].1)) {
                j += 1;
            }
            let end_byte = if j < chars.len() { chars[j].0 } else { text.len() };
            let boundary = if j == chars.len() {
                true
            } else if chars[j].1.is_whitespace() {
                let mut k = j;
                while k < chars.len() && chars[k].1.is_whitespace() {
                    k += 1;
                }
                k == chars.len() || chars[k].1.is_uppercase()
            } else {
                false
            };
            if boundary && !(c == '.' && ends_with_abbreviation(&text[start..end_byte])) {
                let s = text[start..end_byte].trim();
                if !s.is_empty() {
                    sentences.push(s.to_string());
                }
                start = end_byte;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

fn ends_with_abbreviation(segment: &str) -> bool {
    let last = segment.split_whitespace().last().unwrap_or("");
    let last = last.trim_start_matches(PUNCT_LEADING);
    ABBREVIATIONS.contains(&last)
}

/// Returns true for digit strings with optional well-formed thousands
/// separators and an optional decimal fraction.
pub fn is_number(s: &str) -> bool {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    if let Some(f) = frac {
        if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
    }
    if int.is_empty() {
        return false;
    }
    if int.contains(',') {
        let mut groups = int.split(',');
        let first = groups.next().unwrap_or("");
        if first.is_empty() || first.len() > 3 || !first.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
        groups.all(|g| g.len() == 3 && g.bytes().all(|b| b.is_ascii_digit()))
    } else {
        int.bytes().all(|b| b.is_ascii_digit())
    }
}

/// Assigns exactly one [`TokenClass`] to a token.
pub fn classify_token(token: &str, lexicon: &Lexicon) -> TokenClass {
    if let Some(rest) = token.strip_prefix('$') {
        if is_number(rest) {
            return TokenClass::DollarNum;
        }
    }
    if is_number(token) {
        return TokenClass::Num;
    }
    if lexicon.contains(token) {
        TokenClass::Legit
    } else {
        TokenClass::Ilgte
    }
}

/// The three binary word-context flags carried alongside the POS tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordContext {
    pub cap: bool,
    pub legit: bool,
    pub domain_suffix: bool,
}

impl WordContext {
    pub fn as_tuple(self) -> (u8, u8, u8) {
        (self.cap as u8, self.legit as u8, self.domain_suffix as u8)
    }
}

pub fn word_context(token: &str, lexicon: &Lexicon) -> WordContext {
    let lower = token.to_lowercase();
    WordContext {
        cap: token.chars().next().is_some_and(char::is_uppercase),
        legit: classify_token(token, lexicon) == TokenClass::Legit,
        domain_suffix: lower.ends_with(".com") || lower.ends_with(".ai"),
    }
}
