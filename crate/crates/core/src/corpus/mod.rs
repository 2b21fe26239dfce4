//! Tagged news articles, label sidecars, splits and corpus statistics.

mod embv;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{classify_token, split_sentences, tokenize, Lexicon, TokenClass};

pub use embv::{read_embeddings, write_embeddings, EmbeddingMatrix, EMBV_MAGIC, EMBV_VERSION};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing <{0}> block")]
    MissingTag(&'static str),
    #[error("empty {0}")]
    EmptyContent(&'static str),
    #[error("malformed <{0}> block")]
    MalformedTag(&'static str),
    #[error("{path}: article {index}: {source}")]
    InArticle {
        path: PathBuf,
        index: usize,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("{path}:{line}: unknown label name {name:?}")]
    UnknownLabelName {
        path: PathBuf,
        line: usize,
        name: String,
    },
    #[error("duplicate article id {0}")]
    DuplicateArticleId(String),
    #[error("label for unknown article id {0}")]
    DanglingLabel(String),
    #[error("article {0} has no label")]
    MissingLabel(String),
    #[error("{path}:{line}: expected id<TAB>label")]
    BadLabelLine { path: PathBuf, line: usize },
    #[error("{path}: no articles")]
    EmptyFile { path: PathBuf },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("EMBV: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("EMBV: unsupported version {0}")]
    VersionUnsupported(u32),
    #[error("EMBV: truncated payload")]
    TruncatedPayload,
    #[error("EMBV: {0}")]
    DimensionMismatch(String),
    #[error("EMBV: trailing bytes after last row")]
    TrailingBytes,
    #[error("EMBV: row id is not UTF-8")]
    BadRowId,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// News category. The index order is fixed: General, FundRaising, M&A.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    GeneralNews,
    FundRaising,
    MergerAcquisition,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::GeneralNews, Label::FundRaising, Label::MergerAcquisition];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    /// Name used in label files.
    pub fn name(self) -> &'static str {
        match self {
            Label::GeneralNews => "general",
            Label::FundRaising => "fund_raising",
            Label::MergerAcquisition => "m_and_a",
        }
    }

    /// Human-readable column heading.
    pub fn title(self) -> &'static str {
        match self {
            Label::GeneralNews => "General News",
            Label::FundRaising => "Fund Raising News",
            Label::MergerAcquisition => "M&A News",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// One news item: headline plus up to three synopsis sentences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Article {
    pub id: String,
    pub headline: String,
    pub synopsis_sentences: Vec<String>,
    pub label: Option<Label>,
}

pub const MAX_SYNOPSIS_SENTENCES: usize = 3;

impl Article {
    pub fn new(
        id: impl Into<String>,
        headline: impl Into<String>,
        synopsis_sentences: Vec<String>,
        label: Option<Label>,
    ) -> Self {
        Self {
            id: id.into(),
            headline: headline.into(),
            synopsis_sentences,
            label,
        }
    }

    /// All tokens, headline first.
    pub fn tokens(&self) -> Vec<String> {
        let mut toks = tokenize(&self.headline);
        for s in &self.synopsis_sentences {
            toks.extend(tokenize(s));
        }
        toks
    }

    /// Headline plus synopsis sentences.
    pub fn sentences(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.headline.as_str()).chain(self.synopsis_sentences.iter().map(String::as_str))
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn find_ci(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (from..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

fn count_ci(haystack: &str, needle: &str) -> usize {
    let mut n = 0;
    let mut from = 0;
    while let Some(i) = find_ci(haystack, needle, from) {
        n += 1;
        from = i + needle.len();
    }
    n
}

fn extract_block<'a>(raw: &'a str, tag: &'static str) -> Result<Option<&'a str>, CorpusError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let (n_open, n_close) = (count_ci(raw, &open), count_ci(raw, &close));
    match (n_open, n_close) {
        (0, 0) => return Ok(None),
        (1, 1) => {}
        _ => return Err(CorpusError::MalformedTag(tag)),
    }
    let start = find_ci(raw, &open, 0).expect("counted") + open.len();
    let end = find_ci(raw, &close, 0).expect("counted");
    if end < start {
        return Err(CorpusError::MalformedTag(tag));
    }
    Ok(Some(&raw[start..end]))
}

/// Parses a single `<headline>…</headline><Synopsis>…</Synopsis>` article.
///
/// Tag names match case-insensitively. An optional `<id>…</id>` block sets
/// the article id. Whitespace runs collapse to single spaces and the synopsis
/// keeps at most three sentences.
pub fn parse_article(raw_text: &str) -> Result<Article, CorpusError> {
    let headline = extract_block(raw_text, "headline")?;
    let synopsis = extract_block(raw_text, "synopsis")?;
    let id = extract_block(raw_text, "id")?;
    let headline = collapse_ws(headline.ok_or(CorpusError::MissingTag("headline"))?);
    let synopsis = collapse_ws(synopsis.ok_or(CorpusError::MissingTag("Synopsis"))?);
    if headline.is_empty() {
        return Err(CorpusError::EmptyContent("headline"));
    }
    let mut sentences = split_sentences(&synopsis);
    if sentences.is_empty() {
        return Err(CorpusError::EmptyContent("Synopsis"));
    }
    sentences.truncate(MAX_SYNOPSIS_SENTENCES);
    Ok(Article {
        id: id.map(collapse_ws).unwrap_or_default(),
        headline,
        synopsis_sentences: sentences,
        label: None,
    })
}

/// Inverse of [`parse_article`] for well-formed articles.
pub fn serialize_article(article: &Article) -> String {
    let mut s = String::new();
    if !article.id.is_empty() {
        s.push_str(&format!("<id>{}</id>\n", article.id));
    }
    s.push_str(&format!("<headline>{}</headline>\n", article.headline));
    s.push_str(&format!("<Synopsis>{}</Synopsis>\n", article.synopsis_sentences.join(" ")));
    s
}

/// Splits an article file into raw article chunks. Chunks are separated by
/// blank lines; a chunk with an unclosed synopsis absorbs the following ones.
fn article_chunks(text: &str) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut pending = String::new();
    let mut current = String::new();
    let flush = |current: &mut String, pending: &mut String, chunks: &mut Vec<String>| {
        if current.trim().is_empty() {
            current.clear();
            return;
        }
        if !pending.is_empty() {
            pending.push('\n');
        }
        pending.push_str(current);
        current.clear();
        let closed = count_ci(pending, "</synopsis>");
        if closed >= 1
            && closed >= count_ci(pending, "<synopsis>")
            && count_ci(pending, "</headline>") >= count_ci(pending, "<headline>")
        {
            chunks.push(std::mem::take(pending));
        }
    };
    for line in text.lines() {
        if line.trim().is_empty() {
            flush(&mut current, &mut pending, &mut chunks);
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    flush(&mut current, &mut pending, &mut chunks);
    if !pending.trim().is_empty() {
        chunks.push(pending);
    }
    chunks
}

/// Outcome of parsing one chunk of an article file.
pub type ParsedChunk = Result<Article, CorpusError>;

/// Parses every article chunk, assigning `a000001`-style ids by file order
/// where no `<id>` block is present.
pub fn parse_articles_text(text: &str, path: &Path) -> Vec<ParsedChunk> {
    article_chunks(text)
        .iter()
        .enumerate()
        .map(|(i, chunk)| {
            parse_article(chunk)
                .map(|mut a| {
                    if a.id.is_empty() {
                        a.id = format!("a{:06}", i + 1);
                    }
                    a
                })
                .map_err(|e| CorpusError::InArticle {
                    path: path.to_path_buf(),
                    index: i + 1,
                    source: Box::new(e),
                })
        })
        .collect()
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads an unlabeled article file. Fails on the first malformed article and
/// on a file without articles.
pub fn load_articles(path: impl AsRef<Path>) -> Result<Vec<Article>, CorpusError> {
    let path = path.as_ref();
    let articles = parse_articles_text(&read(path)?, path)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    if articles.is_empty() {
        return Err(CorpusError::EmptyFile { path: path.to_path_buf() });
    }
    let mut seen = HashSet::new();
    for a in &articles {
        if !seen.insert(a.id.as_str()) {
            return Err(CorpusError::DuplicateArticleId(a.id.clone()));
        }
    }
    Ok(articles)
}

/// Reads `id<TAB>label` lines.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<(String, Label)>, CorpusError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in read(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, name) = line.split_once('\t').ok_or(CorpusError::BadLabelLine {
            path: path.to_path_buf(),
            line: i + 1,
        })?;
        let label = name.trim().parse().map_err(|name| CorpusError::UnknownLabelName {
            path: path.to_path_buf(),
            line: i + 1,
            name,
        })?;
        out.push((id.trim().to_string(), label));
    }
    Ok(out)
}

/// Pairs articles with labels. Every article must be labeled exactly once
/// and every label must refer to an article.
pub fn attach_labels(articles: &mut [Article], labels: &[(String, Label)]) -> Result<(), CorpusError> {
    let mut map: HashMap<&str, Label> = HashMap::new();
    for (id, label) in labels {
        if map.insert(id, *label).is_some() {
            return Err(CorpusError::DuplicateArticleId(id.clone()));
        }
    }
    for a in articles.iter_mut() {
        a.label = Some(map.remove(a.id.as_str()).ok_or_else(|| CorpusError::MissingLabel(a.id.clone()))?);
    }
    if let Some((id, _)) = labels.iter().find(|(id, _)| map.contains_key(id.as_str())) {
        return Err(CorpusError::DanglingLabel(id.clone()));
    }
    Ok(())
}

/// Loads an article file and its label sidecar.
pub fn load_corpus(path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<Vec<Article>, CorpusError> {
    let mut articles = load_articles(path)?;
    let labels = load_labels(label_path)?;
    attach_labels(&mut articles, &labels)?;
    Ok(articles)
}

/// Writes articles in the tagged text format, blank-line separated.
pub fn articles_to_text(articles: &[Article]) -> String {
    articles.iter().map(serialize_article).collect::<Vec<_>>().join("\n")
}

pub fn labels_to_text(articles: &[Article]) -> String {
    articles
        .iter()
        .filter_map(|a| a.label.map(|l| format!("{}\t{}\n", a.id, l.name())))
        .collect()
}

/// Default train/validation/test fractions.
pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.20, 0.10];

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<Article>,
    pub validation: Vec<Article>,
    pub test: Vec<Article>,
    pub seed: u64,
}

impl CorpusSplit {
    pub fn parts(&self) -> [&[Article]; 3] {
        [&self.train, &self.validation, &self.test]
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`; ties go to the
/// earlier split.
pub fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| n as f64 * r).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = (e + 1e-9).floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Stratified, seeded three-way split. Each label (and the unlabeled group)
/// is apportioned separately; articles keep their input order within a split.
pub fn split_corpus(articles: &[Article], ratios: [f64; 3], seed: u64) -> Result<CorpusSplit, CorpusError> {
    if articles.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let mut groups: BTreeMap<Option<Label>, Vec<usize>> = BTreeMap::new();
    for (i, a) in articles.iter().enumerate() {
        groups.entry(a.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0u8; articles.len()];
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        let counts = apportion(members.len(), ratios);
        let mut it = members.iter();
        for (split, &c) in counts.iter().enumerate() {
            for &i in it.by_ref().take(c) {
                assignment[i] = split as u8;
            }
        }
    }
    let mut parts: [Vec<Article>; 3] = Default::default();
    for (a, &s) in articles.iter().zip(&assignment) {
        parts[s as usize].push(a.clone());
    }
    let [train, validation, test] = parts;
    Ok(CorpusSplit {
        train,
        validation,
        test,
        seed,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub articles: usize,
    pub sentences: usize,
    pub words: usize,
    pub illegitimate_words: usize,
    pub label_counts: BTreeMap<Label, usize>,
}

impl std::ops::Add for CorpusStats {
    type Output = CorpusStats;

    fn add(mut self, rhs: CorpusStats) -> CorpusStats {
        self.articles += rhs.articles;
        self.sentences += rhs.sentences;
        self.words += rhs.words;
        self.illegitimate_words += rhs.illegitimate_words;
        for (l, n) in rhs.label_counts {
            *self.label_counts.entry(l).or_default() += n;
        }
        self
    }
}

impl CorpusStats {
    pub fn label_count(&self, label: Label) -> usize {
        self.label_counts.get(&label).copied().unwrap_or(0)
    }
}

/// Counts articles, sentences (headline counts as one), tokens and ILGTE tokens.
pub fn corpus_stats(articles: &[Article], lexicon: &Lexicon) -> CorpusStats {
    articles
        .iter()
        .map(|a| {
            let tokens = a.tokens();
            let mut s = CorpusStats {
                articles: 1,
                sentences: 1 + a.synopsis_sentences.len(),
                words: tokens.len(),
                illegitimate_words: tokens
                    .iter()
                    .filter(|t| classify_token(t, lexicon) == TokenClass::Ilgte)
                    .count(),
                label_counts: BTreeMap::new(),
            };
            if let Some(l) = a.label {
                s.label_counts.insert(l, 1);
            }
            s
        })
        .fold(CorpusStats::default(), |acc, s| acc + s)
}
