//! Averaged-perceptron part-of-speech tagger over the Penn Treebank tagset.
//!
//! The feature set follows the classic greedy left-to-right perceptron
//! tagger: word, affixes, neighbouring words and the two previous predicted
//! tags, plus a capitalization feature.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PreprocessError;

/// Penn Treebank tags. Tag id `i + 1` names `PENN_TAGS[i]`; id 0 is padding.
pub const PENN_TAGS: [&str; 45] = [
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP",
    "NNPS", "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB",
    "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", "$", "#", "``", "''",
    "-LRB-", "-RRB-", ",", ".", ":",
];

/// 45 tags plus the padding id.
pub const POS_VOCAB_SIZE: usize = PENN_TAGS.len() + 1;

pub const POS_PAD: PosTag = PosTag(0);

/// A POS tag id (0 = padding, 1..=45 = Penn tags).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PosTag(pub u8);

impl PosTag {
    pub fn from_name(name: &str) -> Option<Self> {
        PENN_TAGS
            .iter()
            .position(|t| *t == name)
            .map(|i| PosTag(i as u8 + 1))
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            0 => "PAD",
            i => PENN_TAGS[i as usize - 1],
        }
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type TaggedSentence = Vec<(String, PosTag)>;

/// Tagged sample bundled with the crate, one `word/TAG` sentence per line.
pub const BUNDLED_TAGGED_SAMPLE: &str = include_str!("../../data/pos_sample.txt");

/// Parses `word/TAG word/TAG ...` lines. `#` lines and blank lines are skipped.
pub fn parse_tagged_corpus(text: &str) -> Result<Vec<TaggedSentence>, PreprocessError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut sent = Vec::new();
        for tok in line.split_whitespace() {
            let bad = || PreprocessError::BadTaggedToken {
                line: lineno + 1,
                token: tok.to_string(),
            };
            let (word, tag) = tok.rsplit_once('/').ok_or_else(bad)?;
            if word.is_empty() {
                return Err(bad());
            }
            let tag = PosTag::from_name(tag).ok_or_else(bad)?;
            sent.push((word.to_string(), tag));
        }
        out.push(sent);
    }
    Ok(out)
}

const N_CLASSES: usize = POS_VOCAB_SIZE;
const START: [&str; 2] = ["-START-", "-START2-"];
const END: [&str; 2] = ["-END-", "-END2-"];

#[derive(Clone, Debug, Default)]
struct AveragedPerceptron {
    weights: HashMap<String, [f64; N_CLASSES]>,
    totals: HashMap<String, [f64; N_CLASSES]>,
    stamps: HashMap<String, [u64; N_CLASSES]>,
    instances: u64,
}

impl AveragedPerceptron {
    fn scores(&self, features: &[String]) -> [f64; N_CLASSES] {
        let mut scores = [0.0; N_CLASSES];
        for f in features {
            if let Some(w) = self.weights.get(f) {
                for (s, w) in scores.iter_mut().zip(w) {
                    *s += w;
                }
            }
        }
        scores
    }

    fn predict(&self, features: &[String]) -> PosTag {
        let scores = self.scores(features);
        // Skip PAD; ties go to the lowest id.
        let mut best = 1;
        for c in 2..N_CLASSES {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        PosTag(best as u8)
    }

    fn update(&mut self, truth: PosTag, guess: PosTag, features: &[String]) {
        self.instances += 1;
        if truth == guess {
            return;
        }
        for f in features {
            self.bump(f, truth.id(), 1.0);
            self.bump(f, guess.id(), -1.0);
        }
    }

    fn bump(&mut self, feat: &str, class: usize, delta: f64) {
        let w = self.weights.entry(feat.to_string()).or_insert([0.0; N_CLASSES]);
        let t = self.totals.entry(feat.to_string()).or_insert([0.0; N_CLASSES]);
        let s = self.stamps.entry(feat.to_string()).or_insert([0; N_CLASSES]);
        t[class] += (self.instances - s[class]) as f64 * w[class];
        s[class] = self.instances;
        w[class] += delta;
    }

    fn average(&mut self) {
        let n = self.instances.max(1) as f64;
        for (feat, w) in self.weights.iter_mut() {
            let t = self.totals.get(feat).expect("totals track weights");
            let s = self.stamps.get(feat).expect("stamps track weights");
            for c in 0..N_CLASSES {
                let total = t[c] + (self.instances - s[c]) as f64 * w[c];
                w[c] = total / n;
            }
        }
        self.totals.clear();
        self.stamps.clear();
    }
}

/// Greedy averaged-perceptron POS tagger. Immutable once trained.
#[derive(Clone, Debug)]
pub struct PerceptronTagger {
    model: AveragedPerceptron,
    tagdict: HashMap<String, PosTag>,
}

impl PerceptronTagger {
    /// Trains on the bundled sample with a fixed seed.
    pub fn bundled() -> Self {
        let sents = parse_tagged_corpus(BUNDLED_TAGGED_SAMPLE).expect("bundled sample parses");
        Self::train(&sents, 8, 0x7a66)
    }

    pub fn train(sentences: &[TaggedSentence], epochs: usize, seed: u64) -> Self {
        let mut tagger = Self {
            model: AveragedPerceptron::default(),
            tagdict: build_tagdict(sentences),
        };
        let mut order: Vec<usize> = (0..sentences.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..epochs {
            for &si in &order {
                let sent = &sentences[si];
                let words: Vec<&str> = sent.iter().map(|(w, _)| w.as_str()).collect();
                let context = make_context(&words);
                let (mut p1, mut p2) = (START[0].to_string(), START[1].to_string());
                for (i, (word, truth)) in sent.iter().enumerate() {
                    let guess = match tagger.tagdict.get(word) {
                        Some(&t) => t,
                        None => {
                            let feats = features(i + 2, word, &context, &p1, &p2);
                            let guess = tagger.model.predict(&feats);
                            tagger.model.update(*truth, guess, &feats);
                            guess
                        }
                    };
                    p2 = std::mem::replace(&mut p1, guess.name().to_string());
                }
            }
            order.shuffle(&mut rng);
        }
        tagger.model.average();
        tagger
    }

    /// Tags a token sequence; output length equals input length.
    pub fn tag<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<PosTag> {
        let words: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
        let context = make_context(&words);
        let (mut p1, mut p2) = (START[0].to_string(), START[1].to_string());
        let mut out = Vec::with_capacity(words.len());
        for (i, word) in words.iter().enumerate() {
            let tag = match self.tagdict.get(*word) {
                Some(&t) => t,
                None => self
                    .model
                    .predict(&features(i + 2, word, &context, &p1, &p2)),
            };
            out.push(tag);
            p2 = std::mem::replace(&mut p1, tag.name().to_string());
        }
        out
    }
}

fn build_tagdict(sentences: &[TaggedSentence]) -> HashMap<String, PosTag> {
    let mut counts: HashMap<&str, HashMap<PosTag, usize>> = HashMap::new();
    for sent in sentences {
        for (w, t) in sent {
            *counts.entry(w).or_default().entry(*t).or_default() += 1;
        }
    }
    let (freq_thresh, ambiguity_thresh) = (5usize, 0.97);
    counts
        .into_iter()
        .filter_map(|(w, tags)| {
            let n: usize = tags.values().sum();
            let (&tag, &mode) = tags.iter().max_by_key(|(t, c)| (**c, std::cmp::Reverse(**t)))?;
            (n >= freq_thresh && mode as f64 / n as f64 >= ambiguity_thresh)
                .then(|| (w.to_string(), tag))
        })
        .collect()
}

fn normalize(word: &str) -> String {
    let bytes = word.as_bytes();
    if word.len() == 4 && bytes.iter().all(u8::is_ascii_digit) {
        "!YEAR".into()
    } else if bytes.first().is_some_and(u8::is_ascii_digit) {
        "!DIGITS".into()
    } else if word.len() > 1 && word.starts_with('$') && bytes[1].is_ascii_digit() {
        "!DOLLAR".into()
    } else {
        word.to_lowercase()
    }
}

fn make_context(words: &[&str]) -> Vec<String> {
    START
        .iter()
        .map(|s| s.to_string())
        .chain(words.iter().map(|w| normalize(w)))
        .chain(END.iter().map(|s| s.to_string()))
        .collect()
}

fn suffix(s: &str, n: usize) -> &str {
    let start = s.char_indices().rev().nth(n - 1).map_or(0, |(i, _)| i);
    &s[start..]
}

fn prefix(s: &str) -> &str {
    s.char_indices().nth(1).map_or(s, |(i, _)| &s[..i])
}

fn features(i: usize, word: &str, context: &[String], p1: &str, p2: &str) -> Vec<String> {
    let w = &context[i];
    let shape = match word.chars().next() {
        Some(c) if c.is_uppercase() && i == 2 => "Xfirst",
        Some(c) if c.is_uppercase() => "X",
        Some(c) if c.is_ascii_digit() => "d",
        Some(c) if c.is_alphabetic() => "x",
        _ => "p",
    };
    vec![
        "bias".to_string(),
        format!("i suffix {}", suffix(w, 3)),
        format!("i pref1 {}", prefix(w)),
        format!("i shape {shape}"),
        format!("i-1 tag {p1}"),
        format!("i-2 tag {p2}"),
        format!("i tag+i-2 tag {p1} {p2}"),
        format!("i word {w}"),
        format!("i-1 tag+i word {p1} {w}"),
        format!("i-1 word {}", context[i - 1]),
        format!("i-1 suffix {}", suffix(&context[i - 1], 3)),
        format!("i-2 word {}", context[i - 2]),
        format!("i+1 word {}", context[i + 1]),
        format!("i+1 suffix {}", suffix(&context[i + 1], 3)),
        format!("i+2 word {}", context[i + 2]),
    ]
}

/// Per-article tags supplied externally (parity mode).
#[derive(Clone, Debug, Default)]
pub struct PosSidecar {
    pub tags: HashMap<String, Vec<PosTag>>,
}

/// Reads `article_id<TAB>tag1 tag2 ...` lines.
pub fn read_pos_sidecar(path: impl AsRef<Path>) -> Result<PosSidecar, PreprocessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PreprocessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut tags = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| PreprocessError::BadSidecarLine {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected article_id<TAB>tags".into()))?;
        let seq = rest
            .split_whitespace()
            .map(|t| PosTag::from_name(t).ok_or_else(|| PreprocessError::UnknownTag(t.into())))
            .collect::<Result<Vec<_>, _>>()?;
        if tags.insert(id.to_string(), seq).is_some() {
            return Err(bad(format!("duplicate article id {id}")));
        }
    }
    Ok(PosSidecar { tags })
}
