//! Synthetic labeled corpora.
//!
//! Labels are carried only by dollar amounts and capitalized out-of-lexicon
//! company names; all other words come from one shared filler pool:
//!
//! * general news: no dollar amount, zero to two company names
//! * fund raising: one dollar amount, exactly one company name
//! * M&A: one dollar amount, two different company names
//!
//! Every article also carries lowercase out-of-lexicon jargon, years and
//! capitalized sentence-initial dictionary words, so neither capitalization
//! nor lexicon membership alone identifies a company name.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Article, EmbeddingMatrix, Label};
use crate::preprocess::Lexicon;

const SYLLABLES: &[&str] = &[
    "zor", "vex", "qua", "tri", "lum", "nex", "ory", "bra", "kel", "dax", "vin", "sto", "phy",
    "rix", "zen", "gor", "quin", "xel", "myr", "tev", "ulo", "pax", "yra", "cor",
];

const FILLER: &[&str] = &[
    "the", "company", "said", "on", "market", "new", "plans", "to", "its", "business", "with",
    "for", "a", "year", "and", "investors", "growth", "in", "of", "today", "report", "group",
    "expects", "products", "customers", "team", "board", "week", "strong", "global", "service",
    "price", "expand", "industry", "firm", "early", "after", "support", "research", "people",
];

/// Per-label article counts of the reference corpus, all splits together.
pub const REFERENCE_LABEL_COUNTS: [usize; 3] = [2925 + 836 + 418, 2885 + 824 + 412, 522 + 149 + 75];

pub struct Generator<'a> {
    rng: ChaCha8Rng,
    lexicon: &'a Lexicon,
    filler: Vec<&'static str>,
}

impl<'a> Generator<'a> {
    pub fn new(seed: u64, lexicon: &'a Lexicon) -> Self {
        let filler: Vec<&'static str> = FILLER.iter().copied().filter(|w| lexicon.contains(w)).collect();
        assert!(filler.len() >= 10, "lexicon lacks the filler vocabulary");
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            lexicon,
            filler,
        }
    }

    fn coined(&mut self) -> String {
        loop {
            let n = self.rng.gen_range(2..=3);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(&mut self.rng).unwrap()).collect();
            if !self.lexicon.contains(&w) {
                return w;
            }
        }
    }

    fn company(&mut self) -> String {
        let w = self.coined();
        let mut c = w.chars();
        let first = c.next().unwrap().to_ascii_uppercase();
        std::iter::once(first).chain(c).collect()
    }

    fn amount(&mut self) -> String {
        if self.rng.gen_bool(0.5) {
            format!("${}", self.rng.gen_range(1..1000))
        } else {
            format!("${}.{}", self.rng.gen_range(1..1000), self.rng.gen_range(0..10))
        }
    }

    fn filler_word(&mut self) -> String {
        self.filler.choose(&mut self.rng).unwrap().to_string()
    }

    /// One article with the given label.
    pub fn article(&mut self, id: String, label: Label) -> Article {
        let mut specials: Vec<String> = Vec::new();
        match label {
            Label::GeneralNews => {
                for _ in 0..self.rng.gen_range(0..=2) {
                    specials.push(self.company());
                }
            }
            Label::FundRaising => {
                specials.push(self.company());
                specials.push(self.amount());
            }
            Label::MergerAcquisition => {
                let a = self.company();
                let mut b = self.company();
                while b == a {
                    b = self.company();
                }
                specials.push(a);
                specials.push(b);
                specials.push(self.amount());
            }
        }
        for _ in 0..self.rng.gen_range(0..=2) {
            specials.push(self.coined());
        }
        if self.rng.gen_bool(0.5) {
            specials.push(self.rng.gen_range(1990..2025).to_string());
        }

        let n_sent = self.rng.gen_range(2..=3);
        let mut segments: Vec<Vec<String>> = Vec::with_capacity(n_sent + 1);
        segments.push((0..self.rng.gen_range(3..=5)).map(|_| self.filler_word()).collect());
        for _ in 0..n_sent {
            segments.push((0..self.rng.gen_range(5..=8)).map(|_| self.filler_word()).collect());
        }
        for s in specials {
            let seg = self.rng.gen_range(0..segments.len());
            // Position 0 is reserved for the capitalized filler word.
            let pos = self.rng.gen_range(1..=segments[seg].len());
            segments[seg].insert(pos, s);
        }
        let mut sentences: Vec<String> = segments
            .into_iter()
            .map(|mut words| {
                let w = &mut words[0];
                *w = w[..1].to_uppercase() + &w[1..];
                words.join(" ")
            })
            .collect();
        let headline = sentences.remove(0);
        let synopsis = sentences.into_iter().map(|s| s + ".").collect();
        Article::new(id, headline, synopsis, Some(label))
    }

    /// Articles with exactly `counts[l]` items of each label, interleaved in
    /// seeded random order.
    pub fn corpus_with_counts(&mut self, counts: [usize; 3]) -> Vec<Article> {
        let mut labels: Vec<Label> = Label::ALL
            .iter()
            .zip(counts)
            .flat_map(|(l, n)| std::iter::repeat_n(*l, n))
            .collect();
        labels.shuffle(&mut self.rng);
        labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| self.article(format!("s{:06}", i + 1), l))
            .collect()
    }

    /// `n` articles with labels drawn uniformly.
    pub fn corpus(&mut self, n: usize) -> Vec<Article> {
        (0..n)
            .map(|i| {
                let l = Label::ALL[self.rng.gen_range(0..3)];
                self.article(format!("s{:06}", i + 1), l)
            })
            .collect()
    }
}

/// Fixed pseudo-random vector for a token, derived from a hash of the token
/// and `seed`; entries are uniform in [-1, 1).
pub fn token_vector(token: &str, dim: usize, seed: u64) -> Vec<f32> {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(token.as_bytes())
        .finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

/// Sentence-level embeddings built as the mean of fixed random token
/// vectors. Stands in for a frozen base model that has no notion of the
/// word-context features.
pub fn hashed_embeddings(articles: &[Article], dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut data = Vec::with_capacity(articles.len() * dim);
    for a in articles {
        let tokens = a.tokens();
        let mut acc = vec![0.0f32; dim];
        for t in &tokens {
            for (s, v) in acc.iter_mut().zip(token_vector(&t.to_lowercase(), dim, seed)) {
                *s += v;
            }
        }
        let n = tokens.len().max(1) as f32;
        data.extend(acc.into_iter().map(|x| x / n));
    }
    let ids = articles.iter().map(|a| a.id.clone()).collect();
    EmbeddingMatrix::new(1, dim, ids, data).expect("shape is consistent")
}

/// Per-sentence variant (`steps` rows per article, zero rows for missing
/// sentences) for the attention head.
pub fn hashed_sentence_embeddings(articles: &[Article], steps: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut data = Vec::with_capacity(articles.len() * steps * dim);
    for a in articles {
        let sents: Vec<&str> = a.sentences().collect();
        for s in 0..steps {
            let mut acc = vec![0.0f32; dim];
            if let Some(text) = sents.get(s) {
                let tokens = crate::preprocess::tokenize(text);
                for t in &tokens {
                    for (x, v) in acc.iter_mut().zip(token_vector(&t.to_lowercase(), dim, seed)) {
                        *x += v;
                    }
                }
                let n = tokens.len().max(1) as f32;
                acc.iter_mut().for_each(|x| *x /= n);
            }
            data.extend(acc);
        }
    }
    let ids = articles.iter().map(|a| a.id.clone()).collect();
    EmbeddingMatrix::new(steps, dim, ids, data).expect("shape is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{classify_token, TokenClass};

    #[test]
    fn label_signal_is_as_documented() {
        let lex = Lexicon::bundled();
        let mut g = Generator::new(3, &lex);
        for a in g.corpus(300) {
            let toks = a.tokens();
            let dollars = toks.iter().filter(|t| classify_token(t, &lex) == TokenClass::DollarNum).count();
            let names = toks
                .iter()
                .filter(|t| {
                    classify_token(t, &lex) == TokenClass::Ilgte && t.chars().next().unwrap().is_uppercase()
                })
                .count();
            match a.label.unwrap() {
                Label::GeneralNews => assert!(dollars == 0 && names <= 2),
                Label::FundRaising => assert!(dollars == 1 && names == 1),
                Label::MergerAcquisition => assert!(dollars == 1 && names == 2),
            }
            assert!(a.synopsis_sentences.len() >= 2 && a.synopsis_sentences.len() <= 3);
            assert!(toks.len() <= 50);
        }
    }

    #[test]
    fn counts_and_determinism() {
        let lex = Lexicon::bundled();
        let a = Generator::new(1, &lex).corpus_with_counts([5, 4, 3]);
        let b = Generator::new(1, &lex).corpus_with_counts([5, 4, 3]);
        assert_eq!(a, b);
        let n = |l| a.iter().filter(|x| x.label == Some(l)).count();
        assert_eq!((n(Label::GeneralNews), n(Label::FundRaising), n(Label::MergerAcquisition)), (5, 4, 3));
    }

    #[test]
    fn token_vectors_are_fixed() {
        assert_eq!(token_vector("deal", 8, 1), token_vector("deal", 8, 1));
        assert_ne!(token_vector("deal", 8, 1), token_vector("deal", 8, 2));
        let e = hashed_sentence_embeddings(&Generator::new(1, &Lexicon::bundled()).corpus(4), 3, 8, 0);
        assert_eq!(e.row_len(), 24);
    }
}
