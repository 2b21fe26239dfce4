use super::tagger::{PerceptronTagger, PosSidecar, PosTag, POS_PAD};
use super::{classify_token, tokenize, word_context, Lexicon, PreprocessError, TokenClass, TokenRecord, Vocab};
use crate::corpus::Article;

pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_MAX_CHARS: usize = 16;
/// Context flags per step: capitalized, legitimate, `.com`/`.ai` suffix.
pub const CONTEXT_FEATURES: usize = 3;

pub const CHAR_PAD: u32 = 0;
pub const CHAR_OTHER: u32 = 37;
/// PAD, a-z, 0-9, OTHER.
pub const CHAR_VOCAB_SIZE: usize = 38;

/// Fixed-length encoding of one article.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSequence {
    pub token_ids: Vec<u32>,
    /// `steps x CONTEXT_FEATURES`, row-major.
    pub context_features: Vec<f32>,
    pub pos_ids: Vec<PosTag>,
    pub mask: Vec<bool>,
    /// Character ids for every ILGTE position, in position order.
    pub ilgte_chars: Vec<(usize, Vec<u32>)>,
}

impl EncodedSequence {
    pub fn steps(&self) -> usize {
        self.token_ids.len()
    }

    pub fn active_len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Extends the sequence with `extra` padded steps.
    pub fn padded_to(&self, steps: usize) -> Self {
        let mut out = self.clone();
        let extra = steps.saturating_sub(self.steps());
        out.token_ids.extend(std::iter::repeat_n(Vocab::PAD, extra));
        out.pos_ids.extend(std::iter::repeat_n(POS_PAD, extra));
        out.mask.extend(std::iter::repeat_n(false, extra));
        out.context_features
            .extend(std::iter::repeat_n(0.0, extra * CONTEXT_FEATURES));
        out
    }
}

pub fn char_id(c: char) -> u32 {
    let c = c.to_lowercase().next().unwrap_or(c);
    match c {
        'a'..='z' => c as u32 - 'a' as u32 + 1,
        '0'..='9' => c as u32 - '0' as u32 + 27,
        _ => CHAR_OTHER,
    }
}

/// Character ids for a token, case-folded, padded or trimmed to `max_chars`.
pub fn char_embed_ids(token: &str, max_chars: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = token.chars().take(max_chars).map(char_id).collect();
    ids.resize(max_chars, CHAR_PAD);
    ids
}

/// Everything needed to turn articles into model inputs.
#[derive(Clone, Debug)]
pub struct Preprocessor {
    pub lexicon: Lexicon,
    pub vocab: Vocab,
    pub tagger: PerceptronTagger,
    pub steps: usize,
    pub max_chars: usize,
    pub sidecar: Option<PosSidecar>,
}

impl Preprocessor {
    pub fn new(lexicon: Lexicon, vocab: Vocab, tagger: PerceptronTagger, steps: usize) -> Self {
        Self {
            lexicon,
            vocab,
            tagger,
            steps,
            max_chars: DEFAULT_MAX_CHARS,
            sidecar: None,
        }
    }

    /// POS tags for all article tokens (headline first, then each sentence).
    pub fn pos_tags(&self, article: &Article, n_tokens: usize) -> Result<Vec<PosTag>, PreprocessError> {
        if let Some(sidecar) = &self.sidecar {
            let tags = sidecar.tags.get(&article.id).map(Vec::as_slice).unwrap_or(&[]);
            if tags.len() != n_tokens {
                return Err(PreprocessError::SidecarLengthMismatch {
                    article: article.id.clone(),
                    expected: n_tokens,
                    got: tags.len(),
                });
            }
            return Ok(tags.to_vec());
        }
        let mut tags = self.tagger.tag(&tokenize(&article.headline));
        for s in &article.synopsis_sentences {
            tags.extend(self.tagger.tag(&tokenize(s)));
        }
        Ok(tags)
    }

    pub fn records(&self, article: &Article) -> Result<Vec<TokenRecord>, PreprocessError> {
        let tokens = article.tokens();
        let tags = self.pos_tags(article, tokens.len())?;
        Ok(tokens
            .iter()
            .zip(tags)
            .map(|(t, tag)| TokenRecord::new(t, tag, &self.lexicon))
            .collect())
    }

    pub fn encode(&self, article: &Article) -> Result<EncodedSequence, PreprocessError> {
        let tokens = article.tokens();
        let tags = self.pos_tags(article, tokens.len())?;
        Ok(encode_tokens(
            &tokens,
            &tags,
            &self.vocab,
            &self.lexicon,
            self.steps,
            self.max_chars,
        ))
    }
}

/// Encodes an article with the bundled tagging path.
pub fn encode_sequence(
    article: &Article,
    vocab: &Vocab,
    lexicon: &Lexicon,
    tagger: &PerceptronTagger,
    steps: usize,
) -> EncodedSequence {
    let pre = Preprocessor {
        lexicon: lexicon.clone(),
        vocab: vocab.clone(),
        tagger: tagger.clone(),
        steps,
        max_chars: DEFAULT_MAX_CHARS,
        sidecar: None,
    };
    pre.encode(article).expect("tagger path cannot fail")
}

fn encode_tokens(
    tokens: &[String],
    tags: &[PosTag],
    vocab: &Vocab,
    lexicon: &Lexicon,
    steps: usize,
    max_chars: usize,
) -> EncodedSequence {
    let mut seq = EncodedSequence {
        token_ids: vec![Vocab::PAD; steps],
        context_features: vec![0.0; steps * CONTEXT_FEATURES],
        pos_ids: vec![POS_PAD; steps],
        mask: vec![false; steps],
        ilgte_chars: Vec::new(),
    };
    for (i, (tok, tag)) in tokens.iter().zip(tags).take(steps).enumerate() {
        let class = classify_token(tok, lexicon);
        let ctx = word_context(tok, lexicon);
        seq.token_ids[i] = vocab.id_for(tok, class);
        seq.pos_ids[i] = *tag;
        seq.mask[i] = true;
        let f = &mut seq.context_features[i * CONTEXT_FEATURES..(i + 1) * CONTEXT_FEATURES];
        f[0] = ctx.cap as u8 as f32;
        f[1] = ctx.legit as u8 as f32;
        f[2] = ctx.domain_suffix as u8 as f32;
        if class == TokenClass::Ilgte {
            seq.ilgte_chars.push((i, char_embed_ids(tok, max_chars)));
        }
    }
    seq
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Lexicon, Vocab, PerceptronTagger) {
        let lex = Lexicon::from_words(["the", "deal", "closed", "big", "it", "was"]).unwrap();
        let arts = [Article::new("a", "The deal", vec!["It was big.".into()], None)];
        let vocab = Vocab::build(&arts, &lex, 1).unwrap();
        (lex, vocab, PerceptronTagger::bundled())
    }

    fn words(n: usize) -> Article {
        let text: Vec<&str> = std::iter::repeat_n("deal", n - 1).collect();
        Article::new("w", "Zyxtra", vec![text.join(" ")], None)
    }

    #[test]
    fn truncates_long_articles() {
        let (lex, vocab, tagger) = setup();
        let seq = encode_sequence(&words(60), &vocab, &lex, &tagger, 50);
        assert_eq!(seq.steps(), 50);
        assert!(seq.mask.iter().all(|m| *m));
    }

    #[test]
    fn pads_short_articles() {
        let (lex, vocab, tagger) = setup();
        let seq = encode_sequence(&words(10), &vocab, &lex, &tagger, 50);
        let want: Vec<bool> = (0..50).map(|i| i < 10).collect();
        assert_eq!(seq.mask, want);
        for i in 10..50 {
            assert_eq!(seq.token_ids[i], Vocab::PAD);
            assert_eq!(seq.pos_ids[i], POS_PAD);
            assert!(seq.context_features[i * 3..i * 3 + 3].iter().all(|x| *x == 0.0));
        }
        assert_eq!(seq.token_ids[0], Vocab::ILGTE);
        assert_eq!(&seq.context_features[0..3], &[1.0, 0.0, 0.0]);
        assert_eq!(seq.ilgte_chars.len(), 1);
        assert_eq!(seq.ilgte_chars[0].0, 0);
    }

    #[test]
    fn sidecar_length_contract() {
        let (lex, vocab, tagger) = setup();
        let mut pre = Preprocessor::new(lex, vocab, tagger, 50);
        let art = Article::new("a1", "The deal", vec!["closed".into()], None);
        let mut sidecar = PosSidecar::default();
        let dt = PosTag::from_name("DT").unwrap();
        sidecar.tags.insert("a1".into(), vec![dt, dt]);
        pre.sidecar = Some(sidecar.clone());
        assert!(matches!(
            pre.encode(&art),
            Err(PreprocessError::SidecarLengthMismatch { expected: 3, got: 2, .. })
        ));
        sidecar.tags.insert("a1".into(), vec![dt, dt, dt]);
        pre.sidecar = Some(sidecar);
        let seq = pre.encode(&art).unwrap();
        assert_eq!(&seq.pos_ids[..3], &[dt, dt, dt]);
    }

    #[test]
    fn char_ids() {
        let i = |c| char_id(c);
        assert_eq!(
            char_embed_ids("iPSCs", 8),
            vec![i('i'), i('p'), i('s'), i('c'), i('s'), 0, 0, 0]
        );
        assert_eq!(char_embed_ids("", 4), vec![0; 4]);
        assert_eq!(char_embed_ids("abcdef", 3), vec![1, 2, 3]);
        assert_eq!(char_id('Z'), 26);
        assert_eq!(char_id('0'), 27);
        assert_eq!(char_id('9'), 36);
        assert_eq!(char_id('&'), CHAR_OTHER);
        assert_eq!(char_id('é'), CHAR_OTHER);
    }

    #[test]
    fn char_ids_invert() {
        // inverse table built independently from the alphabet
        let table: Vec<char> = std::iter::once('_')
            .chain('a'..='z')
            .chain('0'..='9')
            .chain(std::iter::once('?'))
            .collect();
        assert_eq!(table.len(), CHAR_VOCAB_SIZE);
        let ids = char_embed_ids("Zyx9", 6);
        let back: String = ids.iter().map(|&id| table[id as usize]).collect();
        assert_eq!(back, "zyx9__");
    }
}
