use std::path::PathBuf;

use finnews::corpus::{articles_to_text, labels_to_text, split_corpus};
use finnews::preprocess::{read_pos_sidecar, PerceptronTagger, Preprocessor, TokenRecord, Vocab, DEFAULT_STEPS};

use super::pick;
use crate::data;
use crate::output::write_atomic;
use crate::Globals;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Tagged article file (default: `corpus.articles`).
    #[arg(long)]
    articles: Option<PathBuf>,
    /// `id<TAB>label` file (default: `corpus.labels`, optional).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Word list (default: `corpus.lexicon`, else bundled).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// POS tags per article (default: `corpus.pos_sidecar`, else tagged here).
    #[arg(long)]
    pos_sidecar: Option<PathBuf>,
}

const SPLIT_NAMES: [&str; 3] = ["train", "validation", "test"];

fn flag(b: bool) -> u8 {
    b as u8
}

fn record_line(split: &str, id: &str, position: usize, r: &TokenRecord) -> String {
    format!(
        "{split}\t{id}\t{position}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        r.surface,
        r.token_class,
        flag(r.cap_flag),
        flag(r.legit_flag),
        r.pos_tag,
        flag(r.domain_suffix_flag)
    )
}

/// Writes the three splits, the training vocabulary, the lexicon and one
/// feature record per token.
pub fn run(g: &Globals, args: &Args) -> anyhow::Result<()> {
    let c = &g.config.corpus;
    let articles = pick(&args.articles, &c.articles, "article file")?;
    let labels = args.labels.as_deref().or(c.labels.as_deref());
    let lexicon = data::lexicon(args.lexicon.as_deref().or(c.lexicon.as_deref()))?;
    let corpus = data::read_corpus(articles, labels, g.continue_on_error)?;
    let split = split_corpus(&corpus, c.split, g.seed())?;
    let vocab = Vocab::build(&split.train, &lexicon, c.min_freq)?;

    let mut pre = Preprocessor::new(lexicon.clone(), vocab.clone(), PerceptronTagger::bundled(), DEFAULT_STEPS);
    if let Some(p) = args.pos_sidecar.as_deref().or(c.pos_sidecar.as_deref()) {
        pre.sidecar = Some(read_pos_sidecar(p)?);
    }
    let mut tokens = String::from("split\tarticle\tposition\tsurface\tclass\tcap\tlegit\tpos\tdomain_suffix\n");
    for (name, part) in SPLIT_NAMES.iter().zip(split.parts()) {
        let records = finnews::par::try_map(part, |a| pre.records(a))?;
        for (a, recs) in part.iter().zip(&records) {
            for (i, r) in recs.iter().enumerate() {
                tokens.push_str(&record_line(name, &a.id, i, r));
            }
        }
        write_atomic(&g.out_dir, &format!("{name}.txt"), articles_to_text(part).as_bytes())?;
        if labels.is_some() {
            write_atomic(&g.out_dir, &format!("{name}.labels.tsv"), labels_to_text(part).as_bytes())?;
        }
    }
    write_atomic(&g.out_dir, "tokens.tsv", tokens.as_bytes())?;
    write_atomic(&g.out_dir, data::VOCAB_FILE, vocab.to_text().as_bytes())?;
    write_atomic(&g.out_dir, data::LEXICON_FILE, lexicon.to_text().as_bytes())?;
    println!(
        "{} / {} / {} articles, vocabulary of {} ids, written to {}",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        vocab.len(),
        g.out_dir.display()
    );
    Ok(())
}
