//! Writes a synthetic labeled corpus plus hashed `EMBV` embeddings:
//! `articles.txt`, `labels.tsv`, `articles.embv` (one row per article) and
//! `sentences.embv` (four sentence rows per article).
//!
//! `cargo run -p finnews-cli --example synth_corpus -- --out data --articles 600`

use std::path::PathBuf;

use clap::Parser;
use finnews::corpus::synthetic::{hashed_embeddings, hashed_sentence_embeddings, Generator};
use finnews::corpus::{articles_to_text, labels_to_text, write_embeddings};
use finnews::preprocess::Lexicon;

#[derive(Parser)]
struct Args {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 600)]
    articles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Width of the hashed embeddings.
    #[arg(long, default_value_t = 64)]
    dim: usize,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    std::fs::create_dir_all(&args.out)?;
    let lexicon = Lexicon::bundled();
    let articles = Generator::new(args.seed, &lexicon).corpus(args.articles);
    std::fs::write(args.out.join("articles.txt"), articles_to_text(&articles))?;
    std::fs::write(args.out.join("labels.tsv"), labels_to_text(&articles))?;
    write_embeddings(&hashed_embeddings(&articles, args.dim, args.seed), args.out.join("articles.embv"))?;
    write_embeddings(
        &hashed_sentence_embeddings(&articles, 4, args.dim, args.seed),
        args.out.join("sentences.embv"),
    )?;
    println!("{} articles written to {}", articles.len(), args.out.display());
    Ok(())
}
