use std::path::PathBuf;

use finnews::corpus::{load_labels, read_embeddings};
use finnews::pipeline::{evaluate, render_report};

use crate::data::{self, InputSource};
use crate::output::write_atomic;
use crate::Globals;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Tagged articles (RNN-Plus).
    #[arg(long, conflicts_with = "embeddings")]
    pub articles: Option<PathBuf>,
    /// `EMBV` rows keyed by article id (fine-tuning heads).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// `id<TAB>label` file; selects the evaluated articles.
    #[arg(long)]
    pub labels: PathBuf,
    /// POS tags per article instead of the bundled tagger.
    #[arg(long)]
    pub pos_sidecar: Option<PathBuf>,
    /// Row name in the report (default: the architecture).
    #[arg(long)]
    pub name: Option<String>,
}

pub fn run(g: &Globals, args: &Args) -> anyhow::Result<()> {
    let source = InputSource::from_args(&args.articles, &args.embeddings)?;
    let bundle = data::load_bundle(&args.model, args.pos_sidecar.as_deref())?;
    let model = &bundle.model;
    source.check(model.config())?;
    let examples = match (&source, &bundle.preprocessor) {
        (InputSource::Articles(p), Some(pre)) => {
            let corpus = data::read_corpus(p, Some(&args.labels), g.continue_on_error)?;
            data::encoded_examples(pre, &corpus)?
        }
        (InputSource::Embeddings(p), _) => {
            let emb = read_embeddings(p)?;
            data::check_embedding_shape(model.config(), &emb)?;
            let labels = load_labels(&args.labels)?;
            data::embedding_examples(&emb, p, labels.iter().map(|(id, l)| (id.as_str(), *l)))?
        }
        (InputSource::Articles(_), None) => unreachable!("input kind checked"),
    };
    let report = evaluate(model, &examples)?;
    let name = args.name.clone().unwrap_or_else(|| model.architecture().to_string());
    let rendered = render_report(&[(name, report)]);
    print!("{}", rendered.text);
    write_atomic(&g.out_dir, "metrics.txt", rendered.text.as_bytes())?;
    write_atomic(&g.out_dir, "metrics.tsv", rendered.tsv.as_bytes())?;
    write_atomic(&g.out_dir, "metrics.json", rendered.json.as_bytes())?;
    Ok(())
}
