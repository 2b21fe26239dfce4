use std::path::PathBuf;

use finnews::corpus::read_embeddings;
use finnews::models::{ModelInput, Prediction};

use crate::data::{self, InputSource};
use crate::Globals;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Tagged articles (RNN-Plus).
    #[arg(long, conflicts_with = "embeddings")]
    pub articles: Option<PathBuf>,
    /// `EMBV` rows (fine-tuning heads); every row is classified.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// POS tags per article instead of the bundled tagger.
    #[arg(long)]
    pub pos_sidecar: Option<PathBuf>,
}

/// `id  label  p_general  p_fund_raising  p_m_and_a  [alpha,...]`, tab-separated.
pub fn format_prediction(id: &str, p: &Prediction) -> String {
    let mut line = format!("{id}\t{}", p.label.name());
    for v in p.probabilities {
        line.push_str(&format!("\t{v:.4}"));
    }
    if let Some(alpha) = &p.alpha {
        let a: Vec<String> = alpha.iter().map(|v| format!("{v:.4}")).collect();
        line.push('\t');
        line.push_str(&a.join(","));
    }
    line
}

pub fn run(g: &Globals, args: &Args) -> anyhow::Result<()> {
    let source = InputSource::from_args(&args.articles, &args.embeddings)?;
    let bundle = data::load_bundle(&args.model, args.pos_sidecar.as_deref())?;
    let model = &bundle.model;
    source.check(model.config())?;

    let mut rows: Vec<(String, ModelInput)> = Vec::new();
    match (&source, &bundle.preprocessor) {
        (InputSource::Articles(p), Some(pre)) => {
            let articles = data::read_articles(p, g.continue_on_error)?;
            let encoded = finnews::par::map(&articles, |a| pre.encode(a));
            for (a, enc) in articles.into_iter().zip(encoded) {
                match enc {
                    Ok(seq) => rows.push((a.id, ModelInput::Sequence(seq))),
                    Err(e) if g.continue_on_error => eprintln!("warning: skipped article {}: {e}", a.id),
                    Err(e) => return Err(anyhow::Error::new(e).context(format!("article {}", a.id))),
                }
            }
        }
        (InputSource::Embeddings(p), _) => {
            let emb = read_embeddings(p)?;
            data::check_embedding_shape(model.config(), &emb)?;
            for (i, id) in emb.article_ids.iter().enumerate() {
                rows.push((id.clone(), ModelInput::Embedding(emb.row(i).to_vec())));
            }
        }
        (InputSource::Articles(_), None) => unreachable!("input kind checked"),
    }

    let inputs: Vec<ModelInput> = rows.iter().map(|r| r.1.clone()).collect();
    let predictions = model.predict_batch(&inputs).into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut out = String::new();
    for ((id, _), p) in rows.iter().zip(&predictions) {
        out.push_str(&format_prediction(id, p));
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}
