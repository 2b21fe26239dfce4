use std::collections::BTreeMap;

use anyhow::{anyhow, bail};
use finnews::corpus::{articles_to_text, labels_to_text, read_embeddings, split_corpus, Label};
use finnews::models::{load_pretrained_word_embeddings, Example, Model, ModelConfig};
use finnews::nncore::to_nnpk_bytes;
use finnews::pipeline::{dataset_hash, evaluate, render_report, sha256_hex, train_with, RunManifest};
use finnews::preprocess::Vocab;

use super::pick;
use crate::data;
use crate::output::write_atomic;
use crate::Globals;

struct Prepared {
    model: Model,
    sets: [Vec<Example>; 3],
    vocab: Option<Vocab>,
}

fn prepare(g: &Globals, split: &finnews::corpus::CorpusSplit) -> anyhow::Result<Prepared> {
    let cfg = &g.config;
    let c = &cfg.corpus;
    let seed = g.seed();
    match cfg.architecture()? {
        "rnn_plus" => {
            let lexicon = data::lexicon(c.lexicon.as_deref())?;
            let vocab = Vocab::build(&split.train, &lexicon, c.min_freq)?;
            let ModelConfig::RnnPlus(rc) = cfg.model_config(&[("vocab_size", vocab.len())])? else {
                unreachable!("architecture checked above")
            };
            let pre = data::preprocessor(lexicon, vocab.clone(), &rc, c.pos_sidecar.as_deref())?;
            let sets = split.parts().map(|p| data::encoded_examples(&pre, p));
            let [a, b, t] = sets;
            let model = match &c.pretrained_vectors {
                Some(p) => {
                    let pretrained = load_pretrained_word_embeddings(&vocab, p, rc.word_embed_dim, seed)?;
                    eprintln!("pretrained vectors cover {} of {} vocabulary ids", pretrained.hit_count(), vocab.len());
                    Model::rnn_plus_with_pretrained(rc, seed, &pretrained, c.freeze_pretrained)?
                }
                None => Model::new(ModelConfig::RnnPlus(rc), seed)?,
            };
            Ok(Prepared {
                model,
                sets: [a?, b?, t?],
                vocab: Some(vocab),
            })
        }
        "dense_head" | "attention_head" => {
            if c.pretrained_vectors.is_some() {
                bail!("corpus.pretrained_vectors applies to rnn_plus only");
            }
            let path = c
                .embeddings
                .as_deref()
                .ok_or_else(|| anyhow!("corpus.embeddings is required for the fine-tuning heads"))?;
            let emb = read_embeddings(path)?;
            let config = cfg.model_config(&[("input_steps", emb.steps), ("input_dim", emb.dim)])?;
            let sets = split.parts().map(|p| data::article_examples(&emb, path, p));
            let [a, b, t] = sets;
            Ok(Prepared {
                model: Model::new(config, seed)?,
                sets: [a?, b?, t?],
                vocab: None,
            })
        }
        other => bail!("unknown architecture {other:?}"),
    }
}

pub fn run(g: &Globals) -> anyhow::Result<()> {
    if g.config_path.is_none() {
        bail!("train needs --config");
    }
    let cfg = &g.config;
    let c = &cfg.corpus;
    let articles = pick(&None, &c.articles, "corpus.articles")?;
    let labels = pick(&None, &c.labels, "corpus.labels")?;
    let corpus = data::read_corpus(articles, Some(labels), g.continue_on_error)?;
    let split = split_corpus(&corpus, c.split, g.seed())?;
    let Prepared { model, sets, vocab } = prepare(g, &split)?;
    let [train_set, val_set, test_set] = &sets;
    let arch = model.architecture();
    eprintln!(
        "{arch}: {} parameters; {} / {} / {} articles",
        model.param_count(),
        train_set.len(),
        val_set.len(),
        test_set.len()
    );

    let (model, history) = train_with(model, train_set, val_set, &cfg.train, |e| {
        eprintln!(
            "epoch {:>3}  train loss {:.4}  val loss {:.4}  val accuracy {:.2}%{}",
            e.epoch + 1,
            e.train_loss,
            e.val_loss,
            e.val_accuracy * 100.0,
            if e.improved { "  *" } else { "" }
        );
    })?;
    let report = evaluate(&model, test_set)?;
    let rendered = render_report(&[(arch.to_string(), report.clone())]);

    let out = &g.out_dir;
    let checkpoint = to_nnpk_bytes(model.params());
    let vocab_hash = vocab.as_ref().map(Vocab::hash);
    write_atomic(out, data::CHECKPOINT_FILE, &checkpoint)?;
    write_atomic(out, data::MANIFEST_FILE, model.manifest(vocab_hash.clone()).to_text().as_bytes())?;
    if let Some(v) = &vocab {
        write_atomic(out, data::VOCAB_FILE, v.to_text().as_bytes())?;
        write_atomic(out, data::LEXICON_FILE, data::lexicon(c.lexicon.as_deref())?.to_text().as_bytes())?;
    }
    write_atomic(out, "history.tsv", history.to_tsv().as_bytes())?;
    write_atomic(out, "test_metrics.txt", rendered.text.as_bytes())?;
    write_atomic(out, "test_metrics.tsv", rendered.tsv.as_bytes())?;
    write_atomic(out, "test_metrics.json", rendered.json.as_bytes())?;
    write_atomic(out, "test_articles.txt", articles_to_text(&split.test).as_bytes())?;
    write_atomic(out, "test_labels.tsv", labels_to_text(&split.test).as_bytes())?;

    let best = history.best_epoch;
    let mut metrics = BTreeMap::new();
    metrics.insert("best_val_loss".to_string(), history.val_loss[best]);
    metrics.insert("best_val_accuracy".to_string(), history.val_accuracy[best]);
    metrics.insert("test_accuracy".to_string(), report.accuracy);
    for l in Label::ALL {
        metrics.insert(format!("test_f1_{}", l.name()), report.per_class[&l].f1);
    }
    let names = ["train", "validation", "test"];
    let manifest = RunManifest {
        model: model.config().clone(),
        train: cfg.train.clone(),
        param_count: model.param_count(),
        vocab_hash,
        dataset_hashes: names
            .iter()
            .zip(&sets)
            .map(|(n, s)| (n.to_string(), dataset_hash(s)))
            .collect(),
        checkpoint_sha256: sha256_hex(&checkpoint),
        history: history.clone(),
        metrics,
    };
    write_atomic(out, "run_manifest.json", manifest.to_text().as_bytes())?;

    println!(
        "best epoch {} of {}: validation loss {:.4}, validation accuracy {:.2}%",
        best + 1,
        history.epochs(),
        history.val_loss[best],
        history.val_accuracy[best] * 100.0
    );
    println!("test accuracy {:.2}%", report.accuracy * 100.0);
    println!("artifacts written to {}", out.display());
    Ok(())
}
