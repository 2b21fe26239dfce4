use std::path::Path;
use std::process::{Command, Output};

use finnews::corpus::synthetic::{hashed_embeddings, Generator};
use finnews::corpus::{
    articles_to_text, corpus_stats, labels_to_text, write_embeddings, Article, EmbeddingMatrix, Label,
};
use finnews::models::{Model, ModelManifest};
use finnews::nncore::load_nnpk;
use finnews::pipeline::{parse_report_json, render_report};
use finnews::preprocess::Lexicon;

const EXHIBIT: &str = "<headline>Cellular Dynamics  \nRaises $40.6 million</headline>\n\n<Synopsis> the world's highest  \nvolume manufacturer of human\n\nheart cells, has closed on a  \n$40.6 million Series B private  \nequity round. This financing  \nenables the company to, human  \nheart cells derived from  \ninduced pluripotent stem cells  \n(iPSCs), and to launch  \nadditional human tissue cell  \nproducts for biomedical and  \npharmaceutical drug development  \nand safety research. CDI also  \nplans to use the proceeds to  \nrapidly expand its commercial  \norganization to meet the  \ngrowing demand for these iPSC-  \nbased products. CDI has raised  \na total of $70 million since  \n2004. </Synopsis>\n";

fn finnews(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finnews"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn corpus(n: usize, seed: u64) -> Vec<Article> {
    Generator::new(seed, &Lexicon::bundled()).corpus(n)
}

fn write_corpus(dir: &Path, articles: &[Article]) {
    std::fs::write(dir.join("articles.txt"), articles_to_text(articles)).unwrap();
    std::fs::write(dir.join("labels.tsv"), labels_to_text(articles)).unwrap();
}

const RNN_CONFIG: &str = r#"
[corpus]
articles = "articles.txt"
labels = "labels.tsv"

[model]
architecture = "rnn_plus"
word_embed_dim = 8
pos_embed_dim = 4
gru_hidden = 6
fc_units = 6
steps = 30

[train]
learning_rate = 0.02
max_epochs = 3
batch_size = 16

[output]
dir = "run"
"#;

/// Corpus, config and a finished RNN-Plus run in a fresh directory.
fn trained_rnn() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &corpus(90, 4));
    std::fs::write(dir.path().join("run.toml"), RNN_CONFIG).unwrap();
    let o = finnews(dir.path(), &["--config", "run.toml", "train"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

/// Embeddings that are a noisy one-hot of the label, so a dense head can
/// separate them perfectly.
fn separable_embeddings(articles: &[Article]) -> EmbeddingMatrix {
    let mut data = Vec::new();
    for (i, a) in articles.iter().enumerate() {
        let mut row = [0.1 * ((i % 5) as f32 - 2.0); 4];
        row[a.label.unwrap().index()] += 3.0;
        data.extend(row);
    }
    EmbeddingMatrix::new(1, 4, articles.iter().map(|a| a.id.clone()).collect(), data).unwrap()
}

#[test]
fn stats_rows_sum_across_splits() {
    let dir = tempfile::tempdir().unwrap();
    let arts = corpus(6, 1);
    write_corpus(dir.path(), &arts);
    let o = finnews(dir.path(), &["stats", "--articles", "articles.txt", "--labels", "labels.tsv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0].split_whitespace().collect::<Vec<_>>(), ["Training", "Validation", "Test", "Total"]);

    let all = corpus_stats(&arts, &Lexicon::bundled());
    let expected = [
        ("Articles", all.articles),
        ("Sentences", all.sentences),
        ("Words", all.words),
        ("Illegitimate words", all.illegitimate_words),
        ("Fund Raising News", all.label_count(Label::FundRaising)),
        ("M&A News", all.label_count(Label::MergerAcquisition)),
        ("General News", all.label_count(Label::GeneralNews)),
    ];
    assert_eq!(lines.len(), 1 + expected.len());
    for (line, (name, total)) in lines[1..].iter().zip(expected) {
        assert!(line.starts_with(name), "{line}");
        let nums: Vec<usize> = line[name.len()..]
            .split_whitespace()
            .map(|s| s.replace(',', "").parse().unwrap())
            .collect();
        assert_eq!(nums.len(), 4, "{line}");
        assert_eq!(nums[0] + nums[1] + nums[2], nums[3], "{line}");
        assert_eq!(nums[3], total, "{line}");
    }
}

#[test]
fn stats_on_empty_corpus_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.txt"), "").unwrap();
    let o = finnews(dir.path(), &["stats", "--articles", "empty.txt"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("empty.txt"), "{}", stderr(&o));
}

#[test]
fn preprocess_writes_splits_vocab_and_token_records() {
    let dir = tempfile::tempdir().unwrap();
    let arts = corpus(40, 2);
    write_corpus(dir.path(), &arts);
    let o = finnews(
        dir.path(),
        &["--out-dir", "pre", "preprocess", "--articles", "articles.txt", "--labels", "labels.tsv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pre = dir.path().join("pre");
    let split_total: usize = ["train", "validation", "test"]
        .iter()
        .map(|s| finnews::corpus::load_articles(pre.join(format!("{s}.txt"))).unwrap().len())
        .sum();
    assert_eq!(split_total, arts.len());
    let tokens = std::fs::read_to_string(pre.join("tokens.tsv")).unwrap();
    let n_tokens: usize = arts.iter().map(|a| a.tokens().len()).sum();
    assert_eq!(tokens.lines().count(), 1 + n_tokens);
    assert!(std::fs::read_to_string(pre.join("vocab.txt")).unwrap().starts_with("<PAD>\n<UNK>\n"));
}

#[test]
fn train_writes_reloadable_artifacts_and_leaves_inputs_alone() {
    let dir = trained_rnn();
    let run = dir.path().join("run");
    let manifest = ModelManifest::load(run.join("model.json")).unwrap();
    let store = load_nnpk(run.join("model.nnpk")).unwrap();
    let model = Model::from_params(manifest.model.clone(), &store).unwrap();
    assert_eq!(model.param_count(), manifest.param_count);
    for f in ["vocab.txt", "lexicon.txt", "history.tsv", "run_manifest.json", "test_metrics.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let run_manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(run_manifest["train"]["learning_rate"], 0.02);
    assert_eq!(run_manifest["dataset_hashes"].as_object().unwrap().len(), 3);

    let arts = corpus(90, 4);
    assert_eq!(std::fs::read_to_string(dir.path().join("articles.txt")).unwrap(), articles_to_text(&arts));
}

#[test]
fn train_prints_best_epoch() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &corpus(60, 5));
    std::fs::write(dir.path().join("run.toml"), RNN_CONFIG.replace("max_epochs = 3", "max_epochs = 1")).unwrap();
    let o = finnews(dir.path(), &["--config", "run.toml", "train"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("best epoch 1 of 1"), "{}", stdout(&o));
}

#[test]
fn unknown_config_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &corpus(30, 1));
    let cfg = RNN_CONFIG.replace("learning_rate = 0.02", "lerning_rate = 0.02");
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let o = finnews(dir.path(), &["--config", "run.toml", "train"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lerning_rate"), "{}", stderr(&o));
}

#[test]
fn missing_config_for_train_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&finnews(dir.path(), &["train"])), 2);
    assert_eq!(code(&finnews(dir.path(), &["frobnicate"])), 2);
}

#[test]
fn same_seed_gives_byte_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &corpus(60, 7));
    std::fs::write(dir.path().join("run.toml"), RNN_CONFIG).unwrap();
    let mut checkpoints = Vec::new();
    for (out, workers) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let o = finnews(
            dir.path(),
            &["--config", "run.toml", "--seed", "11", "--workers", workers, "--out-dir", out, "train"],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        checkpoints.push(std::fs::read(dir.path().join(out).join("model.nnpk")).unwrap());
    }
    assert_eq!(checkpoints[0], checkpoints[1]);
    assert_eq!(checkpoints[0], checkpoints[2]);

    let o = finnews(dir.path(), &["--config", "run.toml", "--seed", "12", "--out-dir", "d", "train"]);
    assert_eq!(code(&o), 0);
    assert_ne!(std::fs::read(dir.path().join("d/model.nnpk")).unwrap(), checkpoints[0]);
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &corpus(30, 1));
    let cfg = RNN_CONFIG.replace("learning_rate = 0.02", "learning_rate = 1e38\noptimizer = \"sgd\"");
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let o = finnews(dir.path(), &["--config", "run.toml", "train"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
}

#[test]
fn eval_rejects_embeddings_for_rnn_plus() {
    let dir = trained_rnn();
    let arts = corpus(90, 4);
    write_embeddings(&hashed_embeddings(&arts, 8, 0), dir.path().join("e.embv")).unwrap();
    let o = finnews(
        dir.path(),
        &["eval", "--model", "run", "--embeddings", "e.embv", "--labels", "labels.tsv"],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("architecture mismatch"), "{}", stderr(&o));
}

#[test]
fn eval_of_perfect_head_prints_100_percent_and_metrics_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let arts = corpus(60, 3);
    write_corpus(dir.path(), &arts);
    write_embeddings(&separable_embeddings(&arts), dir.path().join("e.embv")).unwrap();
    let cfg = r#"
[corpus]
articles = "articles.txt"
labels = "labels.tsv"
embeddings = "e.embv"
[model]
architecture = "dense_head"
fc_units = 8
[train]
learning_rate = 0.05
max_epochs = 40
early_stop_patience = 40
batch_size = 8
[output]
dir = "head"
"#;
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let o = finnews(dir.path(), &["--config", "run.toml", "train"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = finnews(
        dir.path(),
        &["--out-dir", "ev", "eval", "--model", "head", "--embeddings", "e.embv", "--labels", "labels.tsv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let printed = stdout(&o);
    assert!(printed.contains("100.00%"), "{printed}");

    let json = std::fs::read_to_string(dir.path().join("ev/metrics.json")).unwrap();
    let reparsed = parse_report_json(&json).unwrap();
    assert_eq!(reparsed[0].1.total(), arts.len() as u64);
    assert_eq!(render_report(&reparsed).text, printed);

    let o = finnews(dir.path(), &["eval", "--model", "head", "--articles", "articles.txt", "--labels", "labels.tsv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn predict_exhibit_article_gives_one_valid_line() {
    let dir = trained_rnn();
    std::fs::write(dir.path().join("exhibit.txt"), EXHIBIT).unwrap();
    let o = finnews(dir.path(), &["predict", "--model", "run", "--articles", "exhibit.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    let fields: Vec<&str> = lines[0].split('\t').collect();
    assert_eq!(fields.len(), 5);
    assert!(fields[1].parse::<Label>().is_ok(), "{}", fields[1]);
    let probs: Vec<f64> = fields[2..].iter().map(|s| s.parse().unwrap()).collect();
    assert!(fields[2..].iter().all(|s| s.len() == 6), "four decimals: {lines:?}");
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 2e-4);
}

#[test]
fn predict_empty_file_prints_nothing() {
    let dir = trained_rnn();
    std::fs::write(dir.path().join("none.txt"), "").unwrap();
    let o = finnews(dir.path(), &["predict", "--model", "run", "--articles", "none.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), "");
}

#[test]
fn predict_malformed_article_needs_continue_flag() {
    let dir = trained_rnn();
    let good = corpus(3, 9);
    let text = format!(
        "{}\n<Synopsis>A synopsis without a headline.</Synopsis>\n\n{}",
        articles_to_text(&good[..2]),
        articles_to_text(&good[2..])
    );
    std::fs::write(dir.path().join("mixed.txt"), text).unwrap();
    let o = finnews(dir.path(), &["predict", "--model", "run", "--articles", "mixed.txt"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stdout(&o), "");

    let o = finnews(dir.path(), &["--continue-on-error", "predict", "--model", "run", "--articles", "mixed.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ids: Vec<String> = stdout(&o).lines().map(|l| l.split('\t').next().unwrap().to_string()).collect();
    assert_eq!(ids, good.iter().map(|a| a.id.clone()).collect::<Vec<_>>());
    assert!(stderr(&o).contains("article 3"), "{}", stderr(&o));
}

#[test]
fn predict_keeps_input_order_for_attention_rows() {
    let dir = tempfile::tempdir().unwrap();
    let arts = corpus(30, 6);
    write_corpus(dir.path(), &arts);
    let emb = finnews::corpus::synthetic::hashed_sentence_embeddings(&arts, 4, 6, 1);
    write_embeddings(&emb, dir.path().join("s.embv")).unwrap();
    let cfg = "[corpus]\narticles = \"articles.txt\"\nlabels = \"labels.tsv\"\nembeddings = \"s.embv\"\n\
               [model]\narchitecture = \"attention_head\"\nattention_dim = 4\nfc_units = 4\n\
               [train]\nmax_epochs = 1\n[output]\ndir = \"att\"\n";
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    assert_eq!(code(&finnews(dir.path(), &["--config", "run.toml", "train"])), 0);
    let o = finnews(dir.path(), &["predict", "--model", "att", "--embeddings", "s.embv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(lines.len(), arts.len());
    for (l, a) in lines.iter().zip(&arts) {
        assert_eq!(l[0], a.id);
        let alpha: Vec<f64> = l[5].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(alpha.len(), 4);
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 2e-4);
    }
}

#[test]
fn gradcheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    for arch in ["dense_head", "rnn_plus"] {
        let o = finnews(dir.path(), &["gradcheck", "--architecture", arch]);
        assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
        let model_line = stdout(&o).lines().find(|l| l.starts_with("model")).unwrap().to_string();
        assert!(model_line.contains(arch) && model_line.ends_with("ok"), "{model_line}");
        assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("layer")).count(), 6);
    }
    let o = finnews(dir.path(), &["gradcheck", "--architecture", "dense_head", "--corrupt-gradient"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));
    assert_eq!(code(&finnews(dir.path(), &["gradcheck", "--architecture", "lstm"])), 2);
}
