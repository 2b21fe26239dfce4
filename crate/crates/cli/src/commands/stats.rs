use std::path::PathBuf;

use finnews::corpus::{corpus_stats, split_corpus, CorpusStats, Label};

use super::pick;
use crate::data;
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
}

/// Label rows in the order of the reference corpus table.
const LABEL_ROWS: [(Label, &str); 3] = [
    (Label::FundRaising, "Fund Raising News"),
    (Label::MergerAcquisition, "M&A News"),
    (Label::GeneralNews, "General News"),
];

fn grouped(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Rows per statistic, columns per split plus a total.
pub fn render_stats(parts: &[CorpusStats; 3], labeled: bool) -> String {
    let total = parts.iter().cloned().fold(CorpusStats::default(), |a, b| a + b);
    let cols: Vec<&CorpusStats> = parts.iter().chain(std::iter::once(&total)).collect();
    let mut rows: Vec<(String, Vec<usize>)> = vec![
        ("Articles".into(), cols.iter().map(|s| s.articles).collect()),
        ("Sentences".into(), cols.iter().map(|s| s.sentences).collect()),
        ("Words".into(), cols.iter().map(|s| s.words).collect()),
        ("Illegitimate words".into(), cols.iter().map(|s| s.illegitimate_words).collect()),
    ];
    if labeled {
        for (label, name) in LABEL_ROWS {
            rows.push((name.into(), cols.iter().map(|s| s.label_count(label)).collect()));
        }
    }
    let header = ["", "Training", "Validation", "Test", "Total"];
    let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut out = format!("{:<name_w$}", header[0]);
    for h in &header[1..] {
        out.push_str(&format!("  {h:>10}"));
    }
    out.push('\n');
    for (name, values) in rows {
        out.push_str(&format!("{name:<name_w$}"));
        for v in values {
            out.push_str(&format!("  {:>10}", grouped(v)));
        }
        out.push('\n');
    }
    out
}

pub fn run(g: &Globals, args: &Args) -> anyhow::Result<()> {
    let c = &g.config.corpus;
    let articles = pick(&args.articles, &c.articles, "article file")?;
    let labels = args.labels.as_deref().or(c.labels.as_deref());
    let lexicon = data::lexicon(args.lexicon.as_deref().or(c.lexicon.as_deref()))?;
    let corpus = data::read_corpus(articles, labels, g.continue_on_error)?;
    let split = split_corpus(&corpus, c.split, g.seed())?;
    let parts = split.parts().map(|p| corpus_stats(p, &lexicon));
    print!("{}", render_stats(&parts, labels.is_some()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digit_grouping() {
        assert_eq!(grouped(0), "0");
        assert_eq!(grouped(905), "905");
        assert_eq!(grouped(6332), "6,332");
        assert_eq!(grouped(1440445), "1,440,445");
    }

    #[test]
    fn rows_follow_reference_order_and_total() {
        let mut a = CorpusStats {
            articles: 2,
            sentences: 5,
            words: 40,
            illegitimate_words: 9,
            ..Default::default()
        };
        a.label_counts.insert(Label::GeneralNews, 1);
        a.label_counts.insert(Label::MergerAcquisition, 1);
        let b = a.clone();
        let text = render_stats(&[a.clone(), b, a], true);
        let names: Vec<&str> = text.lines().skip(1).map(|l| l.split("  ").next().unwrap().trim()).collect();
        assert_eq!(
            names,
            ["Articles", "Sentences", "Words", "Illegitimate words", "Fund Raising News", "M&A News", "General News"]
        );
        let words: Vec<&str> = text.lines().nth(3).unwrap().split_whitespace().collect();
        assert_eq!(&words[1..], ["40", "40", "40", "120"]);
        assert_eq!(render_stats(&Default::default(), false).lines().count(), 5);
    }
}
