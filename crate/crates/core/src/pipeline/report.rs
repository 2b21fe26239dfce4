use serde::{Deserialize, Serialize};

use super::{EvalReport, PipelineError, Result};

/// The same tables as aligned text, tab-separated text and JSON.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedReport {
    pub text: String,
    pub tsv: String,
    pub json: String,
}

#[derive(Serialize, Deserialize)]
struct NamedReport {
    name: String,
    #[serde(flatten)]
    report: EvalReport,
}

#[derive(Serialize, Deserialize)]
struct Document {
    models: Vec<NamedReport>,
}

fn percent(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

fn ratio(x: f64) -> String {
    format!("{x:.4}")
}

/// Right-aligns every column but the first.
fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Accuracy table across models, then a per-class precision/recall/F1 table
/// and a confusion matrix per model.
pub fn render_report(reports: &[(String, EvalReport)]) -> RenderedReport {
    let mut acc = vec![vec!["Model".to_string(), "Accuracy".to_string()]];
    acc.extend(reports.iter().map(|(n, r)| vec![n.clone(), percent(r.accuracy)]));
    let mut text = align(&acc);
    let mut tsv = String::from("model\taccuracy\n");
    for (n, r) in reports {
        tsv.push_str(&format!("{n}\t{}\n", percent(r.accuracy)));
    }
    tsv.push_str("\nmodel\tclass\tprecision\trecall\tf1\n");

    for (name, r) in reports {
        let mut rows = vec![["Class", "Precision", "Recall", "F1"].map(String::from).to_vec()];
        for (label, m) in &r.per_class {
            rows.push(vec![label.title().to_string(), ratio(m.precision), ratio(m.recall), ratio(m.f1)]);
            tsv.push_str(&format!(
                "{name}\t{}\t{}\t{}\t{}\n",
                label.name(),
                ratio(m.precision),
                ratio(m.recall),
                ratio(m.f1)
            ));
        }
        text.push_str(&format!("\n{name}\n"));
        text.push_str(&align(&rows));

        let mut conf = vec![std::iter::once("true \\ predicted".to_string())
            .chain(crate::corpus::Label::ALL.iter().map(|l| l.title().to_string()))
            .collect::<Vec<_>>()];
        for l in crate::corpus::Label::ALL {
            conf.push(
                std::iter::once(l.title().to_string())
                    .chain(r.confusion[l.index()].iter().map(u64::to_string))
                    .collect(),
            );
        }
        text.push('\n');
        text.push_str(&align(&conf));
    }

    let doc = Document {
        models: reports
            .iter()
            .map(|(n, r)| NamedReport {
                name: n.clone(),
                report: r.clone(),
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&doc).expect("report serializes");
    json.push('\n');
    RenderedReport { text, tsv, json }
}

/// Inverse of the JSON part of [`render_report`].
pub fn parse_report_json(text: &str) -> Result<Vec<(String, EvalReport)>> {
    let doc: Document = serde_json::from_str(text).map_err(|e| PipelineError::BadReport(e.to_string()))?;
    Ok(doc.models.into_iter().map(|m| (m.name, m.report)).collect())
}
