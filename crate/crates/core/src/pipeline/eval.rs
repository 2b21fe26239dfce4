use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::corpus::Label;
use crate::models::{Example, Model, ModelError};

const K: usize = Label::COUNT;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `confusion[true][predicted]`.
    pub confusion: [[u64; K]; K],
    pub accuracy: f64,
    pub per_class: BTreeMap<Label, ClassMetrics>,
}

impl EvalReport {
    pub fn from_confusion(confusion: [[u64; K]; K]) -> Result<Self> {
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(PipelineError::EmptyDataset("evaluation set"));
        }
        let trace: u64 = (0..K).map(|i| confusion[i][i]).sum();
        let per_class = Label::ALL
            .iter()
            .map(|l| {
                let c = l.index();
                let tp = confusion[c][c];
                let predicted: u64 = (0..K).map(|t| confusion[t][c]).sum();
                let actual: u64 = confusion[c].iter().sum();
                let (precision, recall) = (ratio(tp, predicted), ratio(tp, actual));
                (
                    *l,
                    ClassMetrics {
                        precision,
                        recall,
                        f1: f1_score(precision, recall),
                    },
                )
            })
            .collect();
        Ok(Self {
            confusion,
            accuracy: ratio(trace, total),
            per_class,
        })
    }

    /// Report over `(truth, prediction)` pairs.
    pub fn from_pairs(pairs: &[(Label, Label)]) -> Result<Self> {
        let mut confusion = [[0u64; K]; K];
        for (t, p) in pairs {
            confusion[t.index()][p.index()] += 1;
        }
        Self::from_confusion(confusion)
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

/// Confusion matrix and metrics of `model` over `examples`.
pub fn evaluate(model: &Model, examples: &[Example]) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(PipelineError::EmptyDataset("evaluation set"));
    }
    let preds = crate::par::try_map(examples, |e| Ok::<_, ModelError>((e.label, model.predict(&e.input)?.label)))?;
    EvalReport::from_pairs(&preds)
}
