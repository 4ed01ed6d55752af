//! Scoring of victim predictions against gold corpora, and the error
//! analyses built on gold-prediction pairing.

mod analysis;
mod predictions;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TypedSpan};

pub use analysis::{
    attack_curve, confusion, confusion_difference, confusion_with_labels, curve_to_csv, error_breakdown, error_set,
    error_set_jaccard, jaccard, pair_overlap, pairings, token_difference, BucketFractions, ConfusionMatrix, CurvePoint, ErrorBreakdown,
    Pairing, NONE_LABEL,
};
pub use predictions::PredictionSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("{0}")]
    Input(String),
}

/// Precision, recall and F1 with the counts behind them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Prf {
    pub fn from_counts(matched: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        Prf { precision, recall, f1: f1_score(precision, recall), matched, predicted, gold }
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro: Prf,
    pub per_type: BTreeMap<String, Prf>,
}

/// Exact-match span scoring: a prediction counts only when start, end and
/// type all equal a gold span of the same sentence.
pub fn span_prf(gold: &Corpus, pred: &PredictionSet) -> Result<EvalReport, EvalError> {
    pred.check_against(gold)?;
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for sentence in gold.sentences() {
        let gold_spans: HashSet<TypedSpan> = sentence.spans().iter().map(|s| s.typed()).collect();
        let predicted = pred.get(sentence.id());
        for g in &gold_spans {
            counts.entry(g.etype.clone()).or_default().2 += 1;
        }
        for p in predicted {
            let entry = counts.entry(p.etype.clone()).or_default();
            entry.1 += 1;
            if gold_spans.contains(p) {
                entry.0 += 1;
            }
        }
    }
    let (m, p, g) = counts.values().fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    Ok(EvalReport {
        micro: Prf::from_counts(m, p, g),
        per_type: counts.into_iter().map(|(t, (m, p, g))| (t, Prf::from_counts(m, p, g))).collect(),
    })
}

/// `(base - attacked) / base`, or `None` when `base` is not positive.
pub fn relative_drop(base: f64, attacked: f64) -> Option<f64> {
    (base > 0.0).then(|| (base - attacked) / base)
}

/// A relative drop as a whole percentage, `n/a` when undefined.
pub fn format_drop(drop: Option<f64>) -> String {
    match drop {
        Some(d) => format!("{}%", (d * 100.0).round() as i64),
        None => "n/a".to_string(),
    }
}

pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>9} {:>9} {:>9} {:>8}", "type", "precision", "recall", "f1", "support");
    let mut row = |name: &str, p: &Prf| {
        let _ = writeln!(
            out,
            "{:<12} {:>9.2} {:>9.2} {:>9.2} {:>8}",
            name,
            100.0 * p.precision,
            100.0 * p.recall,
            100.0 * p.f1,
            p.gold
        );
    };
    for (t, p) in &report.per_type {
        row(t, p);
    }
    row("micro", &report.micro);
    out
}
