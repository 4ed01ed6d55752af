use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{span_prf, EvalError, PredictionSet};
use crate::corpus::{Corpus, TypedSpan};

/// Row and column label for "no paired prediction".
pub const NONE_LABEL: &str = "None";

/// A span with the id of its sentence.
pub type SentenceSpan = (String, TypedSpan);

/// The prediction with maximal token overlap with `gold`, leftmost on ties;
/// `None` when nothing overlaps.
pub fn pair_overlap<'a>(gold: &TypedSpan, preds: &'a [TypedSpan]) -> Option<&'a TypedSpan> {
    best_overlap(gold, preds, |_| true).map(|i| &preds[i])
}

fn best_overlap(gold: &TypedSpan, preds: &[TypedSpan], available: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, p) in preds.iter().enumerate() {
        let overlap = gold.overlap(p);
        if overlap == 0 || !available(i) {
            continue;
        }
        let better = match best {
            None => true,
            Some((j, o)) => overlap > o || (overlap == o && p.start < preds[j].start),
        };
        if better {
            best = Some((i, overlap));
        }
    }
    best.map(|(i, _)| i)
}

/// Size of the symmetric difference of two spans' token-index sets.
pub fn token_difference(a: &TypedSpan, b: &TypedSpan) -> usize {
    a.len() + b.len() - 2 * a.overlap(b)
}

/// A gold entity and the prediction paired with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    pub sentence_id: String,
    pub gold: TypedSpan,
    pub pred: Option<TypedSpan>,
}

/// Pairs every gold entity with its best-overlapping prediction, greedily
/// in gold order; a paired prediction is unavailable to later gold entities.
/// Also returns the predictions left unpaired.
pub fn pairings(gold: &Corpus, pred: &PredictionSet) -> Result<(Vec<Pairing>, Vec<SentenceSpan>), EvalError> {
    pred.check_against(gold)?;
    let mut paired = Vec::new();
    let mut unpaired = Vec::new();
    for sentence in gold.sentences() {
        let preds = pred.get(sentence.id());
        let mut used = vec![false; preds.len()];
        for g in sentence.spans().iter().map(|s| s.typed()) {
            let hit = best_overlap(&g, preds, |i| !used[i]);
            if let Some(i) = hit {
                used[i] = true;
            }
            paired.push(Pairing { sentence_id: sentence.id().to_string(), gold: g, pred: hit.map(|i| preds[i].clone()) });
        }
        unpaired.extend(preds.iter().zip(&used).filter(|(_, u)| !**u).map(|(p, _)| (sentence.id().to_string(), p.clone())));
    }
    Ok((paired, unpaired))
}

/// Gold entities bucketed by type agreement and token difference `d`
/// (index 0..=2 for d = 0..2, index 3 for d ≥ 3).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub total: usize,
    pub correct_type: [usize; 4],
    pub wrong_type: [usize; 4],
    pub no_prediction: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketFractions {
    pub correct_type: [f64; 4],
    pub wrong_type: [f64; 4],
    pub no_prediction: f64,
}

impl ErrorBreakdown {
    /// Fractions over gold entities; all zero when there are none.
    pub fn fractions(&self) -> BucketFractions {
        let f = |c: usize| if self.total == 0 { 0.0 } else { c as f64 / self.total as f64 };
        BucketFractions {
            correct_type: self.correct_type.map(f),
            wrong_type: self.wrong_type.map(f),
            no_prediction: f(self.no_prediction),
        }
    }

    pub fn render(&self) -> String {
        let fr = self.fractions();
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>8} {:>8} {:>8} {:>8}", "bucket", "d=0", "d=1", "d=2", "d>=3");
        for (name, row) in [("CorrectType", fr.correct_type), ("WrongType", fr.wrong_type)] {
            let _ = writeln!(
                out,
                "{:<12} {:>7.2}% {:>7.2}% {:>7.2}% {:>7.2}%",
                name,
                100.0 * row[0],
                100.0 * row[1],
                100.0 * row[2],
                100.0 * row[3]
            );
        }
        let _ = writeln!(out, "{:<12} {:>7.2}%", "NoPrediction", 100.0 * fr.no_prediction);
        let _ = writeln!(out, "{:<12} {:>8}", "gold", self.total);
        out
    }
}

pub fn error_breakdown(gold: &Corpus, pred: &PredictionSet) -> Result<ErrorBreakdown, EvalError> {
    let (paired, _) = pairings(gold, pred)?;
    let mut out = ErrorBreakdown { total: paired.len(), ..Default::default() };
    for pairing in &paired {
        match &pairing.pred {
            None => out.no_prediction += 1,
            Some(p) => {
                let d = token_difference(&pairing.gold, p).min(3);
                if p.etype == pairing.gold.etype {
                    out.correct_type[d] += 1;
                } else {
                    out.wrong_type[d] += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Gold types on rows, paired prediction types on columns; the last label
/// is [`NONE_LABEL`]. Predictions paired with no gold entity are kept apart
/// in `unpaired_predictions` so every type row sums to its gold support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<i64>>,
    pub unpaired_predictions: BTreeMap<String, i64>,
}

impl ConfusionMatrix {
    fn zeros(labels: Vec<String>) -> Self {
        let n = labels.len();
        ConfusionMatrix { labels, counts: vec![vec![0; n]; n], unpaired_predictions: BTreeMap::new() }
    }

    fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, gold: &str, pred: &str) -> Option<i64> {
        Some(self.counts[self.index(gold)?][self.index(pred)?])
    }

    pub fn row_sum(&self, label: &str) -> Option<i64> {
        self.index(label).map(|i| self.counts[i].iter().sum())
    }

    /// The off-diagonal cell with the largest value, ties to the first in
    /// row-major order.
    pub fn largest_off_diagonal(&self) -> Option<(&str, &str, i64)> {
        let mut best: Option<(usize, usize, i64)> = None;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j && best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((i, j, v));
                }
            }
        }
        best.map(|(i, j, v)| (self.labels[i].as_str(), self.labels[j].as_str(), v))
    }

    pub fn render(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(4).max(9) + 1;
        let mut out = format!("{:<width$}", "gold\\pred");
        for l in &self.labels {
            let _ = write!(out, "{l:>width$}");
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "{label:<width$}");
            for v in row {
                let _ = write!(out, "{v:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

/// Entity types of gold and predictions, sorted, followed by [`NONE_LABEL`].
fn type_labels(gold: &Corpus, pred: &PredictionSet) -> Vec<String> {
    let mut types: BTreeSet<String> = gold.spans().into_iter().map(|(_, s)| s.etype).collect();
    types.extend(pred.iter().flat_map(|(_, v)| v.iter().map(|s| s.etype.clone())));
    types.remove(NONE_LABEL);
    types.into_iter().chain([NONE_LABEL.to_string()]).collect()
}

pub fn confusion(gold: &Corpus, pred: &PredictionSet) -> Result<ConfusionMatrix, EvalError> {
    confusion_with_labels(gold, pred, &type_labels(gold, pred))
}

/// Confusion over a fixed label list, which must end with [`NONE_LABEL`]
/// and cover every type seen.
pub fn confusion_with_labels(gold: &Corpus, pred: &PredictionSet, labels: &[String]) -> Result<ConfusionMatrix, EvalError> {
    if labels.last().map(String::as_str) != Some(NONE_LABEL) {
        return Err(EvalError::Input(format!("confusion labels must end with {NONE_LABEL}")));
    }
    let (paired, unpaired) = pairings(gold, pred)?;
    let mut cm = ConfusionMatrix::zeros(labels.to_vec());
    let lookup = |cm: &ConfusionMatrix, t: &str| {
        cm.index(t).ok_or_else(|| EvalError::Input(format!("entity type {t} not in the confusion labels")))
    };
    for pairing in &paired {
        let row = lookup(&cm, &pairing.gold.etype)?;
        let col = lookup(&cm, pairing.pred.as_ref().map_or(NONE_LABEL, |p| p.etype.as_str()))?;
        cm.counts[row][col] += 1;
    }
    for (_, p) in unpaired {
        lookup(&cm, &p.etype)?;
        *cm.unpaired_predictions.entry(p.etype).or_default() += 1;
    }
    Ok(cm)
}

/// Element-wise `attacked - original`.
pub fn confusion_difference(attacked: &ConfusionMatrix, original: &ConfusionMatrix) -> Result<ConfusionMatrix, EvalError> {
    if attacked.labels != original.labels {
        return Err(EvalError::Input(format!(
            "confusion matrices differ in types: {:?} vs {:?}",
            attacked.labels, original.labels
        )));
    }
    let mut out = ConfusionMatrix::zeros(attacked.labels.clone());
    for (i, row) in out.counts.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = attacked.counts[i][j] - original.counts[i][j];
        }
    }
    for t in attacked.unpaired_predictions.keys().chain(original.unpaired_predictions.keys()) {
        let a = attacked.unpaired_predictions.get(t).copied().unwrap_or(0);
        let b = original.unpaired_predictions.get(t).copied().unwrap_or(0);
        out.unpaired_predictions.insert(t.clone(), a - b);
    }
    Ok(out)
}

/// Gold entities not predicted exactly (same span and type).
pub fn error_set(gold: &Corpus, pred: &PredictionSet) -> Result<BTreeSet<(String, TypedSpan)>, EvalError> {
    pred.check_against(gold)?;
    let mut errors = BTreeSet::new();
    for sentence in gold.sentences() {
        let preds = pred.get(sentence.id());
        for g in sentence.spans().iter().map(|s| s.typed()) {
            if !preds.contains(&g) {
                errors.insert((sentence.id().to_string(), g));
            }
        }
    }
    Ok(errors)
}

/// `|A ∩ B| / |A ∪ B|`, 1 when both sets are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

pub fn error_set_jaccard(a: &BTreeSet<(String, TypedSpan)>, b: &BTreeSet<(String, TypedSpan)>) -> f64 {
    jaccard(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub coverage: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Span F1 per coverage level, sorted by coverage. Both inputs must cover
/// the same coverage grid.
pub fn attack_curve(golds: &[(f64, Corpus)], preds: &[(f64, PredictionSet)]) -> Result<Vec<CurvePoint>, EvalError> {
    let grid = |xs: &mut Vec<f64>| xs.sort_by(f64::total_cmp);
    let mut gold_grid: Vec<f64> = golds.iter().map(|(c, _)| *c).collect();
    let mut pred_grid: Vec<f64> = preds.iter().map(|(c, _)| *c).collect();
    grid(&mut gold_grid);
    grid(&mut pred_grid);
    let same = gold_grid.len() == pred_grid.len() && gold_grid.iter().zip(&pred_grid).all(|(a, b)| (a - b).abs() < 1e-9);
    if !same || gold_grid.windows(2).any(|w| w[1] - w[0] < 1e-9) {
        return Err(EvalError::Input(format!("coverage grids differ or repeat: {gold_grid:?} vs {pred_grid:?}")));
    }
    let mut points = Vec::with_capacity(golds.len());
    for (coverage, gold) in golds {
        let (_, pred) = preds.iter().find(|(c, _)| (c - coverage).abs() < 1e-9).expect("grids match");
        let report = span_prf(gold, pred)?;
        points.push(CurvePoint {
            coverage: *coverage,
            precision: report.micro.precision,
            recall: report.micro.recall,
            f1: report.micro.f1,
        });
    }
    points.sort_by(|a, b| a.coverage.total_cmp(&b.coverage));
    Ok(points)
}

pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("coverage,precision,recall,f1\n");
    for p in points {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6}", p.coverage, p.precision, p.recall, p.f1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_conll, tags_from_spans, ParseMode, Sentence, Token};
    use proptest::prelude::*;

    fn span(s: usize, e: usize, t: &str) -> TypedSpan {
        TypedSpan::new(s, e, t)
    }

    fn corpus_of(items: &[(usize, Vec<TypedSpan>)]) -> Corpus {
        let sentences = items
            .iter()
            .enumerate()
            .map(|(i, (n, spans))| {
                let tokens = tags_from_spans(*n, spans).into_iter().map(|t| Token::new("w", t)).collect();
                Sentence::new(format!("s{i}"), tokens).unwrap()
            })
            .collect();
        Corpus::new("", sentences).unwrap()
    }

    fn preds_of(items: &[Vec<TypedSpan>]) -> PredictionSet {
        PredictionSet::from_map(items.iter().enumerate().map(|(i, v)| (format!("s{i}"), v.clone())).collect())
    }

    #[test]
    fn pairing_picks_max_overlap_then_leftmost() {
        let gold = span(2, 5, "GPE");
        assert_eq!(pair_overlap(&gold, &[span(0, 3, "GPE"), span(3, 5, "GPE")]), Some(&span(3, 5, "GPE")));
        assert_eq!(pair_overlap(&gold, &[span(0, 2, "GPE"), span(5, 6, "GPE")]), None);
        assert_eq!(pair_overlap(&gold, &[span(1, 3, "X"), span(4, 6, "Y")]), Some(&span(1, 3, "X")));
        assert_eq!(pair_overlap(&gold, std::slice::from_ref(&gold)), Some(&gold));
    }

    #[test]
    fn token_difference_hand_cases() {
        let g = span(2, 5, "A");
        assert_eq!(token_difference(&g, &g), 0);
        assert_eq!(token_difference(&g, &span(3, 5, "A")), 1);
        assert_eq!(token_difference(&g, &span(3, 6, "A")), 2);
        assert_eq!(token_difference(&g, &span(4, 7, "A")), 4);
    }

    #[test]
    fn breakdown_buckets() {
        let gold = corpus_of(&[
            (8, vec![span(0, 1, "A"), span(2, 5, "A")]),
            (8, vec![span(0, 3, "B"), span(4, 5, "B")]),
            (8, vec![span(1, 2, "A")]),
        ]);
        let pred = preds_of(&[
            vec![span(0, 1, "A"), span(3, 5, "A")],
            vec![span(1, 4, "A"), span(6, 8, "B")],
            vec![span(0, 4, "A")],
        ]);
        let b = error_breakdown(&gold, &pred).unwrap();
        assert_eq!(b.total, 5);
        assert_eq!(b.correct_type, [1, 1, 0, 1]);
        assert_eq!(b.wrong_type, [0, 0, 1, 0]);
        assert_eq!(b.no_prediction, 1);
        let f = b.fractions();
        assert!((f.correct_type.iter().chain(&f.wrong_type).sum::<f64>() + f.no_prediction - 1.0).abs() < 1e-9);
    }

    #[test]
    fn greedy_removes_paired_prediction() {
        let gold = corpus_of(&[(6, vec![span(0, 2, "A"), span(2, 4, "A")])]);
        let pred = preds_of(&[vec![span(1, 4, "A")]]);
        let (paired, unpaired) = pairings(&gold, &pred).unwrap();
        assert_eq!(paired[0].pred, Some(span(1, 4, "A")));
        assert_eq!(paired[1].pred, None);
        assert!(unpaired.is_empty());
    }

    #[test]
    fn identity_breakdown_and_confusion() {
        let gold = parse_conll("Paris B-GPE\nAcme B-ORG\nCorp I-ORG\nand O\nRome B-GPE\n", ParseMode::Strict).unwrap();
        let pred = PredictionSet::from_gold(&gold);
        let b = error_breakdown(&gold, &pred).unwrap();
        assert_eq!(b.fractions().correct_type[0], 1.0);
        let cm = confusion(&gold, &pred).unwrap();
        assert_eq!(cm.labels, ["GPE", "ORG", "None"]);
        assert_eq!(cm.counts, vec![vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 0]]);
        let zero = confusion_difference(&cm, &cm).unwrap();
        assert!(zero.counts.iter().flatten().all(|&v| v == 0));
    }

    #[test]
    fn confusion_difference_tracks_typing_shift() {
        let gold = corpus_of(&[(4, vec![span(0, 1, "LOC"), span(2, 3, "GPE")])]);
        let original = confusion(&gold, &preds_of(&[vec![span(0, 1, "LOC"), span(2, 3, "GPE")]])).unwrap();
        let attacked = confusion(&gold, &preds_of(&[vec![span(0, 1, "GPE")]])).unwrap();
        let diff = confusion_difference(&attacked, &original).unwrap();
        assert_eq!(diff.get("LOC", "GPE"), Some(1));
        assert_eq!(diff.get("GPE", NONE_LABEL), Some(1));
        assert_eq!(diff.largest_off_diagonal().map(|(r, c, _)| (r, c)), Some(("GPE", "None")));
        assert!(diff.labels.iter().all(|l| diff.row_sum(l) == Some(0)));
        let other = confusion(&gold, &preds_of(&[vec![span(0, 1, "ORG")]])).unwrap();
        assert!(confusion_difference(&other, &original).is_err());
    }

    #[test]
    fn jaccard_hand_cases() {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(jaccard(&set(&["x", "y", "z"]), &set(&["z", "w"])), 0.25);
        assert_eq!(jaccard(&set(&["x"]), &set(&["x"])), 1.0);
        assert_eq!(jaccard(&set(&["x"]), &set(&["y"])), 0.0);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
    }

    #[test]
    fn error_sets_collect_mispredictions() {
        let gold = corpus_of(&[(4, vec![span(0, 1, "A"), span(2, 4, "B")])]);
        let errors = error_set(&gold, &preds_of(&[vec![span(0, 1, "A"), span(2, 3, "B")]])).unwrap();
        assert_eq!(errors.into_iter().collect::<Vec<_>>(), [("s0".to_string(), span(2, 4, "B"))]);
    }

    #[test]
    fn curve_sorted_and_grid_checked() {
        let base = corpus_of(&[(4, vec![span(0, 1, "A"), span(2, 3, "A")])]);
        let moved = corpus_of(&[(4, vec![span(0, 1, "A"), span(2, 4, "A")])]);
        let pred = preds_of(&[vec![span(0, 1, "A"), span(2, 3, "A")]]);
        let golds = vec![(1.0, moved.clone()), (0.0, base.clone()), (0.5, moved)];
        let preds = vec![(0.0, pred.clone()), (0.5, pred.clone()), (1.0, pred.clone())];
        let curve = attack_curve(&golds, &preds).unwrap();
        assert_eq!(curve.iter().map(|p| p.coverage).collect::<Vec<_>>(), [0.0, 0.5, 1.0]);
        assert_eq!(curve[0].f1, super::super::span_prf(&base, &pred).unwrap().micro.f1);
        assert!(curve.windows(2).all(|w| w[1].f1 <= w[0].f1));
        assert!(attack_curve(&golds, &preds[..2]).is_err());
        assert!(curve_to_csv(&curve).starts_with("coverage,precision,recall,f1\n0,"));
    }

    fn arb_items() -> impl Strategy<Value = Vec<(usize, Vec<TypedSpan>, Vec<TypedSpan>)>> {
        let spans = |n: usize| {
            crate::corpus::tests::arb_tags(n + 1).prop_map(move |mut tags| {
                tags.resize(n, crate::corpus::Tag::Outside);
                let tokens = tags.into_iter().map(|t| Token::new("w", t)).collect();
                Sentence::new("x", tokens).unwrap().spans().iter().map(|s| s.typed()).collect::<Vec<_>>()
            })
        };
        prop::collection::vec((1usize..10).prop_flat_map(move |n| (Just(n), spans(n), spans(n))), 1..6)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn breakdown_and_confusion_invariants(items in arb_items()) {
            let gold = corpus_of(&items.iter().map(|(n, g, _)| (*n, g.clone())).collect::<Vec<_>>());
            let pred = preds_of(&items.iter().map(|(_, _, p)| p.clone()).collect::<Vec<_>>());
            let b = error_breakdown(&gold, &pred).unwrap();
            let f = b.fractions();
            let sum = f.correct_type.iter().chain(&f.wrong_type).sum::<f64>() + f.no_prediction;
            prop_assert!(b.total == 0 || (sum - 1.0).abs() < 1e-9);

            let cm = confusion(&gold, &pred).unwrap();
            let support = span_prf(&gold, &pred).unwrap().per_type;
            for label in &cm.labels {
                let expected = support.get(label).map_or(0, |p| p.gold) as i64;
                prop_assert_eq!(cm.row_sum(label), Some(expected));
            }

            let labels = cm.labels.clone();
            let other = confusion_with_labels(&gold, &PredictionSet::default(), &labels).unwrap();
            let diff = confusion_difference(&cm, &other).unwrap();
            for label in &labels {
                prop_assert_eq!(diff.row_sum(label), Some(0));
            }

            let a = error_set(&gold, &pred).unwrap();
            let e = error_set(&gold, &PredictionSet::default()).unwrap();
            prop_assert_eq!(jaccard(&a, &e), jaccard(&e, &a));
            prop_assert_eq!(jaccard(&a, &e) == 1.0, a == e);
        }
    }
}
