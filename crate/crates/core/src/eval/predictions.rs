use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{parse_conll, Corpus, ParseMode, TypedSpan};

/// Predicted spans per sentence id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    spans: BTreeMap<String, Vec<TypedSpan>>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    sentence_id: String,
    spans: Vec<TypedSpan>,
}

impl PredictionSet {
    /// Spans are sorted by start within each sentence.
    pub fn from_map(mut spans: BTreeMap<String, Vec<TypedSpan>>) -> Self {
        for v in spans.values_mut() {
            v.sort();
        }
        PredictionSet { spans }
    }

    /// The gold spans of a corpus as if they were predictions.
    pub fn from_gold(corpus: &Corpus) -> Self {
        Self::from_corpus(corpus)
    }

    fn from_corpus(corpus: &Corpus) -> Self {
        let spans = corpus
            .sentences()
            .iter()
            .map(|s| (s.id().to_string(), s.spans().iter().map(|x| x.typed()).collect()))
            .collect();
        PredictionSet { spans }
    }

    /// Reads a column-format prediction file (predicted tags in the last
    /// column, parsed leniently). Sentences are matched to `gold` by id when
    /// every id is known, otherwise by position.
    pub fn from_columns(text: &str, gold: &Corpus) -> Result<Self, EvalError> {
        let pred = parse_conll(text, ParseMode::Lenient).map_err(|e| EvalError::Input(format!("predictions: {e}")))?;
        if pred.sentences().iter().all(|s| gold.get(s.id()).is_some()) {
            return Ok(Self::from_corpus(&pred));
        }
        if pred.len() != gold.len() {
            return Err(EvalError::Input(format!(
                "prediction file has {} sentences with unknown ids; gold has {}",
                pred.len(),
                gold.len()
            )));
        }
        let mut spans = BTreeMap::new();
        for (p, g) in pred.sentences().iter().zip(gold.sentences()) {
            if p.len() != g.len() {
                return Err(EvalError::Input(format!(
                    "sentence {}: {} predicted tokens for {} gold tokens",
                    g.id(),
                    p.len(),
                    g.len()
                )));
            }
            spans.insert(g.id().to_string(), p.spans().iter().map(|x| x.typed()).collect());
        }
        Ok(PredictionSet { spans })
    }

    /// Reads `{sentence_id, spans: [{start, end, type}]}` lines.
    pub fn from_jsonl(text: &str) -> Result<Self, EvalError> {
        let mut spans: BTreeMap<String, Vec<TypedSpan>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line =
                serde_json::from_str(raw).map_err(|e| EvalError::Input(format!("predictions line {}: {e}", i + 1)))?;
            if spans.contains_key(&line.sentence_id) {
                return Err(EvalError::Input(format!("predictions line {}: duplicate sentence {}", i + 1, line.sentence_id)));
            }
            let mut v = line.spans;
            v.sort();
            if let Some(bad) = v.iter().find(|s| s.start >= s.end) {
                return Err(EvalError::Input(format!("sentence {}: empty span {bad:?}", line.sentence_id)));
            }
            if v.windows(2).any(|w| w[0].end > w[1].start) {
                return Err(EvalError::Input(format!("sentence {}: overlapping predicted spans", line.sentence_id)));
            }
            spans.insert(line.sentence_id, v);
        }
        Ok(PredictionSet { spans })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, spans) in &self.spans {
            let line = Line { sentence_id: id.clone(), spans: spans.clone() };
            out.push_str(&serde_json::to_string(&line).expect("line serializes"));
            out.push('\n');
        }
        out
    }

    /// Spans for a sentence; empty when the sentence has no entry.
    pub fn get(&self, sentence_id: &str) -> &[TypedSpan] {
        self.spans.get(sentence_id).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<TypedSpan>)> {
        self.spans.iter()
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Every sentence id exists in `gold` and every span lies inside it.
    pub fn check_against(&self, gold: &Corpus) -> Result<(), EvalError> {
        let index: BTreeMap<&str, usize> = gold.sentences().iter().map(|s| (s.id(), s.len())).collect();
        for (id, spans) in &self.spans {
            let Some(&len) = index.get(id.as_str()) else {
                return Err(EvalError::Input(format!("prediction for unknown sentence {id:?}")));
            };
            if let Some(bad) = spans.iter().find(|s| s.end > len) {
                return Err(EvalError::Input(format!("sentence {id}: span {bad:?} exceeds {len} tokens")));
            }
        }
        Ok(())
    }
}
