use std::collections::{HashMap, HashSet};

use crate::corpus::{extract_spans, Corpus, Sentence, Tag, TypedSpan};
use crate::seed::sha256_hex;

/// Ranks candidate sentences; lower keys are more adversarial.
pub trait VictimScorer: Send + Sync {
    fn score(&self, sentence: &Sentence) -> f64;

    fn name(&self) -> &'static str;
}

/// Lookup key of a sentence: SHA-256 of its token texts joined by single spaces.
pub fn sentence_digest<S: AsRef<str>>(texts: &[S]) -> String {
    let joined: Vec<&str> = texts.iter().map(AsRef::as_ref).collect();
    sha256_hex(joined.join(" ").as_bytes())
}

/// Span F1 of a reference model's precomputed predictions on the sentence.
/// Sentences without a prediction entry score `+inf`.
pub struct PredictionLookupScorer {
    predictions: HashMap<String, Vec<TypedSpan>>,
}

impl PredictionLookupScorer {
    /// Predictions keyed by [`sentence_digest`].
    pub fn new(predictions: HashMap<String, Vec<TypedSpan>>) -> Self {
        PredictionLookupScorer { predictions }
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

impl VictimScorer for PredictionLookupScorer {
    fn score(&self, sentence: &Sentence) -> f64 {
        let Some(pred) = self.predictions.get(&sentence_digest(&sentence.texts())) else {
            return f64::INFINITY;
        };
        let gold: HashSet<TypedSpan> = extract_spans(sentence).iter().map(|s| s.typed()).collect();
        let pred: HashSet<&TypedSpan> = pred.iter().collect();
        if gold.is_empty() && pred.is_empty() {
            return 1.0;
        }
        let matched = pred.iter().filter(|p| gold.contains(**p)).count() as f64;
        if matched == 0.0 {
            return 0.0;
        }
        let p = matched / pred.len() as f64;
        let r = matched / gold.len() as f64;
        2.0 * p * r / (p + r)
    }

    fn name(&self) -> &'static str {
        "prediction-lookup"
    }
}

/// Fraction of a sentence's context tokens that occur anywhere in the
/// training corpus (case-folded). A stand-in for "correlation with the
/// training data" when no victim predictions are available.
pub struct UnigramOverlapScorer {
    vocab: HashSet<String>,
}

impl UnigramOverlapScorer {
    pub fn from_corpus(train: &Corpus) -> Self {
        let vocab = train.sentences().iter().flat_map(|s| s.tokens()).map(|t| t.text.to_lowercase()).collect();
        UnigramOverlapScorer { vocab }
    }

    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        UnigramOverlapScorer { vocab: words.into_iter().map(|w| w.to_lowercase()).collect() }
    }
}

impl VictimScorer for UnigramOverlapScorer {
    fn score(&self, sentence: &Sentence) -> f64 {
        let context: Vec<&str> =
            sentence.tokens().iter().filter(|t| t.tag == Tag::Outside).map(|t| t.text.as_str()).collect();
        if context.is_empty() {
            return 0.0;
        }
        let seen = context.iter().filter(|w| self.vocab.contains(&w.to_lowercase())).count();
        seen as f64 / context.len() as f64
    }

    fn name(&self) -> &'static str {
        "unigram-overlap"
    }
}
