use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{extract_spans, Corpus};

/// What counts as an entity word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabOptions {
    pub case_sensitive: bool,
    /// Count tokens without any alphanumeric character.
    pub include_punctuation: bool,
}

impl Default for VocabOptions {
    fn default() -> Self {
        VocabOptions { case_sensitive: true, include_punctuation: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeVocab {
    #[serde(rename = "type")]
    pub etype: String,
    pub train_words: usize,
    pub eval_words: usize,
    pub seen_words: usize,
    /// Fraction of the eval words also present in the training words; 0 when
    /// the eval side has no words.
    pub seen_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityVocabStats {
    pub options: VocabOptions,
    pub per_type: Vec<TypeVocab>,
    pub all_types: TypeVocab,
}

/// Unique entity words per entity type.
pub fn entity_words(corpus: &Corpus, options: &VocabOptions) -> BTreeMap<String, BTreeSet<String>> {
    let mut words: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for sentence in corpus.sentences() {
        for span in extract_spans(sentence) {
            let entry = words.entry(span.etype.clone()).or_default();
            for token in &sentence.tokens()[span.start..span.end] {
                if !options.include_punctuation && !token.text.chars().any(char::is_alphanumeric) {
                    continue;
                }
                let word = if options.case_sensitive { token.text.clone() } else { token.text.to_lowercase() };
                entry.insert(word);
            }
        }
    }
    words
}

pub fn entity_vocab_stats(train: &Corpus, eval: &Corpus) -> EntityVocabStats {
    entity_vocab_stats_with(train, eval, &VocabOptions::default())
}

/// Per-type unique entity-word counts and seen ratios. A word of type `T` in
/// the eval split is "seen" when it occurs among the training words of the
/// same type; the `ALL_TYPES` row pools words across types.
pub fn entity_vocab_stats_with(train: &Corpus, eval: &Corpus, options: &VocabOptions) -> EntityVocabStats {
    let train_words = entity_words(train, options);
    let eval_words = entity_words(eval, options);
    let empty = BTreeSet::new();

    let types: BTreeSet<&String> = train_words.keys().chain(eval_words.keys()).collect();
    let per_type = types
        .into_iter()
        .map(|t| row(t, train_words.get(t).unwrap_or(&empty), eval_words.get(t).unwrap_or(&empty)))
        .collect();

    let all_train: BTreeSet<String> = train_words.values().flatten().cloned().collect();
    let all_eval: BTreeSet<String> = eval_words.values().flatten().cloned().collect();
    EntityVocabStats { options: *options, per_type, all_types: row("ALL_TYPES", &all_train, &all_eval) }
}

fn row(etype: &str, train: &BTreeSet<String>, eval: &BTreeSet<String>) -> TypeVocab {
    let seen = eval.intersection(train).count();
    let seen_ratio = if eval.is_empty() { 0.0 } else { seen as f64 / eval.len() as f64 };
    TypeVocab { etype: etype.to_string(), train_words: train.len(), eval_words: eval.len(), seen_words: seen, seen_ratio }
}
