//! Training-data augmentation: entity switching, random masking of entity
//! letters, and mixing up sentence halves around same-type entities.

use std::collections::{BTreeMap, HashSet};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context_attack::builtin_stopwords;
use crate::corpus::{Corpus, EntitySpan, Pos, Sentence, SpanEdit, Token};
use crate::seed::rng_for;

/// Identifier of the bundled stopword list.
pub const BUILTIN_STOPWORDS_ID: &str = "en-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMethod {
    EntitySwitching,
    RandomMasking,
    MixingUp,
}

impl AugmentMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AugmentMethod::EntitySwitching => "entity_switching",
            AugmentMethod::RandomMasking => "random_masking",
            AugmentMethod::MixingUp => "mixing_up",
        }
    }
}

impl FromStr for AugmentMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "entity_switching" => Ok(AugmentMethod::EntitySwitching),
            "random_masking" => Ok(AugmentMethod::RandomMasking),
            "mixing_up" => Ok(AugmentMethod::MixingUp),
            _ => Err(format!("unknown augmentation method {s:?} (expected entity_switching, random_masking or mixing_up)")),
        }
    }
}

/// One audited edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AugmentEdit {
    EntitySwitching { sentence_id: String, original: EntitySpan, replacement: String, donor_sentence_id: String },
    RandomMasking { sentence_id: String, original: EntitySpan, masked: String },
    MixingUp { sentence_id: String, entity: EntitySpan, donor_sentence_id: String, donor_entity: EntitySpan },
}

#[derive(Debug, Clone)]
pub struct AugmentOutput {
    pub corpus: Corpus,
    pub edits: Vec<AugmentEdit>,
}

pub fn augment(corpus: &Corpus, method: AugmentMethod, seed: u64) -> AugmentOutput {
    match method {
        AugmentMethod::EntitySwitching => entity_switching(corpus, seed),
        AugmentMethod::RandomMasking => random_masking(corpus, seed),
        AugmentMethod::MixingUp => mixing_up(corpus, seed),
    }
}

/// Every occurrence of each entity type, as (sentence index, span).
fn index_by_type(corpus: &Corpus) -> BTreeMap<String, Vec<(usize, EntitySpan)>> {
    let mut index: BTreeMap<String, Vec<(usize, EntitySpan)>> = BTreeMap::new();
    for (si, span) in corpus.spans() {
        index.entry(span.etype.clone()).or_default().push((si, span));
    }
    index
}

fn finish(corpus: &Corpus, results: Vec<(Sentence, Vec<AugmentEdit>)>) -> AugmentOutput {
    let mut sentences = Vec::with_capacity(results.len());
    let mut edits = Vec::new();
    for (s, e) in results {
        sentences.push(s);
        edits.extend(e);
    }
    AugmentOutput { corpus: Corpus::new(corpus.split_name(), sentences).expect("ids are unchanged"), edits }
}

/// Replaces each entity by a same-type entity with a different surface taken
/// uniformly from the other sentences' occurrences.
pub fn entity_switching(corpus: &Corpus, seed: u64) -> AugmentOutput {
    let index = index_by_type(corpus);
    let results = corpus
        .sentences()
        .par_iter()
        .enumerate()
        .map(|(si, sentence)| {
            let mut edits = Vec::new();
            let mut log = Vec::new();
            for span in sentence.spans() {
                let donors: Vec<&(usize, EntitySpan)> = index[&span.etype]
                    .iter()
                    .filter(|(dsi, d)| *dsi != si && d.surface != span.surface)
                    .collect();
                if donors.is_empty() {
                    continue;
                }
                let mut rng = rng_for(seed, "entity-switching", &[sentence.id().as_bytes(), &(span.start as u64).to_le_bytes()]);
                let (dsi, donor) = donors[rng.gen_range(0..donors.len())];
                let donor_sentence = &corpus.sentences()[*dsi];
                let texts: Vec<String> = donor_sentence.tokens()[donor.start..donor.end].iter().map(|t| t.text.clone()).collect();
                edits.push(SpanEdit { start: span.start, end: span.end, etype: span.etype.clone(), texts });
                log.push(AugmentEdit::EntitySwitching {
                    sentence_id: sentence.id().to_string(),
                    replacement: donor.surface.clone(),
                    donor_sentence_id: donor_sentence.id().to_string(),
                    original: span,
                });
            }
            let new_pos = sentence.tokens().iter().any(|t| t.pos.is_some()).then_some(Pos::Noun);
            let out = if edits.is_empty() { sentence.clone() } else { sentence.splice_spans(&edits, new_pos) };
            (out, log)
        })
        .collect();
    finish(corpus, results)
}

/// Replaces each letter of non-stopword entity tokens with a random letter
/// of the same case. Other characters, stopwords and context are untouched.
pub fn random_masking(corpus: &Corpus, seed: u64) -> AugmentOutput {
    random_masking_with(corpus, seed, &builtin_stopwords())
}

pub fn random_masking_with(corpus: &Corpus, seed: u64, stopwords: &HashSet<String>) -> AugmentOutput {
    let results = corpus
        .sentences()
        .par_iter()
        .map(|sentence| {
            let mut texts = sentence.texts();
            let mut log = Vec::new();
            for span in sentence.spans() {
                let mut rng = rng_for(seed, "random-masking", &[sentence.id().as_bytes(), &(span.start as u64).to_le_bytes()]);
                for text in &mut texts[span.start..span.end] {
                    if stopwords.contains(&text.to_lowercase()) {
                        continue;
                    }
                    *text = text.chars().map(|c| mask_char(c, &mut rng)).collect();
                }
                log.push(AugmentEdit::RandomMasking {
                    sentence_id: sentence.id().to_string(),
                    masked: texts[span.start..span.end].join(" "),
                    original: span,
                });
            }
            (sentence.with_texts(texts), log)
        })
        .collect();
    finish(corpus, results)
}

fn mask_char(c: char, rng: &mut impl Rng) -> char {
    if c.is_ascii_uppercase() {
        rng.gen_range(b'A'..=b'Z') as char
    } else if c.is_ascii_lowercase() {
        rng.gen_range(b'a'..=b'z') as char
    } else if c.is_uppercase() {
        // non-ASCII letters keep their case class with an ASCII stand-in
        rng.gen_range(b'A'..=b'Z') as char
    } else if c.is_lowercase() {
        rng.gen_range(b'a'..=b'z') as char
    } else {
        c
    }
}

/// For each sentence with entities: pick one entity uniformly among those
/// with a same-type entity in another sentence, pick a donor occurrence
/// uniformly, and join the target up to its entity with the donor after its
/// entity. Sentences without a usable entity pass through unchanged.
pub fn mixing_up(corpus: &Corpus, seed: u64) -> AugmentOutput {
    let index = index_by_type(corpus);
    let results = corpus
        .sentences()
        .par_iter()
        .enumerate()
        .map(|(si, sentence)| {
            let donors_for = |span: &EntitySpan| -> Vec<&(usize, EntitySpan)> {
                index[&span.etype].iter().filter(|(dsi, _)| *dsi != si).collect()
            };
            let spans: Vec<EntitySpan> = sentence.spans().into_iter().filter(|s| !donors_for(s).is_empty()).collect();
            if spans.is_empty() {
                return (sentence.clone(), Vec::new());
            }
            let mut rng = rng_for(seed, "mixing-up", &[sentence.id().as_bytes()]);
            let span = &spans[rng.gen_range(0..spans.len())];
            let donors = donors_for(span);
            let (dsi, donor) = donors[rng.gen_range(0..donors.len())];
            let donor_sentence = &corpus.sentences()[*dsi];
            let mut tokens: Vec<Token> = sentence.tokens()[..span.end].to_vec();
            tokens.extend_from_slice(&donor_sentence.tokens()[donor.end..]);
            // donor spans are maximal, so the suffix opens with O or B-; the splice stays BIO-valid
            let out = Sentence::new(sentence.id(), tokens).expect("spliced sentence is valid");
            let edit = AugmentEdit::MixingUp {
                sentence_id: sentence.id().to_string(),
                entity: span.clone(),
                donor_sentence_id: donor_sentence.id().to_string(),
                donor_entity: donor.clone(),
            };
            (out, vec![edit])
        })
        .collect();
    finish(corpus, results)
}

/// How augmented sentences join the original corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// Originals are kept and augmented sentences are appended with the id
    /// suffix [`AUGMENTED_ID_SUFFIX`].
    #[default]
    Supplement,
    /// Augmented sentences take the place of their originals.
    Replace,
}

impl FromStr for MixMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "supplement" => Ok(MixMode::Supplement),
            "replace" => Ok(MixMode::Replace),
            _ => Err(format!("unknown mix mode {s:?} (expected supplement or replace)")),
        }
    }
}

pub const AUGMENTED_ID_SUFFIX: &str = "#aug";

/// Combines `original` with its augmented counterpart. `ratio` in [0, 1] is
/// the share of changed sentences used, drawn uniformly without
/// replacement; 1 gives one augmented sentence per changed original.
pub fn mix(original: &Corpus, augmented: &Corpus, mode: MixMode, ratio: f64, seed: u64) -> Result<Corpus, String> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(format!("mixing ratio must lie in [0, 1], got {ratio}"));
    }
    if original.len() != augmented.len() {
        return Err("augmented corpus does not match the original".into());
    }
    let changed: Vec<usize> =
        (0..original.len()).filter(|&i| original.sentences()[i] != augmented.sentences()[i]).collect();
    let k = ((ratio * changed.len() as f64).round() as usize).min(changed.len());
    let mut rng = rng_for(seed, "augment-mix", &[]);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, changed.len(), k).into_iter().map(|i| changed[i]).collect();
    picked.sort_unstable();
    let sentences = match mode {
        MixMode::Replace => {
            let mut out = original.sentences().to_vec();
            for &i in &picked {
                out[i] = augmented.sentences()[i].clone();
            }
            out
        }
        MixMode::Supplement => {
            let mut out = original.sentences().to_vec();
            for &i in &picked {
                let (id, tokens) = augmented.sentences()[i].clone().into_parts();
                out.push(Sentence::new(format!("{id}{AUGMENTED_ID_SUFFIX}"), tokens).expect("tokens were valid"));
            }
            out
        }
    };
    Corpus::new(original.split_name(), sentences).map_err(|e| e.to_string())
}

pub fn edits_to_jsonl(edits: &[AugmentEdit]) -> String {
    let mut out = String::new();
    for e in edits {
        out.push_str(&serde_json::to_string(e).expect("edit serializes"));
        out.push('\n');
    }
    out
}
