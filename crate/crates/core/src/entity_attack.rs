//! Entity-level attack: gold entities are swapped for dictionary entries of
//! the same fine-grained class (or generated names for person entities).

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EntitySpan, Pos, Sentence, SpanEdit};
use crate::seed::rng_for;
use crate::wikidict::{AdversarialDictionary, LinkMap, LinkStatus};

/// Class label recorded for person replacements.
pub const PERSON_CLASS: &str = "person";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EntityAttackError {
    #[error("coverage must lie in [0, 1], got {0}")]
    Coverage(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityAttackConfig {
    pub coverage: f64,
    pub seed: u64,
    /// Never replace an entity by its own surface.
    pub forbid_identity: bool,
}

impl EntityAttackConfig {
    pub fn new(coverage: f64, seed: u64) -> Result<Self, EntityAttackError> {
        check_coverage(coverage)?;
        Ok(EntityAttackConfig { coverage, seed, forbid_identity: true })
    }
}

fn check_coverage(coverage: f64) -> Result<(), EntityAttackError> {
    if (0.0..=1.0).contains(&coverage) {
        Ok(())
    } else {
        Err(EntityAttackError::Coverage(coverage))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStatus {
    Replaced,
    /// Selected but no usable candidate in the dictionary.
    NoCandidate,
    /// Not linked to the knowledge base (or denied by curation); never attackable.
    Unlinked,
    /// Eligible but left out by the coverage draw.
    NotSelected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub sentence_id: String,
    pub original: EntitySpan,
    #[serde(default)]
    pub replacement: Option<String>,
    /// Class qid the replacement came from, or `"person"`.
    #[serde(default)]
    pub class: Option<String>,
    pub status: AttackStatus,
}

/// `round(coverage * n)` item indices drawn uniformly without replacement,
/// returned in ascending order.
pub fn select_attack_set(n: usize, coverage: f64, seed: u64) -> Result<Vec<usize>, EntityAttackError> {
    check_coverage(coverage)?;
    let k = ((coverage * n as f64).round() as usize).min(n);
    if k == n {
        return Ok((0..n).collect());
    }
    let mut rng = rng_for(seed, "attack-set", &[]);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone)]
pub struct EntityAttackOutput {
    pub corpus: Corpus,
    /// One record per gold entity, in corpus order.
    pub records: Vec<AttackRecord>,
}

/// Replaces the selected eligible entities. Linked and person entities are
/// eligible; everything else is logged as unlinked.
pub fn attack_entities(
    corpus: &Corpus,
    dictionary: &AdversarialDictionary,
    links: &LinkMap,
    config: &EntityAttackConfig,
) -> Result<EntityAttackOutput, EntityAttackError> {
    check_coverage(config.coverage)?;
    let per_sentence: Vec<Vec<EntitySpan>> = corpus.sentences().iter().map(Sentence::spans).collect();

    let status_of = |sentence: &Sentence, span: &EntitySpan| {
        links
            .get(sentence.id(), span.start)
            .filter(|e| e.end == span.end && e.etype == span.etype)
            .map(|e| e.status)
    };
    let mut eligible: Vec<(usize, usize)> = Vec::new();
    for (si, (sentence, spans)) in corpus.sentences().iter().zip(&per_sentence).enumerate() {
        for (k, span) in spans.iter().enumerate() {
            if matches!(status_of(sentence, span), Some(LinkStatus::Linked | LinkStatus::Person)) {
                eligible.push((si, k));
            }
        }
    }
    let mut selected: Vec<Vec<bool>> = per_sentence.iter().map(|s| vec![false; s.len()]).collect();
    for i in select_attack_set(eligible.len(), config.coverage, config.seed)? {
        let (si, k) = eligible[i];
        selected[si][k] = true;
    }

    let results: Vec<(Sentence, Vec<AttackRecord>)> = corpus
        .sentences()
        .par_iter()
        .zip(per_sentence.par_iter())
        .zip(selected.par_iter())
        .map(|((sentence, spans), chosen)| {
            let new_pos = sentence.tokens().iter().any(|t| t.pos.is_some()).then_some(Pos::Noun);
            let mut edits = Vec::new();
            let mut records = Vec::with_capacity(spans.len());
            for (span, &is_chosen) in spans.iter().zip(chosen) {
                let mut record = AttackRecord {
                    sentence_id: sentence.id().to_string(),
                    original: span.clone(),
                    replacement: None,
                    class: None,
                    status: AttackStatus::Unlinked,
                };
                let entry = links.get(sentence.id(), span.start).filter(|e| e.end == span.end && e.etype == span.etype);
                match entry {
                    Some(e) if matches!(e.status, LinkStatus::Linked | LinkStatus::Person) => {
                        if !is_chosen {
                            record.status = AttackStatus::NotSelected;
                        } else {
                            let classes: &[String] = if e.status == LinkStatus::Person { &[] } else { &e.classes };
                            let person = e.status == LinkStatus::Person;
                            match pick_replacement(dictionary, sentence.id(), span, classes, person, config) {
                                Some((class, surface)) => {
                                    edits.push(SpanEdit {
                                        start: span.start,
                                        end: span.end,
                                        etype: span.etype.clone(),
                                        texts: surface.split_whitespace().map(str::to_string).collect(),
                                    });
                                    record.status = AttackStatus::Replaced;
                                    record.class = Some(class);
                                    record.replacement = Some(surface);
                                }
                                None => record.status = AttackStatus::NoCandidate,
                            }
                        }
                    }
                    _ => {}
                }
                records.push(record);
            }
            let out = if edits.is_empty() { sentence.clone() } else { sentence.splice_spans(&edits, new_pos) };
            (out, records)
        })
        .collect();

    let mut sentences = Vec::with_capacity(results.len());
    let mut records = Vec::new();
    for (s, r) in results {
        sentences.push(s);
        records.extend(r);
    }
    let corpus = Corpus::new(corpus.split_name(), sentences).expect("ids are unchanged");
    Ok(EntityAttackOutput { corpus, records })
}

/// Uniform over classes with a usable surface, then uniform within the class.
fn pick_replacement(
    dictionary: &AdversarialDictionary,
    sentence_id: &str,
    span: &EntitySpan,
    classes: &[String],
    person: bool,
    config: &EntityAttackConfig,
) -> Option<(String, String)> {
    let original = span.surface.to_lowercase();
    let usable = |s: &&String| !config.forbid_identity || s.to_lowercase() != original;
    let pools: Vec<(String, Vec<&String>)> = if person {
        vec![(PERSON_CLASS.to_string(), dictionary.person_names.iter().filter(usable).collect())]
    } else {
        classes
            .iter()
            .filter_map(|c| dictionary.class(&span.etype, c).map(|entry| (c.clone(), entry.surfaces.iter().filter(usable).collect())))
            .collect()
    };
    let pools: Vec<(String, Vec<&String>)> = pools.into_iter().filter(|(_, p)| !p.is_empty()).collect();
    if pools.is_empty() {
        return None;
    }
    let mut rng = rng_for(config.seed, "entity-replace", &[sentence_id.as_bytes(), &(span.start as u64).to_le_bytes()]);
    let (class, pool) = &pools[rng.gen_range(0..pools.len())];
    let surface = pool[rng.gen_range(0..pool.len())];
    Some((class.clone(), surface.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityAttackStats {
    pub entities: usize,
    pub by_status: BTreeMap<AttackStatus, usize>,
    /// Replaced entities as a percentage of all gold entities.
    pub attacked_entity_pct: f64,
    pub sentences: usize,
    pub attacked_sentences: usize,
    pub attacked_sentence_pct: f64,
}

pub fn attack_stats(records: &[AttackRecord], corpus: &Corpus) -> EntityAttackStats {
    let mut by_status = BTreeMap::new();
    for r in records {
        *by_status.entry(r.status).or_insert(0) += 1;
    }
    let replaced = by_status.get(&AttackStatus::Replaced).copied().unwrap_or(0);
    let mut attacked: Vec<&str> =
        records.iter().filter(|r| r.status == AttackStatus::Replaced).map(|r| r.sentence_id.as_str()).collect();
    attacked.sort_unstable();
    attacked.dedup();
    EntityAttackStats {
        entities: records.len(),
        by_status,
        attacked_entity_pct: percent(replaced, records.len()),
        sentences: corpus.len(),
        attacked_sentences: attacked.len(),
        attacked_sentence_pct: percent(attacked.len(), corpus.len()),
    }
}

pub(crate) fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Attack records as line-delimited JSON.
pub fn records_to_jsonl(records: &[AttackRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}
