//! Adversarial entity dictionary: link gold entities to knowledge-base items,
//! read their fine-grained classes, retrieve other members of those classes
//! and keep the ones unlikely to appear in the training data. Person entities
//! get generated names instead.

mod dictionary;
pub mod kb;
mod names;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{entity_words, Corpus, VocabOptions};

pub use dictionary::{
    AdversarialDictionary, ClassEntry, CurationRules, DictStats, DictionaryMeta, FilterSettings, LinkEntry, LinkMap,
    LinkStatus, OodMode, TypeDictStats, DICTIONARY_VERSION,
};
pub use kb::{KbClient, KbConfig, KbError, KbRequest, KbTransport, ResponseCache};
pub use names::{combination_count, generate_person_names, generate_person_names_with, MiddleNames, NamePartsTable};

/// Members requested per class from the knowledge base before sorting.
pub const DEFAULT_FETCH_CAP: usize = 2000;

#[derive(Debug, thiserror::Error)]
pub enum WikidictError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot generate {requested} distinct names from {available} combinations")]
    Exhausted { requested: usize, available: u128 },
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub qid: String,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineClass {
    pub qid: String,
    pub label: String,
}

/// `Q` followed by one or more ASCII digits.
pub fn is_qid(s: &str) -> bool {
    s.strip_prefix('Q').is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

/// Numeric sort key of a qid; malformed ids sort last.
pub fn qid_number(qid: &str) -> u64 {
    qid.strip_prefix('Q').and_then(|d| d.parse().ok()).unwrap_or(u64::MAX)
}

/// The first search hit whose label or an alias equals `surface`
/// case-insensitively, or `None` when nothing matches.
pub fn link_entity(client: &KbClient, surface: &str) -> Result<Option<EntityRecord>, WikidictError> {
    let surface = surface.trim();
    if surface.is_empty() {
        return Err(WikidictError::InvalidArgument("cannot link an empty surface".into()));
    }
    let wanted = surface.to_lowercase();
    let hits = client.search(surface)?;
    Ok(hits
        .into_iter()
        .find(|r| r.label.to_lowercase() == wanted || r.aliases.iter().any(|a| a.to_lowercase() == wanted)))
}

/// `P31` classes of `qid` that pass the curation rules.
pub fn fine_classes(client: &KbClient, qid: &str, rules: &CurationRules) -> Result<Vec<FineClass>, WikidictError> {
    Ok(client.instance_of(qid)?.into_iter().filter(|c| rules.class_allowed(&c.qid)).collect())
}

/// Up to `limit` instances of `class_qid`, lowest qids first.
pub fn expand_class(
    client: &KbClient,
    class_qid: &str,
    limit: usize,
    fetch_cap: usize,
) -> Result<Vec<EntityRecord>, WikidictError> {
    if limit == 0 {
        return Err(WikidictError::InvalidArgument("expansion limit must be at least 1".into()));
    }
    let mut members = client.members(class_qid, fetch_cap)?;
    members.sort_by(|a, b| qid_number(&a.qid).cmp(&qid_number(&b.qid)).then_with(|| a.qid.cmp(&b.qid)));
    members.dedup_by(|a, b| a.qid == b.qid);
    members.truncate(limit);
    Ok(members)
}

/// Entity words seen in the training split.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainVocab {
    words: HashSet<String>,
    case_sensitive: bool,
}

impl TrainVocab {
    pub fn new<I: IntoIterator<Item = String>>(words: I, case_sensitive: bool) -> Self {
        let words = words.into_iter().map(|w| if case_sensitive { w } else { w.to_lowercase() }).collect();
        TrainVocab { words, case_sensitive }
    }

    pub fn from_corpus(train: &Corpus, options: &VocabOptions) -> Self {
        let words = entity_words(train, options).into_values().flatten();
        TrainVocab::new(words, options.case_sensitive)
    }

    pub fn contains(&self, word: &str) -> bool {
        if self.case_sensitive {
            self.words.contains(word)
        } else {
            self.words.contains(&word.to_lowercase())
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn case_sensitive(&self) -> bool {
        self.case_sensitive
    }
}

/// Keeps candidates the victim gets wrong when a victim-error set is given,
/// otherwise candidates with at least one word outside the training vocabulary.
pub fn ood_filter(candidates: &[String], train_vocab: &TrainVocab, victim_errors: Option<&HashSet<String>>) -> Vec<String> {
    candidates
        .iter()
        .filter(|c| match victim_errors {
            Some(errors) => errors.contains(c.as_str()),
            None => c.split_whitespace().any(|w| !train_vocab.contains(w)),
        })
        .cloned()
        .collect()
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub train_vocab: TrainVocab,
    pub victim_errors: Option<HashSet<String>>,
    /// Entity types treated as person names.
    pub person_types: Vec<String>,
    /// Names to generate; defaults to five per person entity, capped by the
    /// number of available combinations.
    pub person_name_count: Option<usize>,
    pub middle_names: MiddleNames,
    pub fetch_cap: usize,
    pub source: String,
    pub built_at: Option<String>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            train_vocab: TrainVocab::default(),
            victim_errors: None,
            person_types: vec!["PERSON".into(), "PER".into()],
            person_name_count: None,
            middle_names: MiddleNames::Random,
            fetch_cap: DEFAULT_FETCH_CAP,
            source: String::new(),
            built_at: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DictionaryBuild {
    pub dictionary: AdversarialDictionary,
    pub links: LinkMap,
    pub stats: DictStats,
}

/// Runs link, classify, expand and filter over every gold entity of `corpus`.
/// Lookups run in parallel; results are merged in corpus order.
pub fn build_dictionary(
    corpus: &Corpus,
    client: &KbClient,
    rules: &CurationRules,
    names: &NamePartsTable,
    seed: u64,
    options: &BuildOptions,
) -> Result<DictionaryBuild, WikidictError> {
    if rules.per_class_limit == 0 {
        return Err(WikidictError::InvalidArgument("per_class_limit must be at least 1".into()));
    }
    let is_person = |etype: &str| options.person_types.iter().any(|p| p == etype);
    let spans = corpus.spans();

    // stage 1: link each distinct surface once
    let mut surfaces: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for (_, span) in &spans {
        if !is_person(&span.etype) && !rules.entity_denied(&span.surface) && seen.insert(span.surface.as_str()) {
            surfaces.push(&span.surface);
        }
    }
    let linked: Vec<Option<EntityRecord>> =
        surfaces.par_iter().map(|s| link_entity(client, s)).collect::<Result<_, _>>()?;
    let link_of: HashMap<&str, Option<EntityRecord>> = surfaces.iter().copied().zip(linked).collect();

    // stage 2: classes of each distinct linked qid
    let mut qids: Vec<&str> = link_of.values().flatten().map(|r| r.qid.as_str()).collect();
    qids.sort_by_key(|q| qid_number(q));
    qids.dedup();
    let classified: Vec<Vec<FineClass>> =
        qids.par_iter().map(|q| fine_classes(client, q, rules)).collect::<Result<_, _>>()?;
    let mut class_labels: BTreeMap<String, String> = BTreeMap::new();
    let classes_of: HashMap<&str, Vec<String>> = qids
        .iter()
        .copied()
        .zip(classified)
        .map(|(q, classes)| {
            let ids = classes.iter().map(|c| c.qid.clone()).collect();
            for c in classes {
                class_labels.entry(c.qid).or_insert(c.label);
            }
            (q, ids)
        })
        .collect();

    let mut entries = Vec::with_capacity(spans.len());
    // (etype, class) -> qids and lowercased surfaces of the originals in it
    let mut originals: BTreeMap<(String, String), (HashSet<String>, HashSet<String>)> = BTreeMap::new();
    let mut person_spans = 0;
    for (si, span) in &spans {
        let mut entry = LinkEntry {
            sentence_id: corpus.sentences()[*si].id().to_string(),
            start: span.start,
            end: span.end,
            etype: span.etype.clone(),
            surface: span.surface.clone(),
            status: LinkStatus::Unlinked,
            qid: None,
            classes: Vec::new(),
        };
        if is_person(&span.etype) {
            entry.status = LinkStatus::Person;
            person_spans += 1;
        } else if rules.entity_denied(&span.surface) {
            entry.status = LinkStatus::Denied;
        } else if let Some(Some(record)) = link_of.get(span.surface.as_str()) {
            entry.status = LinkStatus::Linked;
            entry.qid = Some(record.qid.clone());
            entry.classes = classes_of.get(record.qid.as_str()).cloned().unwrap_or_default();
            for class in &entry.classes {
                let slot = originals.entry((span.etype.clone(), class.clone())).or_default();
                slot.0.insert(record.qid.clone());
                slot.1.insert(span.surface.to_lowercase());
            }
        }
        entries.push(entry);
    }

    // stage 3: expand each distinct class once, then filter per (type, class)
    let distinct_classes: BTreeSet<&str> = originals.keys().map(|(_, c)| c.as_str()).collect();
    let distinct_classes: Vec<&str> = distinct_classes.into_iter().collect();
    let expanded: Vec<Vec<EntityRecord>> = distinct_classes
        .par_iter()
        .map(|c| expand_class(client, c, rules.per_class_limit, options.fetch_cap))
        .collect::<Result<_, _>>()?;
    let members_of: HashMap<&str, Vec<EntityRecord>> = distinct_classes.into_iter().zip(expanded).collect();

    let mut types: BTreeMap<String, BTreeMap<String, ClassEntry>> = BTreeMap::new();
    for ((etype, class), (orig_qids, orig_surfaces)) in &originals {
        let candidates: Vec<String> = members_of[class.as_str()]
            .iter()
            .filter(|m| !orig_qids.contains(&m.qid))
            .map(|m| m.label.split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|label| !label.is_empty() && !is_qid(label))
            .filter(|label| !orig_surfaces.contains(&label.to_lowercase()) && !rules.entity_denied(label))
            .collect();
        let mut kept = ood_filter(&candidates, &options.train_vocab, options.victim_errors.as_ref());
        let mut folded = HashSet::new();
        kept.retain(|s| folded.insert(s.to_lowercase()));
        if kept.is_empty() {
            continue;
        }
        let label = class_labels.get(class).cloned().unwrap_or_else(|| class.clone());
        types.entry(etype.clone()).or_default().insert(class.clone(), ClassEntry { label, surfaces: kept });
    }

    let person_names = if person_spans == 0 {
        Vec::new()
    } else {
        let available = combination_count(names, options.middle_names);
        let wanted = options.person_name_count.unwrap_or(5 * person_spans);
        let n = (wanted as u128).min(available) as usize;
        if n == 0 {
            Vec::new()
        } else {
            generate_person_names_with(names, n, seed, options.middle_names)?
        }
    };

    let dictionary = AdversarialDictionary {
        version: DICTIONARY_VERSION,
        meta: DictionaryMeta {
            source: options.source.clone(),
            built_at: options.built_at.clone(),
            seed,
            filter: FilterSettings {
                ood_mode: if options.victim_errors.is_some() { OodMode::VictimErrors } else { OodMode::TrainVocab },
                vocab_case_sensitive: options.train_vocab.case_sensitive(),
                train_vocab_size: options.train_vocab.len(),
                victim_error_count: options.victim_errors.as_ref().map(HashSet::len),
                allow_classes: rules.allow_classes.clone(),
                deny_classes: rules.deny_classes.clone(),
                deny_entities: rules.deny_entities.clone(),
                per_class_limit: rules.per_class_limit,
                fetch_cap: options.fetch_cap,
                person_name_count: person_names.len(),
            },
        },
        types,
        person_names,
    };
    let stats = dict_stats(&entries, &dictionary, &is_person);
    Ok(DictionaryBuild { dictionary, links: LinkMap::new(entries), stats })
}

fn dict_stats(entries: &[LinkEntry], dictionary: &AdversarialDictionary, is_person: &dyn Fn(&str) -> bool) -> DictStats {
    let mut rows: BTreeMap<&str, TypeDictStats> = BTreeMap::new();
    let mut unlinked = BTreeSet::new();
    for e in entries {
        let row = rows.entry(&e.etype).or_insert_with(|| TypeDictStats {
            etype: e.etype.clone(),
            original_entities: 0,
            linked: 0,
            unlinked: 0,
            denied: 0,
            classes: None,
            adversarial_entities: 0,
        });
        row.original_entities += 1;
        match e.status {
            LinkStatus::Linked => row.linked += 1,
            LinkStatus::Unlinked => {
                row.unlinked += 1;
                unlinked.insert(e.surface.clone());
            }
            LinkStatus::Denied => row.denied += 1,
            LinkStatus::Person => {}
        }
    }
    for row in rows.values_mut() {
        if is_person(&row.etype) {
            row.adversarial_entities = dictionary.person_names.len();
        } else {
            let classes = dictionary.types.get(&row.etype);
            row.classes = Some(classes.map_or(0, BTreeMap::len));
            row.adversarial_entities = classes.map_or(0, |c| c.values().map(|e| e.surfaces.len()).sum());
        }
    }
    let per_type: Vec<TypeDictStats> = rows.into_values().collect();
    DictStats {
        total_original_entities: per_type.iter().map(|r| r.original_entities).sum(),
        total_classes: per_type.iter().filter_map(|r| r.classes).sum(),
        total_adversarial_entities: per_type.iter().map(|r| r.adversarial_entities).sum(),
        unlinked_surfaces: unlinked.into_iter().collect(),
        per_type,
    }
}
