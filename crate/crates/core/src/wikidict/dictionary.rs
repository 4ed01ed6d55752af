use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{is_qid, WikidictError};

pub const DICTIONARY_VERSION: u32 = 1;

/// Replacement surfaces for one fine-grained class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub label: String,
    pub surfaces: Vec<String>,
}

/// How candidates were filtered for out-of-distribution-ness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodMode {
    /// Keep candidates with at least one word outside the training entity vocabulary.
    TrainVocab,
    /// Keep only candidates the victim model is known to get wrong.
    VictimErrors,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSettings {
    pub ood_mode: OodMode,
    pub vocab_case_sensitive: bool,
    pub train_vocab_size: usize,
    pub victim_error_count: Option<usize>,
    pub allow_classes: Vec<String>,
    pub deny_classes: Vec<String>,
    pub deny_entities: Vec<String>,
    pub per_class_limit: usize,
    pub fetch_cap: usize,
    pub person_name_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryMeta {
    /// Name of the corpus the dictionary was built from.
    pub source: String,
    /// Build timestamp; omitted unless supplied so builds stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub built_at: Option<String>,
    pub seed: u64,
    pub filter: FilterSettings,
}

/// Entity type to fine-grained class to replacement surfaces, plus a pool of
/// generated person names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarialDictionary {
    pub version: u32,
    pub meta: DictionaryMeta,
    pub types: BTreeMap<String, BTreeMap<String, ClassEntry>>,
    #[serde(default)]
    pub person_names: Vec<String>,
}

impl AdversarialDictionary {
    pub fn class(&self, etype: &str, class_qid: &str) -> Option<&ClassEntry> {
        self.types.get(etype)?.get(class_qid)
    }

    pub fn class_count(&self) -> usize {
        self.types.values().map(BTreeMap::len).sum()
    }

    pub fn surface_count(&self) -> usize {
        self.types.values().flat_map(BTreeMap::values).map(|c| c.surfaces.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.class_count() == 0 && self.person_names.is_empty()
    }

    /// Checks the format version, qids, and that every class list is
    /// non-empty and free of case-insensitive duplicates.
    pub fn validate(&self) -> Result<(), WikidictError> {
        if self.version != DICTIONARY_VERSION {
            return Err(WikidictError::Format(format!(
                "unsupported dictionary version {} (expected {DICTIONARY_VERSION})",
                self.version
            )));
        }
        for (etype, classes) in &self.types {
            for (qid, entry) in classes {
                let at = || format!("{etype}/{qid}");
                if !is_qid(qid) {
                    return Err(WikidictError::Format(format!("{}: class key is not a QID", at())));
                }
                if entry.surfaces.is_empty() {
                    return Err(WikidictError::Format(format!("{}: empty replacement list", at())));
                }
                let mut seen = HashSet::new();
                for s in &entry.surfaces {
                    if s.split_whitespace().next().is_none() {
                        return Err(WikidictError::Format(format!("{}: blank surface", at())));
                    }
                    if !seen.insert(s.to_lowercase()) {
                        return Err(WikidictError::Format(format!("{}: duplicate surface {s:?}", at())));
                    }
                }
            }
        }
        if self.person_names.iter().any(|n| n.split_whitespace().next().is_none()) {
            return Err(WikidictError::Format("blank person name".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, WikidictError> {
        let dict: AdversarialDictionary =
            serde_json::from_str(text).map_err(|e| WikidictError::Format(format!("dictionary: {e}")))?;
        dict.validate()?;
        Ok(dict)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("dictionary serializes");
        text.push('\n');
        text
    }
}

/// Manual curation applied while building a dictionary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationRules {
    /// When non-empty, only these classes are used.
    pub allow_classes: Vec<String>,
    pub deny_classes: Vec<String>,
    /// Surfaces (case-insensitive) never linked and never used as replacements.
    pub deny_entities: Vec<String>,
    /// Members retrieved per class.
    pub per_class_limit: usize,
}

impl Default for CurationRules {
    fn default() -> Self {
        CurationRules { allow_classes: Vec::new(), deny_classes: Vec::new(), deny_entities: Vec::new(), per_class_limit: 500 }
    }
}

impl CurationRules {
    pub fn from_json(text: &str) -> Result<Self, WikidictError> {
        let rules: CurationRules =
            serde_json::from_str(text).map_err(|e| WikidictError::Format(format!("curation rules: {e}")))?;
        if rules.per_class_limit == 0 {
            return Err(WikidictError::InvalidArgument("per_class_limit must be at least 1".into()));
        }
        if let Some(bad) = rules.allow_classes.iter().chain(&rules.deny_classes).find(|q| !is_qid(q)) {
            return Err(WikidictError::Format(format!("curation rules: {bad:?} is not a QID")));
        }
        Ok(rules)
    }

    pub fn class_allowed(&self, qid: &str) -> bool {
        (self.allow_classes.is_empty() || self.allow_classes.iter().any(|q| q == qid))
            && !self.deny_classes.iter().any(|q| q == qid)
    }

    pub fn entity_denied(&self, surface: &str) -> bool {
        let surface = surface.to_lowercase();
        self.deny_entities.iter().any(|d| d.to_lowercase() == surface)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkStatus {
    Linked,
    Unlinked,
    /// Person entity; handled by generated names.
    Person,
    /// Surface listed in the curation entity denylist.
    Denied,
}

/// Linking outcome for one gold entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: String,
    pub surface: String,
    pub status: LinkStatus,
    #[serde(default)]
    pub qid: Option<String>,
    /// Fine-grained classes that survived curation.
    #[serde(default)]
    pub classes: Vec<String>,
}

/// Link entries for every gold entity, in corpus order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkMap {
    entries: Vec<LinkEntry>,
    index: BTreeMap<(String, usize), usize>,
}

impl LinkMap {
    pub fn new(entries: Vec<LinkEntry>) -> Self {
        let index = entries.iter().enumerate().map(|(i, e)| ((e.sentence_id.clone(), e.start), i)).collect();
        LinkMap { entries, index }
    }

    pub fn entries(&self) -> &[LinkEntry] {
        &self.entries
    }

    pub fn get(&self, sentence_id: &str, start: usize) -> Option<&LinkEntry> {
        self.index.get(&(sentence_id.to_string(), start)).map(|&i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("link entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, WikidictError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: LinkEntry = serde_json::from_str(line)
                .map_err(|e| WikidictError::Format(format!("link map line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Ok(LinkMap::new(entries))
    }
}

/// Per-type dictionary statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDictStats {
    #[serde(rename = "type")]
    pub etype: String,
    pub original_entities: usize,
    pub linked: usize,
    pub unlinked: usize,
    pub denied: usize,
    /// `None` for person types, which bypass classification.
    pub classes: Option<usize>,
    pub adversarial_entities: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictStats {
    pub per_type: Vec<TypeDictStats>,
    pub total_original_entities: usize,
    pub total_classes: usize,
    pub total_adversarial_entities: usize,
    pub unlinked_surfaces: Vec<String>,
}

impl DictStats {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>10} {:>8} {:>12}", "type", "original", "classes", "adversarial");
        for row in &self.per_type {
            let classes = row.classes.map_or_else(|| "N/A".to_string(), |c| c.to_string());
            let _ = writeln!(out, "{:<12} {:>10} {:>8} {:>12}", row.etype, row.original_entities, classes, row.adversarial_entities);
        }
        let _ = writeln!(
            out,
            "{:<12} {:>10} {:>8} {:>12}",
            "Total", self.total_original_entities, self.total_classes, self.total_adversarial_entities
        );
        out
    }
}
