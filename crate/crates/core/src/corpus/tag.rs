use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A BIO label: `O`, `B-<TYPE>` or `I-<TYPE>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn begin(etype: impl Into<String>) -> Self {
        Tag::Begin(etype.into())
    }

    pub fn inside(etype: impl Into<String>) -> Self {
        Tag::Inside(etype.into())
    }

    pub fn etype(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Tag::Outside)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid BIO tag {0:?}")]
pub struct InvalidTag(pub String);

impl FromStr for Tag {
    type Err = InvalidTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let (prefix, etype) = s.split_once('-').ok_or_else(|| InvalidTag(s.to_string()))?;
        if etype.is_empty() || etype.chars().any(char::is_whitespace) {
            return Err(InvalidTag(s.to_string()));
        }
        match prefix {
            "B" => Ok(Tag::Begin(etype.to_string())),
            "I" => Ok(Tag::Inside(etype.to_string())),
            _ => Err(InvalidTag(s.to_string())),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whether `next` may follow `prev` (`None` = sentence start) in a BIO sequence.
pub fn transition_allowed(prev: Option<&Tag>, next: &Tag) -> bool {
    match next {
        Tag::Inside(x) => matches!(prev, Some(Tag::Begin(y)) | Some(Tag::Inside(y)) if y == x),
        _ => true,
    }
}

pub fn is_valid_sequence(tags: &[Tag]) -> bool {
    first_violation(tags).is_none()
}

/// Index of the first tag that breaks the BIO grammar.
pub fn first_violation(tags: &[Tag]) -> Option<usize> {
    let mut prev = None;
    for (i, tag) in tags.iter().enumerate() {
        if !transition_allowed(prev, tag) {
            return Some(i);
        }
        prev = Some(tag);
    }
    None
}

/// Rewrites every orphan `I-X` to `B-X`. Returns the number of repaired tags.
pub fn repair_orphans(tags: &mut [Tag]) -> usize {
    let mut repaired = 0;
    for i in 0..tags.len() {
        let ok = transition_allowed(if i == 0 { None } else { Some(&tags[i - 1]) }, &tags[i]);
        if !ok {
            if let Tag::Inside(t) = &tags[i] {
                tags[i] = Tag::Begin(t.clone());
                repaired += 1;
            }
        }
    }
    repaired
}

/// Coarse part-of-speech classes used to pick context words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Other,
}

impl Pos {
    pub fn is_content(self) -> bool {
        !matches!(self, Pos::Other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Other => "OTHER",
        }
    }

    /// Maps a POS column value (coarse, Universal or Penn Treebank) onto a
    /// coarse class. `_` means "no POS" and yields `None`.
    pub fn from_column(value: &str) -> Option<Pos> {
        let pos = match value {
            "_" => return None,
            "NOUN" | "PROPN" | "NN" | "NNS" | "NNP" | "NNPS" => Pos::Noun,
            "VERB" | "VB" | "VBD" | "VBG" | "VBN" | "VBP" | "VBZ" => Pos::Verb,
            "ADJ" | "JJ" | "JJR" | "JJS" => Pos::Adj,
            "ADV" | "RB" | "RBR" | "RBS" => Pos::Adv,
            _ => Pos::Other,
        };
        Some(pos)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
