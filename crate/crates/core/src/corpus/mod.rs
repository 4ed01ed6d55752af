//! Column-format NER corpora and the span algebra shared by every other module.
//!
//! A [`Corpus`] is an ordered list of [`Sentence`]s. Sentences are validated on
//! construction: non-empty, whitespace-free token texts, and a BIO-valid tag
//! sequence. Entity spans are half-open token ranges `[start, end)`.

mod conll;
mod tag;
mod vocab;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use conll::{parse_conll, write_conll, write_sentence, ParseMode};
pub use tag::{first_violation, is_valid_sequence, repair_orphans, transition_allowed, InvalidTag, Pos, Tag};
pub use vocab::{entity_vocab_stats, entity_vocab_stats_with, entity_words, EntityVocabStats, TypeVocab, VocabOptions};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Tag { line: usize, message: String },
    #[error("sentence {id:?}: {reason}")]
    InvalidSentence { id: String, reason: String },
    #[error("duplicate sentence id {0:?}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    pub pos: Option<Pos>,
    pub tag: Tag,
}

impl Token {
    pub fn new(text: impl Into<String>, tag: Tag) -> Self {
        Token { text: text.into(), pos: None, tag }
    }

    pub fn with_pos(mut self, pos: Pos) -> Self {
        self.pos = Some(pos);
        self
    }
}

/// A typed half-open span without its surface text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypedSpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: String,
}

impl TypedSpan {
    pub fn new(start: usize, end: usize, etype: impl Into<String>) -> Self {
        TypedSpan { start, end, etype: etype.into() }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &TypedSpan) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: String,
    pub surface: String,
}

impl EntitySpan {
    pub fn typed(&self) -> TypedSpan {
        TypedSpan::new(self.start, self.end, self.etype.clone())
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    id: String,
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Result<Self, CorpusError> {
        let id = id.into();
        let invalid = |reason: String| CorpusError::InvalidSentence { id: id.clone(), reason };
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(invalid("id must be non-empty and whitespace-free".into()));
        }
        if tokens.is_empty() {
            return Err(invalid("sentence has no tokens".into()));
        }
        if let Some(i) = tokens.iter().position(|t| t.text.is_empty() || t.text.chars().any(char::is_whitespace)) {
            return Err(invalid(format!("token {i} is empty or contains whitespace")));
        }
        let tags: Vec<Tag> = tokens.iter().map(|t| t.tag.clone()).collect();
        if let Some(i) = first_violation(&tags) {
            return Err(invalid(format!("tag {} at token {i} breaks the BIO grammar", tags[i])));
        }
        Ok(Sentence { id, tokens })
    }

    /// Constructs a sentence the caller has already proven valid.
    pub(crate) fn new_unchecked(id: String, tokens: Vec<Token>) -> Self {
        debug_assert!(Sentence::new(id.clone(), tokens.clone()).is_ok(), "invalid sentence {id}");
        Sentence { id, tokens }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    pub fn tags(&self) -> Vec<Tag> {
        self.tokens.iter().map(|t| t.tag.clone()).collect()
    }

    pub fn spans(&self) -> Vec<EntitySpan> {
        extract_spans(self)
    }

    pub fn into_parts(self) -> (String, Vec<Token>) {
        (self.id, self.tokens)
    }

    /// Replaces whole entity spans with new token texts, re-tagging each
    /// replacement `B-X, I-X, ...`. Edits must be non-overlapping; tokens
    /// outside the edited spans are carried over unchanged. New tokens get
    /// `new_pos` as their POS.
    pub fn splice_spans(&self, edits: &[SpanEdit], new_pos: Option<Pos>) -> Sentence {
        let mut edits: Vec<&SpanEdit> = edits.iter().collect();
        edits.sort_by_key(|e| e.start);
        let mut out = Vec::with_capacity(self.tokens.len());
        let mut cursor = 0;
        for edit in edits {
            debug_assert!(edit.start >= cursor && edit.end <= self.tokens.len() && edit.start < edit.end);
            out.extend_from_slice(&self.tokens[cursor..edit.start]);
            for (k, text) in edit.texts.iter().enumerate() {
                let tag = if k == 0 { Tag::begin(&edit.etype) } else { Tag::inside(&edit.etype) };
                out.push(Token { text: text.clone(), pos: new_pos, tag });
            }
            cursor = edit.end;
        }
        out.extend_from_slice(&self.tokens[cursor..]);
        Sentence::new_unchecked(self.id.clone(), out)
    }

    /// Same tags and POS, new token texts. Texts must be whitespace-free.
    pub(crate) fn with_texts(&self, texts: Vec<String>) -> Sentence {
        debug_assert_eq!(texts.len(), self.tokens.len());
        let tokens = self
            .tokens
            .iter()
            .zip(texts)
            .map(|(t, text)| Token { text, pos: t.pos, tag: t.tag.clone() })
            .collect();
        Sentence::new_unchecked(self.id.clone(), tokens)
    }
}

/// Replacement of the span `[start, end)` by `texts`, typed `etype`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanEdit {
    pub start: usize,
    pub end: usize,
    pub etype: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    split_name: String,
    sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(split_name: impl Into<String>, sentences: Vec<Sentence>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(sentences.len());
        for s in &sentences {
            if !seen.insert(s.id()) {
                return Err(CorpusError::DuplicateId(s.id().to_string()));
            }
        }
        Ok(Corpus { split_name: split_name.into(), sentences })
    }

    pub(crate) fn new_unchecked(split_name: String, sentences: Vec<Sentence>) -> Self {
        Corpus { split_name, sentences }
    }

    pub fn empty(split_name: impl Into<String>) -> Self {
        Corpus { split_name: split_name.into(), sentences: Vec::new() }
    }

    pub fn split_name(&self) -> &str {
        &self.split_name
    }

    pub fn with_split_name(mut self, name: impl Into<String>) -> Self {
        self.split_name = name.into();
        self
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// True when any token carries a POS tag.
    pub fn has_pos(&self) -> bool {
        self.sentences.iter().flat_map(|s| s.tokens()).any(|t| t.pos.is_some())
    }

    /// True when every token carries a POS tag.
    pub fn has_full_pos(&self) -> bool {
        self.sentences.iter().flat_map(|s| s.tokens()).all(|t| t.pos.is_some())
    }

    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.id() == id)
    }

    /// All gold spans in corpus order, paired with their sentence index.
    pub fn spans(&self) -> Vec<(usize, EntitySpan)> {
        self.sentences
            .iter()
            .enumerate()
            .flat_map(|(i, s)| extract_spans(s).into_iter().map(move |sp| (i, sp)))
            .collect()
    }

    pub fn entity_count(&self) -> usize {
        self.sentences.iter().map(|s| extract_spans(s).len()).sum()
    }
}

/// Maximal, non-overlapping spans of a BIO-valid sentence, sorted by start.
pub fn extract_spans(sentence: &Sentence) -> Vec<EntitySpan> {
    let tokens = sentence.tokens();
    let make = |start: usize, end: usize, etype: &str| EntitySpan {
        start,
        end,
        etype: etype.to_string(),
        surface: join_texts(&tokens[start..end]),
    };
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, token) in tokens.iter().enumerate() {
        match &token.tag {
            Tag::Outside => {
                if let Some((s, t)) = open.take() {
                    spans.push(make(s, i, t));
                }
            }
            Tag::Begin(x) => {
                if let Some((s, t)) = open.take() {
                    spans.push(make(s, i, t));
                }
                open = Some((i, x));
            }
            Tag::Inside(x) => match open {
                Some((_, t)) if t == x => {}
                _ => {
                    if let Some((s, t)) = open.take() {
                        spans.push(make(s, i, t));
                    }
                    open = Some((i, x));
                }
            },
        }
    }
    if let Some((s, t)) = open {
        spans.push(make(s, tokens.len(), t));
    }
    spans
}

/// Rebuilds a BIO tag sequence of length `len` from non-overlapping spans.
pub fn tags_from_spans(len: usize, spans: &[TypedSpan]) -> Vec<Tag> {
    let mut tags = vec![Tag::Outside; len];
    for span in spans {
        for (i, tag) in tags.iter_mut().enumerate().take(span.end.min(len)).skip(span.start) {
            *tag = if i == span.start { Tag::begin(&span.etype) } else { Tag::inside(&span.etype) };
        }
    }
    tags
}

fn join_texts(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.text);
    }
    out
}
