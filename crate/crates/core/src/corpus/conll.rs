use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use super::{first_violation, repair_orphans, Corpus, CorpusError, Pos, Sentence, Tag, Token};

/// How BIO violations are handled while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// An orphan `I-X` is an error.
    Strict,
    /// An orphan `I-X` is rewritten to `B-X`.
    #[default]
    Lenient,
}

impl FromStr for ParseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(ParseMode::Strict),
            "lenient" => Ok(ParseMode::Lenient),
            other => Err(format!("unknown parse mode {other:?} (expected strict or lenient)")),
        }
    }
}

const ID_PREFIX: &str = "# id = ";

struct PendingToken {
    token: Token,
    line: usize,
}

/// Parses column-format text: one token per line, blank line between
/// sentences, token in the first column, BIO tag in the last column and an
/// optional POS tag in the second. Columns are tab-separated when the input
/// contains a tab anywhere, otherwise whitespace-separated. A `# id = X`
/// line before a sentence sets its id; sentences without one are numbered
/// from 1. `-DOCSTART-` lines are skipped.
pub fn parse_conll(text: &str, mode: ParseMode) -> Result<Corpus, CorpusError> {
    let tab_separated = text.contains('\t');
    let mut columns: Option<usize> = None;
    let mut pending_id: Option<(String, usize)> = None;
    let mut current: Vec<PendingToken> = Vec::new();
    let mut sentences = Vec::new();
    let mut ids = HashSet::new();

    let mut flush = |current: &mut Vec<PendingToken>,
                     pending_id: &mut Option<(String, usize)>,
                     sentences: &mut Vec<Sentence>|
     -> Result<(), CorpusError> {
        if current.is_empty() {
            return Ok(());
        }
        let first_line = current[0].line;
        let mut tags: Vec<Tag> = current.iter().map(|p| p.token.tag.clone()).collect();
        if let Some(i) = first_violation(&tags) {
            match mode {
                ParseMode::Strict => {
                    return Err(CorpusError::Tag {
                        line: current[i].line,
                        message: format!("{} does not continue an entity of the same type", tags[i]),
                    })
                }
                ParseMode::Lenient => {
                    repair_orphans(&mut tags);
                }
            }
        }
        let (id, id_line) = pending_id.take().unwrap_or_else(|| ((sentences.len() + 1).to_string(), first_line));
        if !ids.insert(id.clone()) {
            return Err(CorpusError::Parse { line: id_line, message: format!("duplicate sentence id {id:?}") });
        }
        let tokens = current
            .drain(..)
            .zip(tags)
            .map(|(p, tag)| Token { tag, ..p.token })
            .collect();
        let sentence = Sentence::new(id, tokens).map_err(|e| CorpusError::Parse { line: first_line, message: e.to_string() })?;
        sentences.push(sentence);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut current, &mut pending_id, &mut sentences)?;
            continue;
        }
        if current.is_empty() {
            if let Some(id) = line.strip_prefix(ID_PREFIX) {
                let id = id.trim();
                if id.is_empty() || id.contains(char::is_whitespace) {
                    return Err(CorpusError::Parse { line: line_no, message: format!("malformed sentence id {id:?}") });
                }
                pending_id = Some((id.to_string(), line_no));
                continue;
            }
        }
        let fields: Vec<&str> = if tab_separated {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields[0] == "-DOCSTART-" {
            flush(&mut current, &mut pending_id, &mut sentences)?;
            continue;
        }
        if fields.iter().any(|f| f.is_empty() || f.contains(char::is_whitespace)) {
            return Err(CorpusError::Parse { line: line_no, message: "empty column or whitespace inside a column".into() });
        }
        let n = fields.len();
        if n < 2 {
            return Err(CorpusError::Parse { line: line_no, message: "expected at least a token and a tag column".into() });
        }
        match columns {
            None => columns = Some(n),
            Some(c) if c != n => {
                return Err(CorpusError::Parse { line: line_no, message: format!("expected {c} columns, found {n}") });
            }
            Some(_) => {}
        }
        let tag: Tag = fields[n - 1]
            .parse()
            .map_err(|e: super::InvalidTag| CorpusError::Tag { line: line_no, message: e.to_string() })?;
        let pos = if n >= 3 { Pos::from_column(fields[1]) } else { None };
        current.push(PendingToken { token: Token { text: fields[0].to_string(), pos, tag }, line: line_no });
    }
    flush(&mut current, &mut pending_id, &mut sentences)?;
    Ok(Corpus::new_unchecked(String::new(), sentences))
}

/// Serializes a corpus as tab-separated columns with `# id = ` headers and
/// LF line endings. A POS column is written when any token carries POS
/// (`_` for tokens without one).
pub fn write_conll(corpus: &Corpus) -> String {
    let with_pos = corpus.has_pos();
    let mut out = String::new();
    for sentence in corpus.sentences() {
        push_sentence(&mut out, sentence, with_pos);
    }
    out
}

/// Serializes one sentence block, POS column included when the sentence has any.
pub fn write_sentence(sentence: &Sentence) -> String {
    let mut out = String::new();
    let with_pos = sentence.tokens().iter().any(|t| t.pos.is_some());
    push_sentence(&mut out, sentence, with_pos);
    out
}

fn push_sentence(out: &mut String, sentence: &Sentence, with_pos: bool) {
    let _ = writeln!(out, "{ID_PREFIX}{}", sentence.id());
    for token in sentence.tokens() {
        out.push_str(&token.text);
        if with_pos {
            out.push('\t');
            out.push_str(token.pos.map_or("_", Pos::as_str));
        }
        out.push('\t');
        let _ = write!(out, "{}", token.tag);
        out.push('\n');
    }
    out.push('\n');
}
