use std::collections::{HashMap, HashSet};

use crate::corpus::Pos;

const BUILTIN_LEXICON: &str = include_str!("../../data/pos_lexicon_en.tsv");
const BUILTIN_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Parses a `#`-commented word list, lowercased.
pub fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// The bundled English stopword list.
pub fn builtin_stopwords() -> HashSet<String> {
    parse_word_list(BUILTIN_STOPWORDS)
}

/// Approximate tagger: function words and tokens without letters are
/// `OTHER`, lexicon words get their listed tag, anything else is a noun.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    lexicon: HashMap<String, Pos>,
    function_words: HashSet<String>,
}

impl LexiconTagger {
    pub fn builtin() -> Self {
        let lexicon = BUILTIN_LEXICON
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .filter_map(|l| {
                let (word, tag) = l.split_once('\t')?;
                Some((word.to_lowercase(), Pos::from_column(tag.trim())?))
            })
            .collect();
        LexiconTagger { lexicon, function_words: builtin_stopwords() }
    }

    pub fn tag(&self, word: &str) -> Pos {
        if !word.chars().any(char::is_alphabetic) {
            return Pos::Other;
        }
        let lower = word.to_lowercase();
        if self.function_words.contains(&lower) {
            return Pos::Other;
        }
        self.lexicon.get(&lower).copied().unwrap_or(Pos::Noun)
    }
}
