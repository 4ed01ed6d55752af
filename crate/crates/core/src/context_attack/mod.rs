//! Context-level attack: content words outside gold entities are masked and
//! refilled, one position at a time from left to right, with low-ranked
//! masked-LM candidates. Of several sampled variants per sentence, the one a
//! victim scorer ranks most adversarial is kept.

mod mlm;
mod pos;
mod scorer;

use std::collections::BTreeSet;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_sentence, Corpus, Sentence, Tag};
use crate::entity_attack::percent;
use crate::seed::rng_for;

pub use mlm::{
    raw_fill, run_conformance, validate_request, validate_response, Candidate, ConformanceSuite, ConformanceVector,
    Expectation, FillRequest, FillResponse, HealthStatus, HttpMlmProvider, MlmProvider, ProviderError, RawOutcome,
    Rejection, StubProvider, MASK_TOKEN, MLM_ENDPOINT_ENV, STUB_MAX_TOP_K,
};
pub use pos::{builtin_stopwords, parse_word_list, LexiconTagger};
pub use scorer::{sentence_digest, PredictionLookupScorer, UnigramOverlapScorer, VictimScorer};

/// Masks per plan are drawn from `1..=MAX_MASKS`.
pub const MAX_MASKS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextAttackError {
    #[error("invalid context-attack configuration: {0}")]
    Config(String),
}

/// Where content-word POS tags come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosSource {
    /// The corpus POS column; tokens without a tag fall back to the lexicon.
    InputColumn,
    #[default]
    BuiltinLexicon,
}

impl FromStr for PosSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "input-column" => Ok(PosSource::InputColumn),
            "builtin-lexicon" => Ok(PosSource::BuiltinLexicon),
            other => Err(format!("unknown POS source {other:?} (expected input-column or builtin-lexicon)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextAttackConfig {
    /// Lowest accepted candidate rank, 0-indexed and inclusive.
    pub lo: usize,
    /// End of the rank window, exclusive; also the `top_k` requested.
    pub hi: usize,
    /// Variants sampled per sentence.
    pub variants: usize,
    pub seed: u64,
    pub pos_source: PosSource,
}

impl Default for ContextAttackConfig {
    fn default() -> Self {
        ContextAttackConfig { lo: 100, hi: 200, variants: 8, seed: 0, pos_source: PosSource::BuiltinLexicon }
    }
}

impl ContextAttackConfig {
    pub fn validate(&self) -> Result<(), ContextAttackError> {
        if self.lo >= self.hi {
            return Err(ContextAttackError::Config(format!("empty rank window [{}, {})", self.lo, self.hi)));
        }
        if self.variants == 0 {
            return Err(ContextAttackError::Config("at least one variant per sentence is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub sentence_id: String,
    pub variant: usize,
    /// Strictly increasing token positions.
    pub positions: Vec<usize>,
}

/// Positions of content words (noun, verb, adjective, adverb) outside every
/// gold entity span.
pub fn select_target_tokens(
    sentence: &Sentence,
    source: PosSource,
    tagger: &LexiconTagger,
) -> Result<Vec<usize>, ContextAttackError> {
    if source == PosSource::InputColumn && sentence.tokens().iter().all(|t| t.pos.is_none()) {
        return Err(ContextAttackError::Config(format!("sentence {} has no POS column", sentence.id())));
    }
    Ok(sentence
        .tokens()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.tag == Tag::Outside)
        .filter(|(_, t)| {
            let pos = match source {
                PosSource::InputColumn => t.pos.unwrap_or_else(|| tagger.tag(&t.text)),
                PosSource::BuiltinLexicon => tagger.tag(&t.text),
            };
            pos.is_content()
        })
        .map(|(i, _)| i)
        .collect())
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of distinct plans over `targets` positions.
pub fn plan_space(targets: usize) -> usize {
    (1..=MAX_MASKS.min(targets)).map(|m| binomial(targets, m)).fold(0, usize::saturating_add)
}

/// `k` distinct mask plans. Each draws its mask count uniformly from
/// `1..=3` (capped by the number of targets) and its positions without
/// replacement. When at most `k` distinct plans exist, all of them are
/// returned.
pub fn make_mask_plans(sentence_id: &str, targets: &[usize], k: usize, seed: u64) -> Vec<MaskPlan> {
    let targets: Vec<usize> = targets.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if targets.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut rng = rng_for(seed, "mask-plans", &[sentence_id.as_bytes()]);
    let plan = |variant, positions| MaskPlan { sentence_id: sentence_id.to_string(), variant, positions };
    if plan_space(targets.len()) <= k {
        return all_position_sets(&targets).into_iter().enumerate().map(|(v, p)| plan(v, p)).collect();
    }
    let mut seen = BTreeSet::new();
    let mut plans = Vec::with_capacity(k);
    let mut attempts = 0;
    while plans.len() < k && attempts < 50 * k {
        attempts += 1;
        let m = rng.gen_range(1..=MAX_MASKS).min(targets.len());
        let mut positions: Vec<usize> = index::sample(&mut rng, targets.len(), m).into_iter().map(|i| targets[i]).collect();
        positions.sort_unstable();
        if seen.insert(positions.clone()) {
            plans.push(plan(plans.len(), positions));
        }
    }
    if plans.len() < k {
        let mut rest: Vec<Vec<usize>> = all_position_sets(&targets).into_iter().filter(|p| !seen.contains(p)).collect();
        rest.shuffle(&mut rng);
        for positions in rest.into_iter().take(k - plans.len()) {
            plans.push(plan(plans.len(), positions));
        }
    }
    plans
}

fn all_position_sets(targets: &[usize]) -> Vec<Vec<usize>> {
    let n = targets.len();
    let mut out: Vec<Vec<usize>> = targets.iter().map(|&t| vec![t]).collect();
    for a in 0..n {
        for b in a + 1..n {
            out.push(vec![targets[a], targets[b]]);
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                out.push(vec![targets[a], targets[b], targets[c]]);
            }
        }
    }
    out
}

/// One substituted position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub position: usize,
    pub original: String,
    pub replacement: String,
    /// 0-indexed rank of the replacement in the provider response.
    pub rank: usize,
    /// True when the window had no usable candidate and a higher-ranked one was taken.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedVariant {
    pub plan: MaskPlan,
    pub sentence: Sentence,
    pub fills: Vec<Fill>,
    /// Masked positions for which the provider offered no usable candidate.
    pub unfilled: Vec<usize>,
}

/// Whole-word candidate different from the original token.
fn usable(candidate: &str, original: &str) -> bool {
    candidate.chars().next().is_some_and(char::is_alphanumeric)
        && !candidate.contains(char::is_whitespace)
        && candidate != MASK_TOKEN
        && candidate.to_lowercase() != original.to_lowercase()
}

/// Fills the plan's positions from left to right; each request carries the
/// fills already made. A uniformly chosen usable candidate from ranks
/// `[lo, hi)` is taken, else the usable candidate ranked closest above `lo`.
pub fn decode_variant(
    sentence: &Sentence,
    plan: &MaskPlan,
    provider: &dyn MlmProvider,
    config: &ContextAttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DecodedVariant, ProviderError> {
    let mut texts = sentence.texts();
    let mut fills = Vec::with_capacity(plan.positions.len());
    let mut unfilled = Vec::new();
    for &position in &plan.positions {
        let original = sentence.tokens()[position].text.clone();
        let request = FillRequest::masked(&texts, position, config.hi);
        let candidates = provider.fill(&request)?;
        validate_response(&request, &candidates)?;
        let window: Vec<usize> = (config.lo..config.hi.min(candidates.len()))
            .filter(|&r| usable(&candidates[r].token, &original))
            .collect();
        let choice = if window.is_empty() {
            (0..config.lo.min(candidates.len())).rev().find(|&r| usable(&candidates[r].token, &original)).map(|r| (r, true))
        } else {
            Some((window[rng.gen_range(0..window.len())], false))
        };
        match choice {
            Some((rank, fallback)) => {
                if fallback {
                    log::info!("sentence {}: rank window empty at position {position}, fell back to rank {rank}", sentence.id());
                }
                let replacement = candidates[rank].token.clone();
                texts[position] = replacement.clone();
                fills.push(Fill { position, original, replacement, rank, fallback });
            }
            None => unfilled.push(position),
        }
    }
    Ok(DecodedVariant { plan: plan.clone(), sentence: sentence.with_texts(texts), fills, unfilled })
}

/// Index of the variant with the lowest scorer key; ties go to the
/// lexicographically smallest serialized sentence.
pub fn select_adversarial_variant(variants: &[Sentence], scorer: &dyn VictimScorer) -> Option<usize> {
    variants
        .iter()
        .enumerate()
        .map(|(i, s)| (scorer.score(s), write_sentence(s), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .map(|(_, _, i)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextStatus {
    Attacked,
    /// No content word outside the gold entities.
    NoTargets,
    /// Every variant came back identical to the input.
    NoChange,
    ProviderError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub sentence_id: String,
    pub status: ContextStatus,
    pub targets: Vec<usize>,
    pub variants: usize,
    #[serde(default)]
    pub selected_variant: Option<usize>,
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub replacements: Vec<Fill>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextAttackStats {
    pub sentences: usize,
    pub attacked_sentences: usize,
    pub attacked_sentence_pct: f64,
    pub replaced_words: usize,
    pub fallback_fills: usize,
    pub no_targets: usize,
    pub no_change: usize,
    pub provider_errors: usize,
    pub scorer: String,
    pub provider: String,
}

#[derive(Debug, Clone)]
pub struct ContextAttackOutput {
    pub corpus: Corpus,
    pub records: Vec<ContextRecord>,
    pub stats: ContextAttackStats,
}

/// Attacks every sentence independently; output order follows the input.
pub fn attack_context(
    corpus: &Corpus,
    provider: &dyn MlmProvider,
    scorer: &dyn VictimScorer,
    config: &ContextAttackConfig,
) -> Result<ContextAttackOutput, ContextAttackError> {
    config.validate()?;
    if config.pos_source == PosSource::InputColumn && !corpus.has_pos() && !corpus.is_empty() {
        return Err(ContextAttackError::Config("POS source is the input column but the corpus has no POS column".into()));
    }
    let tagger = LexiconTagger::builtin();
    let results: Vec<(Sentence, ContextRecord)> = corpus
        .sentences()
        .par_iter()
        .map(|sentence| attack_sentence(sentence, provider, scorer, config, &tagger))
        .collect::<Result<_, _>>()?;

    let mut sentences = Vec::with_capacity(results.len());
    let mut records = Vec::with_capacity(results.len());
    for (s, r) in results {
        sentences.push(s);
        records.push(r);
    }
    let count = |status| records.iter().filter(|r| r.status == status).count();
    let attacked = count(ContextStatus::Attacked);
    let stats = ContextAttackStats {
        sentences: records.len(),
        attacked_sentences: attacked,
        attacked_sentence_pct: percent(attacked, records.len()),
        replaced_words: records.iter().map(|r| r.replacements.len()).sum(),
        fallback_fills: records.iter().flat_map(|r| &r.replacements).filter(|f| f.fallback).count(),
        no_targets: count(ContextStatus::NoTargets),
        no_change: count(ContextStatus::NoChange),
        provider_errors: count(ContextStatus::ProviderError),
        scorer: scorer.name().to_string(),
        provider: provider.name(),
    };
    let corpus = Corpus::new(corpus.split_name(), sentences).expect("ids are unchanged");
    Ok(ContextAttackOutput { corpus, records, stats })
}

fn attack_sentence(
    sentence: &Sentence,
    provider: &dyn MlmProvider,
    scorer: &dyn VictimScorer,
    config: &ContextAttackConfig,
    tagger: &LexiconTagger,
) -> Result<(Sentence, ContextRecord), ContextAttackError> {
    let targets = select_target_tokens(sentence, config.pos_source, tagger)?;
    let mut record = ContextRecord {
        sentence_id: sentence.id().to_string(),
        status: ContextStatus::NoTargets,
        targets: targets.clone(),
        variants: 0,
        selected_variant: None,
        score: None,
        replacements: Vec::new(),
        error: None,
    };
    let plans = make_mask_plans(sentence.id(), &targets, config.variants, config.seed);
    if plans.is_empty() {
        return Ok((sentence.clone(), record));
    }
    record.variants = plans.len();
    let mut decoded = Vec::with_capacity(plans.len());
    for plan in &plans {
        let mut rng = rng_for(config.seed, "mask-fill", &[sentence.id().as_bytes(), &(plan.variant as u64).to_le_bytes()]);
        match decode_variant(sentence, plan, provider, config, &mut rng) {
            Ok(v) => decoded.push(v),
            Err(e) => {
                log::warn!("sentence {}: {e}", sentence.id());
                record.status = ContextStatus::ProviderError;
                record.error = Some(e.to_string());
                return Ok((sentence.clone(), record));
            }
        }
    }
    decoded.retain(|v| !v.fills.is_empty());
    let candidates: Vec<Sentence> = decoded.iter().map(|v| v.sentence.clone()).collect();
    let Some(best) = select_adversarial_variant(&candidates, scorer) else {
        record.status = ContextStatus::NoChange;
        return Ok((sentence.clone(), record));
    };
    let chosen = decoded.swap_remove(best);
    let score = scorer.score(&chosen.sentence);
    record.status = ContextStatus::Attacked;
    record.selected_variant = Some(chosen.plan.variant);
    record.score = score.is_finite().then_some(score);
    record.replacements = chosen.fills;
    Ok((chosen.sentence, record))
}

/// Context records as line-delimited JSON.
pub fn records_to_jsonl(records: &[ContextRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}
