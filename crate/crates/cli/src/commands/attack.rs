use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::ValueEnum;
use nerstress::context_attack::{
    attack_context, ContextAttackConfig, ContextAttackStats, HttpMlmProvider, MlmProvider, PosSource,
    PredictionLookupScorer, StubProvider, UnigramOverlapScorer, VictimScorer, MLM_ENDPOINT_ENV,
};
use nerstress::corpus::{write_conll, Corpus};
use nerstress::entity_attack::{attack_entities, attack_stats, EntityAttackConfig, EntityAttackStats};
use nerstress::eval::PredictionSet;
use nerstress::wikidict::{AdversarialDictionary, LinkMap};
use serde::Serialize;

use super::build_dict::LINKS_FILE;
use super::{parse_setting, resolved};
use crate::config::{ContextSettings, EntitySettings, Settings};
use crate::error::{CliError, CliResult};
use crate::run::{to_json_pretty, write_stdout, Run};

pub const CORPUS_FILE: &str = "attacked.conll";
pub const ENTITY_LOG_FILE: &str = "entity_log.jsonl";
pub const CONTEXT_LOG_FILE: &str = "context_log.jsonl";
pub const STATS_FILE: &str = "attack_stats.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Entity,
    Context,
    /// Entity attack, then context attack on its output.
    Full,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Corpus to attack ("-" for stdin).
    #[arg(short, long, default_value = "-")]
    input: PathBuf,
    /// Directory for the attacked corpus, logs, statistics and manifest;
    /// without it the attacked corpus goes to stdout.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Adversarial dictionary (entity and full modes).
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Entity links written by build-dict (default: next to the dictionary).
    #[arg(long)]
    links: Option<PathBuf>,
    /// Fraction of eligible entities to replace.
    #[arg(long)]
    coverage: Option<f64>,
    /// Victim predictions keyed by sentence digest, for choosing the
    /// context variant the victim handles worst.
    #[arg(long)]
    victim_predictions: Option<PathBuf>,
    /// Training corpus for the unigram-overlap variant scorer, used when no
    /// victim predictions are given.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Lowest accepted candidate rank (0-based, inclusive).
    #[arg(long)]
    lo: Option<usize>,
    /// End of the candidate rank window (exclusive).
    #[arg(long)]
    hi: Option<usize>,
    /// Masked variants sampled per sentence.
    #[arg(long)]
    variants: Option<usize>,
    /// Source of POS tags: input-column or builtin-lexicon.
    #[arg(long)]
    pos_source: Option<String>,
    /// Base URL of a masked-LM fill service.
    #[arg(long)]
    provider_url: Option<String>,
}

#[derive(Debug, Serialize)]
struct AttackReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    entity: Option<EntityAttackStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<ContextAttackStats>,
}

pub fn run(args: Args, base: Settings, seed_from_flag: bool) -> CliResult<()> {
    let flags = Settings {
        entity: EntitySettings { coverage: args.coverage, ..Default::default() },
        context: ContextSettings {
            lo: args.lo,
            hi: args.hi,
            variants: args.variants,
            pos_source: args.pos_source.clone(),
            provider_url: args.provider_url.clone(),
            ..Default::default()
        },
        ..Default::default()
    };
    let mut run = Run::new(format!("attack --mode {}", mode_name(args.mode)), base.layer(flags), seed_from_flag, args.out_dir.clone());
    let seed = run.seed();
    let settings = run.settings.clone();
    let corpus = run.read_corpus("input", &args.input)?;
    let mut report = AttackReport { entity: None, context: None };

    let mut current = corpus;
    if args.mode != Mode::Context {
        let dict_path = args.dict.as_deref().ok_or_else(|| CliError::usage("entity attacks need --dict"))?;
        let dictionary = AdversarialDictionary::from_json(&run.read_input("dictionary", dict_path)?)?;
        let links_path = args.links.clone().unwrap_or_else(|| sibling(dict_path, LINKS_FILE));
        let links = LinkMap::from_jsonl(&run.read_input("links", &links_path)?)?;
        let mut config = EntityAttackConfig::new(resolved(&settings.entity.coverage), seed)?;
        config.forbid_identity = !resolved(&settings.entity.allow_identity);
        let output = attack_entities(&current, &dictionary, &links, &config)?;
        let stats = attack_stats(&output.records, &current);
        eprintln!(
            "entity attack: {} of {} entities replaced ({:.2}%), {} of {} sentences attacked",
            stats.by_status.get(&nerstress::entity_attack::AttackStatus::Replaced).copied().unwrap_or(0),
            stats.entities,
            stats.attacked_entity_pct,
            stats.attacked_sentences,
            stats.sentences
        );
        run.write_output(ENTITY_LOG_FILE, &nerstress::entity_attack::records_to_jsonl(&output.records))?;
        report.entity = Some(stats);
        current = output.corpus;
    }

    let mut provider_failures = 0;
    if args.mode != Mode::Entity {
        let provider = provider(&mut run, &settings)?;
        let scorer = scorer(&mut run, &args)?;
        let config = ContextAttackConfig {
            lo: resolved(&settings.context.lo),
            hi: resolved(&settings.context.hi),
            variants: resolved(&settings.context.variants),
            seed,
            pos_source: parse_setting::<PosSource>("pos_source", &settings.context.pos_source)?,
        };
        let output = attack_context(&current, provider.as_ref(), scorer.as_ref(), &config)?;
        let stats = output.stats.clone();
        eprintln!(
            "context attack: {} of {} sentences attacked, {} words replaced ({} by fallback), scorer {}",
            stats.attacked_sentences, stats.sentences, stats.replaced_words, stats.fallback_fills, stats.scorer
        );
        if stats.scorer == "unigram-overlap" {
            eprintln!("note: unigram-overlap ranks variants by training-data overlap; it is a stand-in for a victim model");
        }
        provider_failures = stats.provider_errors;
        run.write_output(CONTEXT_LOG_FILE, &nerstress::context_attack::records_to_jsonl(&output.records))?;
        report.context = Some(stats);
        current = output.corpus;
    }

    let text = write_conll(&current);
    if run.out_dir().is_some() {
        run.write_output(CORPUS_FILE, &text)?;
        run.write_output(STATS_FILE, &to_json_pretty(&report))?;
    } else {
        write_stdout(&text)?;
    }
    run.finish()?;
    if provider_failures > 0 {
        return Err(CliError::Service(format!(
            "masked-LM provider failed on {provider_failures} sentences; they were left unchanged"
        )));
    }
    Ok(())
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Entity => "entity",
        Mode::Context => "context",
        Mode::Full => "full",
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from(name), |dir| dir.join(name))
}

/// The stub when requested, otherwise the HTTP service after a health check.
fn provider(run: &mut Run, settings: &Settings) -> CliResult<Box<dyn MlmProvider>> {
    if let Some(stub) = &settings.stub_provider {
        if stub == "builtin" {
            return Ok(Box::new(StubProvider::builtin()));
        }
        let text = run.read_input("stub_lexicon", Path::new(stub))?;
        let provider = StubProvider::from_lexicon(&text, format!("stub:{stub}"))
            .map_err(|e| CliError::input(format!("stub lexicon {stub}: {e}")))?;
        return Ok(Box::new(provider));
    }
    let url = settings
        .context
        .provider_url
        .clone()
        .or_else(|| std::env::var(MLM_ENDPOINT_ENV).ok())
        .ok_or_else(|| {
            CliError::usage(format!("context attacks need --stub-provider, --provider-url or {MLM_ENDPOINT_ENV}"))
        })?;
    let provider = HttpMlmProvider::new(&url, Duration::from_secs(resolved(&settings.context.timeout_secs)))?;
    let health = provider.health()?;
    log::info!("masked-LM service at {url}: {} ({})", health.status, health.model.as_deref().unwrap_or("unknown model"));
    Ok(Box::new(provider))
}

fn scorer(run: &mut Run, args: &Args) -> CliResult<Box<dyn VictimScorer>> {
    if let Some(path) = &args.victim_predictions {
        let predictions = PredictionSet::from_jsonl(&run.read_input("victim_predictions", path)?)?;
        let by_digest: HashMap<String, Vec<_>> = predictions.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        return Ok(Box::new(PredictionLookupScorer::new(by_digest)));
    }
    if let Some(path) = &args.train {
        let train: Corpus = run.read_corpus("train", path)?;
        return Ok(Box::new(UnigramOverlapScorer::from_corpus(&train)));
    }
    Err(CliError::usage("context attacks need --victim-predictions or --train to rank variants"))
}
