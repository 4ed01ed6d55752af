use std::path::PathBuf;
use std::time::Duration;

use nerstress::context_attack::parse_word_list;
use nerstress::wikidict::{
    build_dictionary, BuildOptions, CurationRules, KbClient, KbConfig, MiddleNames, NamePartsTable, TrainVocab,
};

use super::{parse_setting, resolved, vocab_options};
use crate::config::{DictionarySettings, KbSettings, Settings};
use crate::error::{CliError, CliResult};
use crate::run::{to_json_pretty, write_stdout, Run};

pub const DICTIONARY_FILE: &str = "dictionary.json";
pub const LINKS_FILE: &str = "links.jsonl";
pub const STATS_FILE: &str = "dict_stats.json";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Gold corpus whose entities are linked and expanded ("-" for stdin).
    #[arg(long)]
    corpus: PathBuf,
    /// Training corpus; replacements fully covered by its entity words are dropped.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Curation rules JSON {allow_classes, deny_classes, deny_entities, per_class_limit}.
    #[arg(long)]
    rules: Option<String>,
    /// Surfaces the victim model mispredicts, one per line; replaces the
    /// training-vocabulary filter.
    #[arg(long)]
    victim_errors: Option<PathBuf>,
    /// Person-name parts JSON {first, middle, last}; defaults to the bundled table.
    #[arg(long)]
    names: Option<PathBuf>,
    /// Person names to generate (default: five per person entity).
    #[arg(long)]
    person_names: Option<usize>,
    /// Middle names in generated person names: never, random or always.
    #[arg(long)]
    middle_names: Option<String>,
    /// Knowledge-base response cache directory.
    #[arg(long)]
    cache_dir: Option<String>,
    /// Directory for the dictionary, entity links, statistics and manifest.
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn run(args: Args, base: Settings, seed_from_flag: bool) -> CliResult<()> {
    let flags = Settings {
        kb: KbSettings { cache_dir: args.cache_dir.clone(), ..Default::default() },
        dictionary: DictionarySettings {
            rules: args.rules.clone(),
            person_name_count: args.person_names,
            middle_names: args.middle_names.clone(),
            ..Default::default()
        },
        ..Default::default()
    };
    let mut run = Run::new("build-dict", base.layer(flags), seed_from_flag, Some(args.out_dir.clone()));
    let seed = run.seed();
    let settings = run.settings.clone();

    let corpus = run.read_corpus("corpus", &args.corpus)?;
    let rules = match &settings.dictionary.rules {
        Some(path) => CurationRules::from_json(&run.read_input("rules", path.as_ref())?)?,
        None => CurationRules::default(),
    };
    let names = match &args.names {
        Some(path) => NamePartsTable::from_json(&run.read_input("names", path)?)?,
        None => NamePartsTable::builtin(),
    };
    let vocab = vocab_options(&settings);
    let train_vocab = match &args.train {
        Some(path) => TrainVocab::from_corpus(&run.read_corpus("train", path)?, &vocab),
        None => {
            log::warn!("no --train corpus; the out-of-distribution filter keeps every candidate");
            TrainVocab::new(Vec::new(), vocab.case_sensitive)
        }
    };
    let victim_errors = match &args.victim_errors {
        Some(path) => Some(parse_word_list(&run.read_input("victim_errors", path)?)),
        None => None,
    };
    let middle_names: MiddleNames = parse_setting("middle_names", &settings.dictionary.middle_names)?;

    let kb_config = kb_config(&settings)?;
    let options = BuildOptions {
        train_vocab,
        victim_errors,
        person_types: resolved(&settings.dictionary.person_types),
        person_name_count: settings.dictionary.person_name_count,
        middle_names,
        fetch_cap: resolved(&settings.dictionary.fetch_cap),
        source: kb_config.api_endpoint.clone(),
        built_at: None,
    };
    let client = KbClient::new(kb_config)?;
    let build = build_dictionary(&corpus, &client, &rules, &names, seed, &options)?;

    run.write_output(DICTIONARY_FILE, &build.dictionary.to_json())?;
    run.write_output(LINKS_FILE, &build.links.to_jsonl())?;
    run.write_output(STATS_FILE, &to_json_pretty(&build.stats))?;
    write_stdout(&build.stats.render_table())?;
    run.finish()
}

pub(crate) fn kb_config(settings: &Settings) -> CliResult<KbConfig> {
    let mut config = KbConfig::from_env();
    let kb = &settings.kb;
    if let Some(v) = &kb.api_endpoint {
        config.api_endpoint = v.clone();
    }
    if let Some(v) = &kb.sparql_endpoint {
        config.sparql_endpoint = v.clone();
    }
    config.cache_dir = kb.cache_dir.as_ref().map(PathBuf::from);
    config.offline = resolved(&settings.offline);
    config.timeout = Duration::from_secs(resolved(&kb.timeout_secs));
    config.min_interval = Duration::from_millis(resolved(&kb.min_interval_ms));
    config.language = resolved(&kb.language);
    config.search_limit = resolved(&kb.search_limit);
    if config.offline && config.cache_dir.is_none() {
        return Err(CliError::usage("--offline needs a response cache (--cache-dir or kb.cache_dir)"));
    }
    Ok(config)
}
