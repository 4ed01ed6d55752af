use std::fmt::Write as _;
use std::path::PathBuf;

use nerstress::corpus::{entity_vocab_stats_with, EntityVocabStats, TypeVocab};
use nerstress::entity_attack::{attack_stats, AttackRecord, EntityAttackStats};
use serde::Serialize;

use super::evaluate::Format;
use super::vocab_options;
use crate::config::{Settings, VocabSettings};
use crate::error::{CliError, CliResult};
use crate::run::{to_json_pretty, write_stdout, Run};

pub const STATS_JSON: &str = "stats.json";
pub const STATS_TEXT: &str = "stats.txt";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Training split.
    #[arg(long)]
    train: PathBuf,
    /// Evaluation split.
    #[arg(long)]
    eval: PathBuf,
    /// Entity-attack log of the evaluation split, for attacked-entity rates.
    #[arg(long)]
    entity_log: Option<PathBuf>,
    /// Fold case when comparing entity words.
    #[arg(long)]
    case_insensitive: bool,
    /// Ignore entity tokens without any letter or digit.
    #[arg(long)]
    exclude_punctuation: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Directory for text and JSON statistics plus the manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct StatsReport {
    vocabulary: EntityVocabStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    attack: Option<EntityAttackStats>,
}

pub fn run(args: Args, base: Settings) -> CliResult<()> {
    let flags = Settings {
        vocab: VocabSettings {
            case_sensitive: args.case_insensitive.then_some(false),
            include_punctuation: args.exclude_punctuation.then_some(false),
        },
        ..Default::default()
    };
    let mut run = Run::new("stats", base.layer(flags), false, args.out_dir.clone());
    let options = vocab_options(&run.settings);
    let train = run.read_corpus("train", &args.train)?;
    let eval = run.read_corpus("eval", &args.eval)?;
    let attack = match &args.entity_log {
        Some(path) => {
            let text = run.read_input("entity_log", path)?;
            let records = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| {
                    serde_json::from_str::<AttackRecord>(l)
                        .map_err(|e| CliError::input(format!("entity log line {}: {e}", i + 1)))
                })
                .collect::<CliResult<Vec<_>>>()?;
            Some(attack_stats(&records, &eval))
        }
        None => None,
    };
    let report = StatsReport { vocabulary: entity_vocab_stats_with(&train, &eval, &options), attack };
    let text = render(&report);
    let json = to_json_pretty(&report);
    write_stdout(match args.format {
        Format::Text => &text,
        Format::Json => &json,
    })?;
    run.write_output(STATS_TEXT, &text)?;
    run.write_output(STATS_JSON, &json)?;
    run.finish()
}

fn render(report: &StatsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>11} {:>10} {:>6} {:>8}", "type", "train_words", "eval_words", "seen", "seen_%");
    let row = |out: &mut String, r: &TypeVocab| {
        let _ = writeln!(
            out,
            "{:<12} {:>11} {:>10} {:>6} {:>8.2}",
            r.etype,
            r.train_words,
            r.eval_words,
            r.seen_words,
            100.0 * r.seen_ratio
        );
    };
    for r in &report.vocabulary.per_type {
        row(&mut out, r);
    }
    row(&mut out, &report.vocabulary.all_types);
    if let Some(a) = &report.attack {
        let _ = writeln!(out);
        let _ = writeln!(out, "entities: {}", a.entities);
        for (status, n) in &a.by_status {
            let name = serde_json::to_value(status).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            let _ = writeln!(out, "  {name}: {n}");
        }
        let _ = writeln!(out, "attacked entities: {:.2}%", a.attacked_entity_pct);
        let _ = writeln!(out, "attacked sentences: {} of {} ({:.2}%)", a.attacked_sentences, a.sentences, a.attacked_sentence_pct);
    }
    out
}
