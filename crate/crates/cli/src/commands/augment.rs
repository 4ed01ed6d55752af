use std::path::PathBuf;

use nerstress::augment::{augment, edits_to_jsonl, mix, AugmentMethod, MixMode};
use nerstress::corpus::write_conll;

use super::{parse_setting, resolved};
use crate::config::{AugmentSettings, Settings};
use crate::error::{CliError, CliResult};
use crate::run::{write_stdout, Run};

pub const CORPUS_FILE: &str = "augmented.conll";
pub const EDITS_FILE: &str = "edits.jsonl";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// entity_switching, random_masking or mixing_up.
    #[arg(long)]
    method: AugmentMethod,
    /// Corpus to augment ("-" for stdin).
    #[arg(short, long, default_value = "-")]
    input: PathBuf,
    /// Directory for the augmented corpus, edit log and manifest; without it
    /// the corpus goes to stdout.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// supplement (append augmented copies) or replace (swap them in).
    #[arg(long)]
    mix: Option<String>,
    /// Share of changed sentences used, in [0, 1].
    #[arg(long)]
    ratio: Option<f64>,
}

pub fn run(args: Args, base: Settings, seed_from_flag: bool) -> CliResult<()> {
    let flags = Settings { augment: AugmentSettings { mix: args.mix.clone(), ratio: args.ratio }, ..Default::default() };
    let mut run = Run::new(format!("augment --method {}", args.method.as_str()), base.layer(flags), seed_from_flag, args.out_dir.clone());
    let seed = run.seed();
    let settings = run.settings.clone();
    let mode: MixMode = parse_setting("mix", &settings.augment.mix)?;
    let ratio = resolved(&settings.augment.ratio);

    let corpus = run.read_corpus("input", &args.input)?;
    let output = augment(&corpus, args.method, seed);
    let combined = mix(&corpus, &output.corpus, mode, ratio, seed).map_err(CliError::usage)?;
    eprintln!(
        "{}: {} edits, {} sentences in, {} out",
        args.method.as_str(),
        output.edits.len(),
        corpus.len(),
        combined.len()
    );

    let text = write_conll(&combined);
    if run.out_dir().is_some() {
        run.write_output(CORPUS_FILE, &text)?;
        run.write_output(EDITS_FILE, &edits_to_jsonl(&output.edits))?;
    } else {
        write_stdout(&text)?;
    }
    run.finish()
}
