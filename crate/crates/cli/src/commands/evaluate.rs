use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use nerstress::corpus::Corpus;
use nerstress::eval::{
    attack_curve, confusion, confusion_difference, confusion_with_labels, curve_to_csv, error_breakdown, error_set,
    error_set_jaccard, format_drop, relative_drop, render_report, span_prf, BucketFractions, ConfusionMatrix,
    CurvePoint, ErrorBreakdown, EvalReport, PredictionSet, NONE_LABEL,
};
use serde::Serialize;

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::run::{to_json_pretty, write_stdout, Run};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const CURVE_CSV: &str = "curve.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Gold corpus.
    #[arg(long)]
    gold: PathBuf,
    /// Predictions: column file with predicted tags last, or JSONL
    /// {sentence_id, spans: [{start, end, type}]}.
    #[arg(long)]
    pred: PathBuf,
    /// Gold corpus of a second run (typically attacked), compared against the first.
    #[arg(long, requires = "pred_attacked")]
    gold_attacked: Option<PathBuf>,
    /// Predictions for the second run.
    #[arg(long, requires = "gold_attacked")]
    pred_attacked: Option<PathBuf>,
    /// One point of an attack curve; repeat per coverage level.
    #[arg(long, num_args = 3, value_names = ["COVERAGE", "GOLD", "PRED"], action = clap::ArgAction::Append)]
    curve: Vec<String>,
    /// Format of the report on stdout.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Directory for text, JSON and CSV reports plus the manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct RunAnalysis {
    scores: EvalReport,
    breakdown: ErrorBreakdown,
    breakdown_fractions: BucketFractions,
    confusion: ConfusionMatrix,
}

#[derive(Debug, Serialize)]
struct Comparison {
    f1_drop: Option<f64>,
    f1_drop_display: String,
    confusion_difference: ConfusionMatrix,
    largest_increase: Option<(String, String, i64)>,
    error_jaccard: f64,
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    original: RunAnalysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    attacked: Option<RunAnalysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    curve: Option<Vec<CurvePoint>>,
}

pub fn run(args: Args, base: Settings) -> CliResult<()> {
    let mut run = Run::new("evaluate", base, false, args.out_dir.clone());
    let gold = run.read_corpus("gold", &args.gold)?;
    let pred = read_predictions(&mut run, "pred", &args.pred, &gold)?;

    let second = match (&args.gold_attacked, &args.pred_attacked) {
        (Some(g), Some(p)) => {
            let gold_b = run.read_corpus("gold_attacked", g)?;
            let pred_b = read_predictions(&mut run, "pred_attacked", p, &gold_b)?;
            Some((gold_b, pred_b))
        }
        _ => None,
    };

    let mut labels: BTreeSet<String> = confusion(&gold, &pred)?.labels.into_iter().collect();
    if let Some((g, p)) = &second {
        labels.extend(confusion(g, p)?.labels);
    }
    labels.remove(NONE_LABEL);
    let labels: Vec<String> = labels.into_iter().chain([NONE_LABEL.to_string()]).collect();

    let original = analyse(&gold, &pred, &labels)?;
    let (attacked, comparison) = match &second {
        Some((g, p)) => {
            let attacked = analyse(g, p, &labels)?;
            let difference = confusion_difference(&attacked.confusion, &original.confusion)?;
            let drop = relative_drop(original.scores.micro.f1, attacked.scores.micro.f1);
            let comparison = Comparison {
                f1_drop: drop,
                f1_drop_display: format_drop(drop),
                largest_increase: difference.largest_off_diagonal().map(|(r, c, v)| (r.to_string(), c.to_string(), v)),
                confusion_difference: difference,
                error_jaccard: error_set_jaccard(&error_set(&gold, &pred)?, &error_set(g, p)?),
            };
            (Some(attacked), Some(comparison))
        }
        None => (None, None),
    };

    let curve = if args.curve.is_empty() {
        None
    } else {
        let mut golds = Vec::new();
        let mut preds = Vec::new();
        for chunk in args.curve.chunks(3) {
            let coverage: f64 =
                chunk[0].parse().map_err(|_| CliError::usage(format!("--curve coverage {:?} is not a number", chunk[0])))?;
            let role = format!("curve_{}", chunk[0]);
            let g = run.read_corpus(&format!("{role}_gold"), Path::new(&chunk[1]))?;
            let p = read_predictions(&mut run, &format!("{role}_pred"), Path::new(&chunk[2]), &g)?;
            golds.push((coverage, g));
            preds.push((coverage, p));
        }
        Some(attack_curve(&golds, &preds)?)
    };

    let report = EvaluationReport { original, attacked, comparison, curve };
    let text = render(&report);
    let json = to_json_pretty(&report);
    write_stdout(match args.format {
        Format::Text => &text,
        Format::Json => &json,
    })?;
    run.write_output(REPORT_TEXT, &text)?;
    run.write_output(REPORT_JSON, &json)?;
    if let Some(curve) = &report.curve {
        run.write_output(CURVE_CSV, &curve_to_csv(curve))?;
    }
    run.finish()
}

fn read_predictions(run: &mut Run, role: &str, path: &Path, gold: &Corpus) -> CliResult<PredictionSet> {
    let text = run.read_input(role, path)?;
    let parsed = if text.trim_start().starts_with('{') {
        PredictionSet::from_jsonl(&text)
    } else {
        PredictionSet::from_columns(&text, gold)
    };
    let set = parsed.map_err(|e| CliError::input(format!("{role} {}: {e}", path.display())))?;
    set.check_against(gold).map_err(|e| CliError::input(format!("{role} {}: {e}", path.display())))?;
    Ok(set)
}

fn analyse(gold: &Corpus, pred: &PredictionSet, labels: &[String]) -> CliResult<RunAnalysis> {
    let breakdown = error_breakdown(gold, pred)?;
    Ok(RunAnalysis {
        scores: span_prf(gold, pred)?,
        breakdown_fractions: breakdown.fractions(),
        breakdown,
        confusion: confusion_with_labels(gold, pred, labels)?,
    })
}

fn render_analysis(out: &mut String, title: &str, analysis: &RunAnalysis) {
    let _ = writeln!(out, "== {title}: span scores (%)");
    out.push_str(&render_report(&analysis.scores));
    let _ = writeln!(out, "\n== {title}: error breakdown over gold entities");
    out.push_str(&analysis.breakdown.render());
    let _ = writeln!(out, "\n== {title}: confusion (gold rows, paired prediction columns)");
    out.push_str(&analysis.confusion.render());
}

fn render(report: &EvaluationReport) -> String {
    let mut out = String::new();
    render_analysis(&mut out, "original", &report.original);
    if let (Some(attacked), Some(cmp)) = (&report.attacked, &report.comparison) {
        out.push('\n');
        render_analysis(&mut out, "attacked", attacked);
        let _ = writeln!(out, "\n== comparison");
        let _ = writeln!(
            out,
            "f1: {:.2} -> {:.2} (drop {})",
            100.0 * report.original.scores.micro.f1,
            100.0 * attacked.scores.micro.f1,
            cmp.f1_drop_display
        );
        let _ = writeln!(out, "error-set jaccard: {:.4}", cmp.error_jaccard);
        if let Some((r, c, v)) = &cmp.largest_increase {
            let _ = writeln!(out, "largest off-diagonal increase: {r} -> {c} ({v:+})");
        }
        let _ = writeln!(out, "\n== confusion difference (attacked minus original)");
        out.push_str(&cmp.confusion_difference.render());
    }
    if let Some(curve) = &report.curve {
        let _ = writeln!(out, "\n== attack curve");
        let _ = writeln!(out, "{:>8} {:>8}", "coverage", "f1");
        for p in curve {
            let _ = writeln!(out, "{:>8.2} {:>8.2}", p.coverage, 100.0 * p.f1);
        }
    }
    out
}
