//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion's outcome differs from the recorded expectation.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use nerstress::augment::{augment, AugmentEdit, AugmentMethod};
use nerstress::context_attack::{
    attack_context, builtin_stopwords, decode_variant, make_mask_plans, select_target_tokens, ContextAttackConfig,
    LexiconTagger, PosSource, StubProvider, UnigramOverlapScorer,
};
use nerstress::corpus::{
    is_valid_sequence, parse_conll, repair_orphans, write_conll, Corpus, ParseMode, Pos, Sentence, Tag, Token, TypedSpan,
};
use nerstress::entity_attack::{attack_entities, AttackStatus, EntityAttackConfig};
use nerstress::eval::{
    confusion, confusion_difference, error_breakdown, f1_score, jaccard, relative_drop, span_prf, token_difference,
    PredictionSet,
};
use nerstress::seed::rng_for;
use nerstress::wikidict::{
    ood_filter, AdversarialDictionary, ClassEntry, DictionaryMeta, FilterSettings, LinkEntry, LinkMap, LinkStatus,
    OodMode, TrainVocab, DICTIONARY_VERSION,
};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

const METRIC_CASES: usize = 300;
const METRIC_TIME_LIMIT: Duration = Duration::from_secs(10);
const F1_TOLERANCE: f64 = 0.05;
const BIO_CORPORA: usize = 1000;
const MASKING_MIN_TOKENS: usize = 10_000;
const FRACTION_TOLERANCE: f64 = 1e-9;
const SUITE_TIME_LIMIT: Duration = Duration::from_secs(120);
const COVERAGE_GRID: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
const RANK_LO: usize = 100;
const RANK_HI: usize = 200;

/// Criteria whose faithful implementation is known not to meet the stated
/// target, with the reason.
const EXPECTED_FAILURES: &[(&str, &str)] = &[(
    "reported_formulas",
    "2PR/(P+R) for the printed P=92.9 and R=91.8 is 92.347, 0.053 from the printed 92.4; \
     the printed F1 was computed from unrounded precision and recall",
)];

type Check = Result<String, String>;

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

// ---------------------------------------------------------------- generators

const TYPES: [&str; 4] = ["PERSON", "GPE", "ORG", "LOC"];
const CONTEXT_WORDS: &[&str] = &[
    "the", "a", "of", "in", "city", "river", "visited", "quickly", "old", "market", "sells", "fish", "and", "is", "big",
    "bright", "winter", "engineers", ",", ".", "2024", "walked", "slowly", "green",
];
const NAME_WORDS: &[&str] = &[
    "Paris", "New", "York", "Zürich", "McDonald", "O'Neil", "ACME", "iPhone", "de", "la", "Nile", "Ada", "Lovelace",
    "São", "Paulo", "the", "of", "X-Men", "3M", "Éire", "Straße",
];

fn random_sentence(rng: &mut impl Rng, id: String, max_len: usize, with_pos: bool) -> Sentence {
    let len = rng.gen_range(1..=max_len);
    let mut tokens = Vec::with_capacity(len);
    while tokens.len() < len {
        if rng.gen_bool(0.3) {
            let etype = TYPES[rng.gen_range(0..TYPES.len())];
            let span = rng.gen_range(1..=3).min(len - tokens.len());
            for k in 0..span {
                let tag = if k == 0 { Tag::begin(etype) } else { Tag::inside(etype) };
                tokens.push(Token::new(*NAME_WORDS.choose(rng).unwrap(), tag));
            }
        } else {
            tokens.push(Token::new(*CONTEXT_WORDS.choose(rng).unwrap(), Tag::Outside));
        }
    }
    if with_pos {
        let classes = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv, Pos::Other];
        tokens = tokens.into_iter().map(|t| t.with_pos(*classes.choose(rng).unwrap())).collect();
    }
    Sentence::new(id, tokens).expect("generated sentence is valid")
}

fn random_corpus(rng: &mut impl Rng, sentences: usize, max_len: usize, with_pos: bool) -> Corpus {
    let sentences = (0..sentences).map(|i| random_sentence(rng, format!("s{i}"), max_len, with_pos)).collect();
    Corpus::new("random", sentences).unwrap()
}

/// Gold tags with random per-token rewrites, repaired into a valid sequence.
fn perturbed(rng: &mut impl Rng, gold: &Corpus) -> Corpus {
    let sentences = gold
        .sentences()
        .iter()
        .map(|s| {
            let mut tags = s.tags();
            for tag in &mut tags {
                if rng.gen_bool(0.2) {
                    let etype = TYPES[rng.gen_range(0..TYPES.len())];
                    *tag = match rng.gen_range(0..3) {
                        0 => Tag::Outside,
                        1 => Tag::begin(etype),
                        _ => Tag::inside(etype),
                    };
                }
            }
            repair_orphans(&mut tags);
            let tokens = s.tokens().iter().zip(tags).map(|(t, tag)| Token::new(t.text.clone(), tag)).collect();
            Sentence::new(s.id(), tokens).unwrap()
        })
        .collect();
    Corpus::new("pred", sentences).unwrap()
}

/// Spans decoded independently of the library: a B opens a span, an I of
/// the same type extends it, anything else closes it.
fn brute_spans(corpus: &Corpus) -> BTreeSet<(String, usize, usize, String)> {
    let mut out = BTreeSet::new();
    for s in corpus.sentences() {
        let mut open: Option<(usize, String)> = None;
        let tags = s.tags();
        for i in 0..=tags.len() {
            let tag = tags.get(i);
            let continues = matches!((tag, &open), (Some(Tag::Inside(t)), Some((_, o))) if t == o);
            if !continues {
                if let Some((start, etype)) = open.take() {
                    out.insert((s.id().to_string(), start, i, etype));
                }
                if let Some(Tag::Begin(t)) = tag {
                    open = Some((i, t.clone()));
                }
            }
        }
    }
    out
}

fn type_multiset(corpus: &Corpus) -> BTreeMap<(String, String), usize> {
    let mut counts = BTreeMap::new();
    for s in corpus.sentences() {
        for span in s.spans() {
            *counts.entry((s.id().to_string(), span.etype)).or_insert(0) += 1;
        }
    }
    counts
}

fn dictionary(per_type: &[(&str, &[&str])], person_names: &[&str]) -> AdversarialDictionary {
    let mut types: BTreeMap<String, BTreeMap<String, ClassEntry>> = BTreeMap::new();
    for (etype, surfaces) in per_type {
        types.entry(etype.to_string()).or_default().insert(
            "Q1".into(),
            ClassEntry { label: "class".into(), surfaces: surfaces.iter().map(|s| s.to_string()).collect() },
        );
    }
    AdversarialDictionary {
        version: DICTIONARY_VERSION,
        meta: DictionaryMeta {
            source: String::new(),
            built_at: None,
            seed: 0,
            filter: FilterSettings {
                ood_mode: OodMode::TrainVocab,
                vocab_case_sensitive: true,
                train_vocab_size: 0,
                victim_error_count: None,
                allow_classes: vec![],
                deny_classes: vec![],
                deny_entities: vec![],
                per_class_limit: 500,
                fetch_cap: 2000,
                person_name_count: person_names.len(),
            },
        },
        types,
        person_names: person_names.iter().map(|s| s.to_string()).collect(),
    }
}

fn link_all(corpus: &Corpus) -> LinkMap {
    let mut entries = Vec::new();
    for s in corpus.sentences() {
        for span in s.spans() {
            let person = span.etype == "PERSON";
            entries.push(LinkEntry {
                sentence_id: s.id().to_string(),
                start: span.start,
                end: span.end,
                etype: span.etype.clone(),
                surface: span.surface.clone(),
                status: if person { LinkStatus::Person } else { LinkStatus::Linked },
                qid: (!person).then(|| "Q2".to_string()),
                classes: if person { vec![] } else { vec!["Q1".to_string()] },
            });
        }
    }
    LinkMap::new(entries)
}

fn attack_dictionary() -> AdversarialDictionary {
    dictionary(
        &[
            ("GPE", &["Bari", "Ouagadougou", "Ulan Bator", "Bandar Seri Begawan"]),
            ("ORG", &["Zorblax", "Initech Global Holdings"]),
            ("LOC", &["Danube", "Lake Titicaca"]),
        ],
        &["Gaspard Castellanos", "Vesna Quincy Antonelli", "Naoki Wren"],
    )
}

// ------------------------------------------------------------------ criteria

fn metric_oracle() -> Check {
    let started = Instant::now();
    let mut rng = rng_for(1, "acceptance-metric", &[]);
    for case in 0..METRIC_CASES {
        let sentences = rng.gen_range(1..6);
        let gold = random_corpus(&mut rng, sentences, 12, false);
        let pred_corpus = perturbed(&mut rng, &gold);
        let report = span_prf(&gold, &PredictionSet::from_gold(&pred_corpus)).map_err(|e| e.to_string())?;

        let g = brute_spans(&gold);
        let p = brute_spans(&pred_corpus);
        let matched = g.intersection(&p).count();
        let precision = if p.is_empty() { 0.0 } else { matched as f64 / p.len() as f64 };
        let recall = if g.is_empty() { 0.0 } else { matched as f64 / g.len() as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        let m = &report.micro;
        ensure((m.matched, m.predicted, m.gold) == (matched, p.len(), g.len()), || {
            format!("case {case}: counts {:?} vs oracle {:?}", (m.matched, m.predicted, m.gold), (matched, p.len(), g.len()))
        })?;
        ensure(m.precision == precision && m.recall == recall && (m.f1 - f1).abs() < 1e-12, || {
            format!("case {case}: scores ({}, {}, {}) vs oracle ({precision}, {recall}, {f1})", m.precision, m.recall, m.f1)
        })?;
        for etype in TYPES {
            let gt = g.iter().filter(|s| s.3 == etype).count();
            let pt = p.iter().filter(|s| s.3 == etype).count();
            let mt = g.intersection(&p).filter(|s| s.3 == etype).count();
            let row = report.per_type.get(etype).map(|r| (r.matched, r.predicted, r.gold)).unwrap_or((0, 0, 0));
            ensure(row == (mt, pt, gt), || format!("case {case} {etype}: {row:?} vs oracle {:?}", (mt, pt, gt)))?;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < METRIC_TIME_LIMIT, || format!("took {elapsed:?}"))?;
    Ok(format!("{METRIC_CASES} randomized corpora agree exactly in {elapsed:.2?}"))
}

fn reported_formulas() -> Check {
    let f1 = 100.0 * f1_score(0.929, 0.918);
    let drops = [(92.4, 58.5, "37%"), (84.6, 32.4, "62%")];
    let mut notes = Vec::new();
    for (base, attacked, printed) in drops {
        let drop = relative_drop(base, attacked).ok_or("undefined drop")?;
        let shown = format!("{:.0}%", 100.0 * drop);
        ensure(shown == printed, || format!("drop {base}->{attacked} is {shown}, reported as {printed}"))?;
        notes.push(format!("{base}->{attacked} = {shown}"));
    }
    ensure((f1 - 92.4).abs() <= F1_TOLERANCE, || {
        format!("F1(92.9, 91.8) = {f1:.4}, |{f1:.4} - 92.4| = {:.4} > {F1_TOLERANCE}; drops {}", (f1 - 92.4).abs(), notes.join(", "))
    })?;
    Ok(format!("F1 = {f1:.4}; drops {}", notes.join(", ")))
}

fn bio_safety() -> Check {
    let dict = attack_dictionary();
    let stub = StubProvider::builtin();
    let mut violations = 0usize;
    let mut notes = BTreeMap::new();
    let mut note = |stage: &str, why: String| {
        notes.entry(stage.to_string()).or_insert(why);
    };
    let valid = |c: &Corpus| {
        c.sentences().iter().all(|s| is_valid_sequence(&s.tags()))
            && parse_conll(&write_conll(c), ParseMode::Strict).is_ok_and(|back| back.sentences() == c.sentences())
    };
    for i in 0..BIO_CORPORA {
        let mut rng = rng_for(2, "acceptance-bio", &[&(i as u64).to_le_bytes()]);
        let (sentences, with_pos) = (rng.gen_range(1..4), rng.gen_bool(0.5));
        let corpus = random_corpus(&mut rng, sentences, 8, with_pos);
        let seed = rng.gen();

        let config = EntityAttackConfig::new(rng.gen_range(0..=10) as f64 / 10.0, seed).unwrap();
        let entity = attack_entities(&corpus, &dict, &link_all(&corpus), &config).map_err(|e| e.to_string())?;
        if !valid(&entity.corpus) || type_multiset(&entity.corpus) != type_multiset(&corpus) {
            violations += 1;
            note("entity", format!("corpus {i}"));
        }

        let scorer = UnigramOverlapScorer::from_corpus(&corpus);
        let config = ContextAttackConfig { seed, ..ContextAttackConfig::default() };
        let context = attack_context(&corpus, &stub, &scorer, &config).map_err(|e| e.to_string())?;
        let same_tags = context.corpus.sentences().iter().zip(corpus.sentences()).all(|(a, b)| a.tags() == b.tags());
        if !valid(&context.corpus) || !same_tags {
            violations += 1;
            note("context", format!("corpus {i}"));
        }

        for method in [AugmentMethod::EntitySwitching, AugmentMethod::RandomMasking] {
            let out = augment(&corpus, method, seed);
            if !valid(&out.corpus) || type_multiset(&out.corpus) != type_multiset(&corpus) {
                violations += 1;
                note(method.as_str(), format!("corpus {i}"));
            }
        }

        let mixed = augment(&corpus, AugmentMethod::MixingUp, seed);
        let mut spliced: HashMap<&str, Vec<Tag>> = HashMap::new();
        for edit in &mixed.edits {
            if let AugmentEdit::MixingUp { sentence_id, entity, donor_sentence_id, donor_entity } = edit {
                let target = corpus.get(sentence_id).unwrap().tags();
                let donor = corpus.get(donor_sentence_id).unwrap().tags();
                let expected = target[..entity.end].iter().chain(&donor[donor_entity.end..]).cloned().collect();
                spliced.insert(sentence_id.as_str(), expected);
            }
        }
        let consistent = mixed.corpus.sentences().iter().zip(corpus.sentences()).all(|(out, orig)| {
            out.tags() == spliced.get(orig.id()).cloned().unwrap_or_else(|| orig.tags())
        });
        if !valid(&mixed.corpus) || !consistent {
            violations += 1;
            note("mixing_up", format!("corpus {i}"));
        }
    }
    ensure(violations == 0, || format!("{violations} violations, first per stage: {notes:?}"))?;
    Ok(format!("{BIO_CORPORA} corpora x 5 transforms, 0 violations"))
}

fn determinism() -> Check {
    let run_all = |workers: &str| -> Result<BTreeMap<String, String>, String> {
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let dir = |name: &str| root.path().join(name).display().to_string();
        let test = fixture("toy/test.conll");
        let steps: Vec<Vec<String>> = vec![
            vec!["--offline".into(), "build-dict".into(), "--corpus".into(), test.clone(), "--train".into(), fixture("toy/train.conll"),
                 "--rules".into(), fixture("rules.json"), "--cache-dir".into(), fixture("kb-cache"), "--out-dir".into(), dir("dict")],
            vec!["--stub-provider".into(), "builtin".into(), "attack".into(), "--mode".into(), "full".into(), "-i".into(), test.clone(),
                 "--dict".into(), format!("{}/dictionary.json", dir("dict")), "--train".into(), fixture("toy/train.conll"),
                 "--out-dir".into(), dir("attack")],
            vec!["evaluate".into(), "--gold".into(), test.clone(), "--pred".into(), fixture("toy/pred.jsonl"),
                 "--gold-attacked".into(), test.clone(), "--pred-attacked".into(), fixture("toy/pred_attacked.jsonl"),
                 "--out-dir".into(), dir("evaluate")],
        ];
        for step in steps {
            let out = nerstress().args(["--workers", workers, "--seed", "21"]).args(&step).output().map_err(|e| e.to_string())?;
            ensure(out.status.success(), || format!("{step:?}: {}", stderr(&out)))?;
        }
        let mut files = BTreeMap::new();
        for stage in ["dict", "attack", "evaluate"] {
            for entry in std::fs::read_dir(root.path().join(stage)).map_err(|e| e.to_string())? {
                let path = entry.map_err(|e| e.to_string())?.path();
                let text = read(&path).replace(&root.path().display().to_string(), "<root>");
                files.insert(format!("{stage}/{}", path.file_name().unwrap().to_string_lossy()), text);
            }
        }
        Ok(files)
    };
    let first = run_all("1")?;
    let second = run_all("1")?;
    let eight = run_all("8")?;
    let differing = |other: &BTreeMap<String, String>| -> Vec<String> {
        first.keys().chain(other.keys()).filter(|k| first.get(*k) != other.get(*k)).cloned().collect()
    };
    ensure(differing(&second).is_empty(), || format!("rerun differs in {:?}", differing(&second)))?;
    ensure(differing(&eight).is_empty(), || format!("8 workers differ in {:?}", differing(&eight)))?;
    Ok(format!("{} output files byte-identical across 2 runs and workers 1/8", first.len()))
}

fn coverage_law() -> Check {
    let mut rng = rng_for(3, "acceptance-coverage", &[]);
    let sentences = (0..37)
        .map(|i| {
            let city = *["Paris", "Rome", "Lima", "Oslo"].choose(&mut rng).unwrap();
            let tokens = vec![
                Token::new(city, Tag::begin("GPE")),
                Token::new("is", Tag::Outside),
                Token::new("old", Tag::Outside),
            ];
            Sentence::new(format!("c{i}"), tokens).unwrap()
        })
        .collect();
    let corpus = Corpus::new("coverage", sentences).unwrap();
    let n = corpus.entity_count();
    let dict = dictionary(&[("GPE", &["Bari", "Ulan Bator"])], &[]);
    let links = link_all(&corpus);
    let mut seen = Vec::new();
    for seed in 0..5u64 {
        for p in COVERAGE_GRID {
            let out = attack_entities(&corpus, &dict, &links, &EntityAttackConfig::new(p, seed).unwrap()).map_err(|e| e.to_string())?;
            let replaced = out.records.iter().filter(|r| r.status == AttackStatus::Replaced).count();
            let expected = (p * n as f64).round() as usize;
            ensure(replaced == expected, || format!("seed {seed} p={p}: replaced {replaced}, expected {expected}"))?;
            if seed == 0 {
                seen.push(format!("{p}:{replaced}"));
            }
        }
    }
    Ok(format!("n={n}, replaced per p = {} (5 seeds)", seen.join(" ")))
}

fn rank_window() -> Check {
    let toy = parse_conll(&read(fixture("toy/test.conll")), ParseMode::Strict).map_err(|e| e.to_string())?;
    let mut rng = rng_for(4, "acceptance-rank", &[]);
    let mut corpora = vec![toy.clone()];
    corpora.extend((0..50).map(|_| random_corpus(&mut rng, 3, 10, false)));

    let stub = StubProvider::builtin();
    let config = ContextAttackConfig { lo: RANK_LO, hi: RANK_HI, seed: 9, ..ContextAttackConfig::default() };
    let (mut in_window, mut fallbacks) = (0, 0);
    for corpus in &corpora {
        let scorer = UnigramOverlapScorer::from_corpus(corpus);
        let out = attack_context(corpus, &stub, &scorer, &config).map_err(|e| e.to_string())?;
        let fills: Vec<_> = out.records.iter().flat_map(|r| &r.replacements).collect();
        for f in &fills {
            if f.fallback {
                fallbacks += 1;
                ensure(f.rank < RANK_LO, || format!("fallback at rank {}", f.rank))?;
            } else {
                in_window += 1;
                ensure((RANK_LO..RANK_HI).contains(&f.rank), || format!("replacement at rank {} outside the window", f.rank))?;
            }
        }
        ensure(out.stats.fallback_fills == fills.iter().filter(|f| f.fallback).count(), || "fallback count mismatch".into())?;
    }

    // a lexicon shorter than the window forces logged fallbacks
    let small: String = (0..60).map(|i| format!("w{i}\n")).collect();
    let short = StubProvider::from_lexicon(&small, "short").map_err(|e| e.to_string())?;
    let out = attack_context(&toy, &short, &UnigramOverlapScorer::from_corpus(&toy), &config).map_err(|e| e.to_string())?;
    let forced: Vec<_> = out.records.iter().flat_map(|r| &r.replacements).collect();
    ensure(!forced.is_empty() && forced.iter().all(|f| f.fallback && f.rank < RANK_LO), || "short lexicon did not fall back".into())?;
    ensure(out.stats.fallback_fills == forced.len(), || "fallbacks not counted in the log".into())?;

    // left-to-right: each request sees the fills made before it
    let tagger = LexiconTagger::builtin();
    let mut checked = 0;
    for sentence in corpora.iter().flat_map(|c| c.sentences()) {
        let targets = select_target_tokens(sentence, PosSource::BuiltinLexicon, &tagger).map_err(|e| e.to_string())?;
        for plan in make_mask_plans(sentence.id(), &targets, 8, 9) {
            let probe = StubProvider::builtin();
            let mut plan_rng = rng_for(9, "acceptance-decode", &[sentence.id().as_bytes()]);
            let decoded = decode_variant(sentence, &plan, &probe, &config, &mut plan_rng).map_err(|e| e.to_string())?;
            let requests = probe.requests();
            ensure(requests.iter().map(|r| r.mask_index).collect::<Vec<_>>() == plan.positions, || {
                format!("{}: requests out of order", sentence.id())
            })?;
            for (i, request) in requests.iter().enumerate() {
                for fill in decoded.fills.iter().filter(|f| f.position < request.mask_index) {
                    ensure(request.tokens[fill.position] == fill.replacement, || {
                        format!("{}: request {i} lacks the earlier fill at {}", sentence.id(), fill.position)
                    })?;
                }
                for &later in plan.positions.iter().filter(|&&p| p > request.mask_index) {
                    ensure(request.tokens[later] == sentence.tokens()[later].text, || {
                        format!("{}: request {i} sees a later position filled", sentence.id())
                    })?;
                }
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{in_window} window fills in [{RANK_LO},{RANK_HI}), {fallbacks} fallbacks logged, {} forced fallbacks logged, {checked} plans decoded left to right",
        forced.len()
    ))
}

fn random_masking() -> Check {
    let mut rng = rng_for(5, "acceptance-masking", &[]);
    let mut sentences = Vec::new();
    let mut tokens = 0;
    while tokens < MASKING_MIN_TOKENS {
        let s = random_sentence(&mut rng, format!("m{}", sentences.len()), 14, false);
        tokens += s.len();
        sentences.push(s);
    }
    let corpus = Corpus::new("masking", sentences).unwrap();
    let stopwords = builtin_stopwords();
    let out = augment(&corpus, AugmentMethod::RandomMasking, 17);

    let class = |c: char| {
        if c.is_uppercase() {
            1
        } else if c.is_lowercase() {
            2
        } else {
            0
        }
    };
    let mut violations = 0;
    let mut first = None;
    let (mut masked, mut kept) = (0, 0);
    for (a, b) in corpus.sentences().iter().zip(out.corpus.sentences()) {
        for (i, (x, y)) in a.tokens().iter().zip(b.tokens()).enumerate() {
            let ok = if x.tag != y.tag {
                false
            } else if x.tag.is_outside() || stopwords.contains(&x.text.to_lowercase()) {
                kept += 1;
                x.text == y.text
            } else {
                masked += 1;
                let (xs, ys): (Vec<char>, Vec<char>) = (x.text.chars().collect(), y.text.chars().collect());
                xs.len() == ys.len()
                    && xs.iter().zip(&ys).all(|(&p, &q)| class(p) == class(q) && (class(p) != 0 || p == q))
            };
            if !ok {
                violations += 1;
                first.get_or_insert(format!("{} token {i}: {:?} -> {:?}", a.id(), x.text, y.text));
            }
        }
        if a.len() != b.len() {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations, first: {first:?}"))?;
    Ok(format!("{} tokens: {masked} entity tokens masked, {kept} kept byte-identical, 0 violations", corpus.token_count()))
}

fn error_analysis() -> Check {
    let span = |s, e| TypedSpan::new(s, e, "GPE");
    let cases = [((0, 2), (0, 2), 0), ((0, 2), (0, 1), 1), ((0, 2), (1, 3), 2), ((0, 3), (2, 4), 3)];
    for ((a, b), (c, d), want) in cases {
        let got = token_difference(&span(a, b), &span(c, d));
        ensure(got == want, || format!("d([{a},{b}), [{c},{d})) = {got}, expected {want}"))?;
    }
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    for (a, b, want) in [(set(&["x", "y"]), set(&["x", "y"]), 1.0), (set(&["x"]), set(&["y"]), 0.0), (set(&["x"]), set(&["x", "y", "z", "w"]), 0.25)] {
        let got = jaccard(&a, &b);
        ensure(got == want, || format!("jaccard {a:?} {b:?} = {got}, expected {want}"))?;
    }

    let mut rng = rng_for(6, "acceptance-errors", &[]);
    for case in 0..200 {
        let sentences = rng.gen_range(1..6);
        let gold = random_corpus(&mut rng, sentences, 12, false);
        let p1 = PredictionSet::from_gold(&perturbed(&mut rng, &gold));
        let p2 = PredictionSet::from_gold(&perturbed(&mut rng, &gold));
        let breakdown = error_breakdown(&gold, &p1).map_err(|e| e.to_string())?;
        if breakdown.total > 0 {
            let f = breakdown.fractions();
            let sum: f64 = f.correct_type.iter().chain(&f.wrong_type).sum::<f64>() + f.no_prediction;
            ensure((sum - 1.0).abs() <= FRACTION_TOLERANCE, || format!("case {case}: fractions sum to {sum}"))?;
        }
        let (c1, c2) = (confusion(&gold, &p1).map_err(|e| e.to_string())?, confusion(&gold, &p2).map_err(|e| e.to_string())?);
        let support = type_multiset(&gold).into_iter().fold(BTreeMap::<String, i64>::new(), |mut m, ((_, t), n)| {
            *m.entry(t).or_default() += n as i64;
            m
        });
        for (etype, n) in &support {
            ensure(c1.row_sum(etype) == Some(*n), || format!("case {case}: row {etype} sums to {:?}, support {n}", c1.row_sum(etype)))?;
        }
        // a shared label set makes the matrices comparable
        let labels: Vec<String> = c1.labels.iter().chain(&c2.labels).cloned().collect::<BTreeSet<_>>().into_iter().filter(|l| l != "None").chain(["None".to_string()]).collect();
        let a = nerstress::eval::confusion_with_labels(&gold, &p1, &labels).map_err(|e| e.to_string())?;
        let b = nerstress::eval::confusion_with_labels(&gold, &p2, &labels).map_err(|e| e.to_string())?;
        let diff = confusion_difference(&b, &a).map_err(|e| e.to_string())?;
        ensure(diff.counts.iter().all(|row| row.iter().sum::<i64>() == 0), || format!("case {case}: difference rows do not sum to 0"))?;
    }
    Ok("d cases {0,1,2,3}, Jaccard {1, 0, 0.25}, 200 randomized fraction/row-sum/difference checks".into())
}

fn dictionary_pipeline() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dict_path = build_toy_dict(dir.path());
    let dict: Value = serde_json::from_str(&read(&dict_path)).map_err(|e| e.to_string())?;
    let beijing = read(dir.path().join("links.jsonl"))
        .lines()
        .filter_map(|l| serde_json::from_str::<Value>(l).ok())
        .find(|l| l["surface"] == "Beijing")
        .ok_or("Beijing not in the links")?;
    ensure(beijing["qid"] == "Q956", || format!("Beijing linked to {}", beijing["qid"]))?;
    ensure(beijing["classes"].as_array().is_some_and(|c| c.iter().any(|q| q == "Q1549591")), || "Q1549591 not among Beijing's classes".into())?;
    let surfaces = dict["types"]["GPE"]["Q1549591"]["surfaces"].as_array().ok_or("class Q1549591 missing")?;
    ensure(surfaces.iter().any(|s| s == "Bari"), || format!("Bari missing from {surfaces:?}"))?;

    let train = parse_conll(&read(fixture("toy/train.conll")), ParseMode::Strict).map_err(|e| e.to_string())?;
    let vocab = TrainVocab::from_corpus(&train, &Default::default());
    let kept: Vec<String> = dict["types"]
        .as_object()
        .unwrap()
        .values()
        .flat_map(|classes| classes.as_object().unwrap().values())
        .flat_map(|c| c["surfaces"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()))
        .collect();
    let covered: Vec<&String> = kept.iter().filter(|s| s.split_whitespace().all(|w| vocab.contains(w))).collect();
    ensure(covered.is_empty(), || format!("candidates covered by training vocabulary survived: {covered:?}"))?;
    ensure(!kept.iter().any(|s| s == "Amazon"), || "Amazon survived".into())?;
    let direct = ood_filter(&["Amazon".into(), "New Zealand".into(), "New Delhi".into()], &vocab, None);
    ensure(direct == ["New Delhi"], || format!("ood_filter kept {direct:?}"))?;
    Ok(format!("Beijing -> Q956 -> Q1549591 with Bari; {} candidates kept, none covered by the training vocabulary", kept.len()))
}

fn end_to_end_golden(suite_started: Instant) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dict = build_toy_dict(&dir.path().join("dict"));
    let out_dir = dir.path().join("out");
    let out = run(&[
        "--seed",
        "7",
        "--stub-provider",
        "builtin",
        "attack",
        "--mode",
        "full",
        "-i",
        &fixture("toy/test.conll"),
        "--dict",
        dict.to_str().unwrap(),
        "--train",
        &fixture("toy/train.conll"),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    ensure(out.status.success(), || stderr(&out))?;
    let names = ["attacked.conll", "entity_log.jsonl", "context_log.jsonl", "attack_stats.json"];
    for name in names {
        let golden = read(golden_dir().join("attack_full").join(name));
        ensure(read(out_dir.join(name)) == golden, || format!("{name} differs from the committed golden file"))?;
    }
    let elapsed = suite_started.elapsed();
    ensure(elapsed < SUITE_TIME_LIMIT, || format!("acceptance suite took {elapsed:?}"))?;
    Ok(format!("{} golden files match byte for byte; acceptance suite ran in {elapsed:.2?}", names.len()))
}

fn evaluate(name: &str, check: impl FnOnce() -> Check) -> (String, Check) {
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
        let msg = panic.downcast_ref::<String>().cloned().or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    (name.to_string(), outcome)
}

fn main() {
    let started = Instant::now();
    let outcomes = vec![
        evaluate("metric_oracle", metric_oracle),
        evaluate("reported_formulas", reported_formulas),
        evaluate("bio_safety", bio_safety),
        evaluate("determinism", determinism),
        evaluate("coverage_law", coverage_law),
        evaluate("rank_window", rank_window),
        evaluate("random_masking", random_masking),
        evaluate("error_analysis", error_analysis),
        evaluate("dictionary_pipeline", dictionary_pipeline),
        evaluate("end_to_end_golden", || end_to_end_golden(started)),
    ];
    let mut unexpected = Vec::new();
    for (name, outcome) in &outcomes {
        let expected_failure = EXPECTED_FAILURES.iter().find(|(n, _)| n == name);
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => println!("FAIL {name}: {reason}"),
        }
        match (outcome.is_ok(), expected_failure) {
            (true, None) => {}
            (false, Some((_, why))) => println!("     expected failure: {why}"),
            (true, Some(_)) => unexpected.push(format!("{name} passed but is recorded as an expected failure")),
            (false, None) => unexpected.push(format!("{name} failed")),
        }
    }
    let passed = outcomes.iter().filter(|(_, o)| o.is_ok()).count();
    println!("acceptance: {passed}/{} criteria pass in {:.2?}", outcomes.len(), started.elapsed());
    if !unexpected.is_empty() {
        for u in &unexpected {
            eprintln!("unexpected: {u}");
        }
        std::process::exit(1);
    }
}
