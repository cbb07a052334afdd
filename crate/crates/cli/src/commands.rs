use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fairgen_core::corpus::{read_cases, synth_biased_corpus, CaseSet, GroupSpec, SynthConfig};
use fairgen_core::fairness::{compare_runs, fairness_report, FairnessReport, ReportConfig};
use fairgen_core::metrics::{keyword_label, score_all, Lexicon, ScoreRecord, Scorer};
use fairgen_core::parallel::Exec;
use fairgen_core::selection::{select_top_gamma, LossEntry, SelectionConfig, SelectionMode};
use fairgen_core::toymodel::{run_bias_experiment, ExperimentConfig};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::manifest::{read_file, write_file, RunManifest};
use crate::Failure;

/// Fingerprint used when a score file has no manifest to take it from.
const UNKNOWN_FINGERPRINT: &str = "unspecified";

fn load_cases(path: &Path, strict: bool, manifest: &mut RunManifest) -> Result<CaseSet, Failure> {
    let bytes = read_file(path)?;
    manifest.input(path, &bytes);
    let loaded = read_cases(bytes.as_slice(), strict)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    for r in &loaded.dropped {
        eprintln!("{}: line {}: skipped: {}", path.display(), r.line, r.reason);
    }
    Ok(loaded.cases)
}

/// Parses one JSON value per non-blank line.
fn read_lines<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<Vec<T>, Failure> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Failure::Data(format!("{}: not UTF-8: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Failure::Data(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn read_json<T: DeserializeOwned>(path: &Path, manifest: &mut RunManifest) -> Result<T, Failure> {
    let bytes = read_file(path)?;
    manifest.input(path, &bytes);
    serde_json::from_slice(&bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configuration serializes")
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn score(cases: &Path, strict: bool, config: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let mut manifest = RunManifest::new("score", Value::Null);
    let scorer: Scorer = match config {
        Some(p) => read_json(p, &mut manifest)?,
        None => Scorer::default(),
    };
    let scorer = Scorer::new(scorer.metrics, scorer.lexicon)?;
    let set = load_cases(cases, strict, &mut manifest)?;
    let outcome = score_all(set.cases(), &scorer, Exec::Parallel);
    write_file(out, &jsonl(&outcome.records))?;
    manifest.config = json!({ "scorer": to_value(&scorer), "fingerprint": scorer.fingerprint() });
    manifest.write_beside(out)?;
    eprintln!(
        "scored {} case(s), skipped {} without generated text",
        outcome.records.len(),
        outcome.skipped.len()
    );
    Ok(())
}

pub fn label(cases: &Path, strict: bool, config: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let mut manifest = RunManifest::new("label", Value::Null);
    let lexicon = match config {
        Some(p) => {
            let bytes = read_file(p)?;
            manifest.input(p, &bytes);
            let text = String::from_utf8_lossy(&bytes);
            Lexicon::from_json(&text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?
        }
        None => Lexicon::default(),
    };
    let set = load_cases(cases, strict, &mut manifest)?;
    let (mut gold_filled, mut pred_filled) = (0, 0);
    let labelled: Vec<_> = set
        .iter()
        .cloned()
        .map(|mut c| {
            if c.gold_labels.is_none() {
                c.gold_labels = Some(keyword_label(&c.reference, &lexicon));
                gold_filled += 1;
            }
            if let (None, Some(text)) = (&c.pred_labels, &c.generated) {
                c.pred_labels = Some(keyword_label(text, &lexicon));
                pred_filled += 1;
            }
            c
        })
        .collect();
    write_file(out, &jsonl(&labelled))?;
    manifest.config = json!({ "lexicon": to_value(&lexicon), "fingerprint": lexicon.fingerprint() });
    manifest.write_beside(out)?;
    eprintln!("labelled {gold_filled} reference(s) and {pred_filled} generated text(s)");
    Ok(())
}

pub struct FairnessInput<'a> {
    pub scores: &'a Path,
    pub cases: &'a Path,
    pub strict: bool,
    pub group: &'a str,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out: &'a Path,
}

/// Scorer fingerprint recorded by `score` next to the score file.
fn scores_fingerprint(scores: &Path) -> String {
    let mut name = scores.as_os_str().to_owned();
    name.push(".manifest.json");
    let found = std::fs::read(PathBuf::from(name))
        .ok()
        .and_then(|b| serde_json::from_slice::<Value>(&b).ok())
        .and_then(|v| v["config"]["fingerprint"].as_str().map(str::to_string));
    found.unwrap_or_else(|| {
        eprintln!(
            "warning: no score manifest next to {}; fingerprint recorded as {UNKNOWN_FINGERPRINT:?}",
            scores.display()
        );
        UNKNOWN_FINGERPRINT.to_string()
    })
}

pub fn fairness(args: FairnessInput<'_>) -> Result<(), Failure> {
    let mut manifest = RunManifest::new("fairness", Value::Null);
    let mut config: ReportConfig = match args.config {
        Some(p) => read_json(p, &mut manifest)?,
        None => ReportConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let spec = GroupSpec::parse(args.group)?;
    let score_bytes = read_file(args.scores)?;
    manifest.input(args.scores, &score_bytes);
    let records: Vec<ScoreRecord> = read_lines(args.scores, &score_bytes)?;
    let set = load_cases(args.cases, args.strict, &mut manifest)?;
    let fingerprint = scores_fingerprint(args.scores);
    let report = fairness_report(&records, &set, &spec, &fingerprint, &config)?;
    let mut text = report.to_json();
    text.push('\n');
    write_file(args.out, text.as_bytes())?;
    manifest.config = json!({ "group": spec.to_string(), "report": to_value(&config), "fingerprint": fingerprint });
    manifest.seed(config.seed).write_beside(args.out)?;
    let significant = report.pairwise.iter().filter(|p| p.p_value < 0.05).count();
    eprintln!(
        "{} group(s), {} comparison(s), {} with p < 0.05, average MFD {:.4}",
        report.summaries.len(),
        report.pairwise.len(),
        significant,
        report.average_mfd
    );
    Ok(())
}

pub fn compare(base: &Path, treated: &Path, out: &Path) -> Result<(), Failure> {
    let mut manifest = RunManifest::new("compare", Value::Null);
    let b: FairnessReport = read_json(base, &mut manifest)?;
    let t: FairnessReport = read_json(treated, &mut manifest)?;
    let table = compare_runs(&b, &t)?;
    write_file(out, table.to_csv().as_bytes())?;
    manifest.write_beside(out)?;
    match table.average_mfd_reduction_pct {
        Some(r) => eprintln!(
            "average MFD {:.4} -> {:.4} ({r:.2}% reduction)",
            table.average_mfd_base, table.average_mfd_treated
        ),
        None => eprintln!("baseline average MFD is 0; reduction not applicable"),
    }
    Ok(())
}

pub fn select(losses: &Path, gamma: f64, mode: SelectionMode, out: Option<&Path>) -> Result<(), Failure> {
    let config = SelectionConfig::new(gamma, mode)?;
    let mut manifest = RunManifest::new("select", to_value(&config));
    let bytes = read_file(losses)?;
    manifest.input(losses, &bytes);
    let batch: Vec<LossEntry> = read_lines(losses, &bytes)?;
    let ids = select_top_gamma(&batch, &config)?;
    let mut text = String::new();
    for id in &ids {
        let _ = writeln!(text, "{id}");
    }
    match out {
        Some(path) => {
            write_file(path, text.as_bytes())?;
            manifest.write_beside(path)?;
        }
        None => print!("{text}"),
    }
    eprintln!("selected {} of {} case(s)", ids.len(), batch.len());
    Ok(())
}

pub fn synth(config: Option<&Path>, seed: u64, out: &Path) -> Result<(), Failure> {
    let mut manifest = RunManifest::new("synth", Value::Null);
    let cfg: SynthConfig = match config {
        Some(p) => read_json(p, &mut manifest)?,
        None => SynthConfig::default(),
    };
    cfg.validate()?;
    let set = synth_biased_corpus(&cfg, seed)?;
    write_file(out, &jsonl(set.cases()))?;
    manifest.config = to_value(&cfg);
    manifest.seed(seed).write_beside(out)?;
    eprintln!("wrote {} synthetic case(s)", set.len());
    Ok(())
}

pub fn train_toy(
    config: Option<&Path>,
    seed: Option<u64>,
    gamma: Option<f64>,
    mode: Option<SelectionMode>,
    out: &Path,
) -> Result<(), Failure> {
    let mut manifest = RunManifest::new("train-toy", Value::Null);
    let raw: Value = match config {
        Some(p) => read_json(p, &mut manifest)?,
        None => json!({}),
    };
    let explicit_seeds = raw.get("seeds").is_some();
    let mut cfg: ExperimentConfig =
        serde_json::from_value(raw).map_err(|e| Failure::Data(format!("experiment config: {e}")))?;
    match seed {
        Some(s) => cfg.seeds = vec![s],
        None if !explicit_seeds => cfg.seeds = vec![0],
        None => {}
    }
    if let Some(g) = gamma {
        cfg.selected.selection.gamma = g;
    }
    if let Some(m) = mode {
        cfg.selected.selection.mode = m;
    }
    cfg.validate()?;
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::Internal(format!("cannot create {}: {e}", out.display())))?;

    let result = run_bias_experiment(&cfg, Exec::Parallel)?;
    for run in &result.runs {
        let s = run.seed;
        let mut base = run.baseline.to_json();
        base.push('\n');
        write_file(&out.join(format!("baseline_report_seed{s}.json")), base.as_bytes())?;
        let mut sel = run.selected.to_json();
        sel.push('\n');
        write_file(&out.join(format!("selected_report_seed{s}.json")), sel.as_bytes())?;
        write_file(&out.join(format!("comparison_seed{s}.csv")), run.comparison.to_csv().as_bytes())?;
        eprintln!(
            "seed {s}: baseline ROUGE-1 gap p = {:.3e}, average MFD {:.4} -> {:.4}",
            run.baseline_rouge1_p().unwrap_or(f64::NAN),
            run.comparison.average_mfd_base,
            run.comparison.average_mfd_treated
        );
    }
    let mut text = result.to_json();
    text.push('\n');
    write_file(&out.join("result.json"), text.as_bytes())?;
    let summary = &result.summary;
    eprintln!(
        "average MFD reduction {:.2}% [{:.2}, {:.2}], overall ROUGE-1 change {:.2}%",
        summary.average_mfd_reduction_pct.mean,
        summary.average_mfd_reduction_pct.ci_low,
        summary.average_mfd_reduction_pct.ci_high,
        summary.overall_rouge1_change_pct.mean
    );
    manifest.config = to_value(&cfg);
    if let [only] = cfg.seeds.as_slice() {
        manifest = manifest.seed(*only);
    }
    manifest.write_to(&out.join("manifest.json"))
}
