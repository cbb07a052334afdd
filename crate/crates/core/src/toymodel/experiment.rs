//! Baseline vs selective training on a synthetic biased corpus.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::train::{decode_all, refresh_candidates};
use super::{build_examples, init_model, train_epoch, EpochStats, Example, ToyModel, TrainConfig, Vocab};
use crate::corpus::{synth_biased_corpus, Case, CaseSet, GroupSpec, SynthConfig, SPLIT_ATTRIBUTE};
use crate::error::{Error, Result};
use crate::fairness::stats::derive_seed;
use crate::fairness::{compare_runs, fairness_report, ComparisonTable, FairnessReport, ReportConfig};
use crate::metrics::{score_all, Metric, Scorer};
use crate::parallel::{self, Exec};
use crate::selection::{MarginSchedule, SelectionConfig, SelectionMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: SynthConfig,
    pub embed_dim: usize,
    pub baseline: TrainConfig,
    pub selected: TrainConfig,
    /// One full baseline and selected run per seed.
    pub seeds: Vec<u64>,
    /// Beam width for held-out decoding.
    pub beam: usize,
    pub report: ReportConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let baseline = TrainConfig {
            epochs: 60,
            learning_rate: 2.0,
            ..TrainConfig::default()
        };
        let selected = TrainConfig {
            selection: SelectionConfig {
                gamma: 0.5,
                mode: SelectionMode::Combined,
                ranking_weight: 1.0,
            },
            margin: MarginSchedule::constant(0.001),
            candidate_count: 4,
            warmup_epochs: 10,
            ..baseline.clone()
        };
        Self {
            corpus: SynthConfig::default(),
            embed_dim: 48,
            baseline,
            selected,
            seeds: (0..5).collect(),
            beam: 3,
            report: ReportConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.baseline.validate()?;
        self.selected.validate()?;
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.beam == 0 {
            return Err(Error::Config("beam must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean with a two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Interval {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("interval input"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() == 1 {
            return Ok(Self {
                mean,
                ci_low: mean,
                ci_high: mean,
            });
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let t = StudentsT::new(0.0, 1.0, n - 1.0)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .inverse_cdf(0.975);
        let half = t * (var / n).sqrt();
        Ok(Self {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub baseline: FairnessReport,
    pub selected: FairnessReport,
    pub comparison: ComparisonTable,
    pub baseline_epochs: Vec<EpochStats>,
    pub selected_epochs: Vec<EpochStats>,
}

impl SeedRun {
    /// Group-gap p-value of the baseline on ROUGE-1.
    pub fn baseline_rouge1_p(&self) -> Option<f64> {
        self.baseline
            .pairwise
            .iter()
            .find(|p| p.metric == Metric::Rouge1)
            .map(|p| p.p_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    /// Average-MFD reduction in percent.
    pub average_mfd_reduction_pct: Interval,
    /// Relative change of overall mean ROUGE-1 in percent.
    pub overall_rouge1_change_pct: Interval,
    pub baseline_rouge1_mfd: Interval,
    pub selected_rouge1_mfd: Interval,
    /// Largest baseline ROUGE-1 group-gap p-value over seeds.
    pub max_baseline_rouge1_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("experiment result serializes")
    }
}

fn split(set: &CaseSet, value: &str) -> Vec<Case> {
    set.iter()
        .filter(|c| c.attr(SPLIT_ATTRIBUTE) == Some(value))
        .cloned()
        .collect()
}

struct Prepared {
    init: ToyModel,
    train: Vec<Example>,
    heldout: Vec<Example>,
    heldout_cases: Vec<Case>,
}

fn prepare(config: &ExperimentConfig, seed: u64, scorer: &Scorer) -> Result<Prepared> {
    // The corpus and the initial parameters get independent streams.
    let corpus_seed = derive_seed(seed, &[0]);
    let corpus = synth_biased_corpus(&config.corpus, corpus_seed)?;
    let attribute = config.corpus.attribute.as_str();
    let groups: std::collections::BTreeSet<&str> = corpus.iter().filter_map(|c| c.attr(attribute)).collect();
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "corpus has {} group(s) on {attribute:?}; the experiment needs 2",
            groups.len()
        )));
    }
    let train_cases = split(&corpus, "train");
    let heldout_cases = split(&corpus, "heldout");
    if train_cases.is_empty() || heldout_cases.is_empty() {
        return Err(Error::Empty("train or held-out split"));
    }
    let input_vocab = Vocab::from_texts(corpus.iter().filter_map(|c| c.source.as_deref()));
    let vocab = Vocab::from_texts(corpus.iter().map(|c| c.reference.as_str()));
    let init = init_model(input_vocab, vocab, config.embed_dim, derive_seed(seed, &[1]))?;
    let train = build_examples(&train_cases, &init, Some(attribute), scorer)?;
    let heldout = build_examples(&heldout_cases, &init, Some(attribute), scorer)?;
    Ok(Prepared {
        init,
        train,
        heldout,
        heldout_cases,
    })
}

fn train_run(
    model: &mut ToyModel,
    data: &Prepared,
    train: &mut [Example],
    config: &TrainConfig,
    scorer: &Scorer,
) -> Result<Vec<EpochStats>> {
    let mut stats = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let selective = epoch >= config.warmup_epochs;
        if selective && config.regenerate_candidates && config.selection.mode == SelectionMode::Combined {
            refresh_candidates(model, train, config.candidate_count, config.max_len, scorer, Exec::Sequential)?;
        }
        stats.push(train_epoch(model, train, config, epoch, &data.heldout)?);
    }
    Ok(stats)
}

fn evaluate(
    model: &ToyModel,
    data: &Prepared,
    config: &ExperimentConfig,
    max_len: usize,
    scorer: &Scorer,
    report_seed: u64,
) -> Result<FairnessReport> {
    let outputs = decode_all(model, &data.heldout, max_len, config.beam, Exec::Sequential)?;
    let cases: Vec<Case> = data
        .heldout_cases
        .iter()
        .zip(outputs)
        .map(|(c, out)| c.clone().with_generated(model.vocab.decode(&out)))
        .collect();
    let scored = score_all(&cases, scorer, Exec::Sequential);
    let set = CaseSet::new(cases, "heldout")?;
    let spec = GroupSpec::new(vec![config.corpus.attribute.clone()])?;
    let report_cfg = ReportConfig {
        seed: report_seed,
        exec: Exec::Sequential,
        ..config.report.clone()
    };
    fairness_report(&scored.records, &set, &spec, &scorer.fingerprint(), &report_cfg)
}

/// Both variants for one seed. They share the corpus, the initial parameters
/// and the batch order; the selected variant draws its candidates from the
/// trained baseline.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let scorer = Scorer::default();
    let data = prepare(config, seed, &scorer)?;
    let shuffle_seed = derive_seed(seed, &[2]);
    let report_seed = derive_seed(seed, &[3]);

    let base_cfg = TrainConfig {
        seed: shuffle_seed,
        ..config.baseline.clone()
    };
    let mut baseline = data.init.clone();
    let mut train = data.train.clone();
    let baseline_epochs = train_run(&mut baseline, &data, &mut train, &base_cfg, &scorer)?;

    let sel_cfg = TrainConfig {
        seed: shuffle_seed,
        ..config.selected.clone()
    };
    let mut train = data.train.clone();
    if sel_cfg.selection.mode == SelectionMode::Combined {
        refresh_candidates(
            &baseline,
            &mut train,
            sel_cfg.candidate_count,
            sel_cfg.max_len,
            &scorer,
            Exec::Sequential,
        )?;
    }
    let mut selected = data.init.clone();
    let selected_epochs = train_run(&mut selected, &data, &mut train, &sel_cfg, &scorer)?;

    let baseline_report = evaluate(&baseline, &data, config, base_cfg.max_len, &scorer, report_seed)?;
    let selected_report = evaluate(&selected, &data, config, sel_cfg.max_len, &scorer, report_seed)?;
    let comparison = compare_runs(&baseline_report, &selected_report)?;
    Ok(SeedRun {
        seed,
        baseline: baseline_report,
        selected: selected_report,
        comparison,
        baseline_epochs,
        selected_epochs,
    })
}

fn rouge1_mfd(report: &FairnessReport) -> f64 {
    report
        .pairwise
        .iter()
        .filter(|p| p.metric == Metric::Rouge1)
        .map(|p| p.mfd)
        .sum()
}

/// Runs every seed (in parallel under `exec`) and summarizes across seeds.
pub fn run_bias_experiment(config: &ExperimentConfig, exec: Exec) -> Result<ExperimentResult> {
    config.validate()?;
    let runs: Vec<SeedRun> = parallel::map(&config.seeds, exec, |&s| run_seed(config, s))
        .into_iter()
        .collect::<Result<_>>()?;
    let reductions: Vec<f64> = runs
        .iter()
        .map(|r| r.comparison.average_mfd_reduction_pct.unwrap_or(0.0))
        .collect();
    let changes: Vec<f64> = runs
        .iter()
        .map(|r| {
            r.comparison
                .overall_change_pct
                .get(&Metric::Rouge1)
                .copied()
                .flatten()
                .unwrap_or(0.0)
        })
        .collect();
    let base_mfd: Vec<f64> = runs.iter().map(|r| rouge1_mfd(&r.baseline)).collect();
    let sel_mfd: Vec<f64> = runs.iter().map(|r| rouge1_mfd(&r.selected)).collect();
    let max_p = runs
        .iter()
        .filter_map(SeedRun::baseline_rouge1_p)
        .fold(0.0, f64::max);
    Ok(ExperimentResult {
        config: config.clone(),
        summary: ExperimentSummary {
            average_mfd_reduction_pct: Interval::of(&reductions)?,
            overall_rouge1_change_pct: Interval::of(&changes)?,
            baseline_rouge1_mfd: Interval::of(&base_mfd)?,
            selected_rouge1_mfd: Interval::of(&sel_mfd)?,
            max_baseline_rouge1_p: max_p,
        },
        runs,
    })
}
