//! Selective training loop.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{decode, Params, ToyModel};
use crate::corpus::{Candidate, Case};
use crate::error::{Error, Result};
use crate::fairness::stats::derive_seed;
use crate::labels::LabelVector;
use crate::metrics::{rouge_n, tokenize, MetricConfig, Scorer};
use crate::parallel::{self, Exec};
use crate::selection::{
    order_candidates, ranking_loss, ranking_loss_grad, select_indices, MarginSchedule,
    SelectionConfig, SelectionMode,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub selection: SelectionConfig,
    pub margin: MarginSchedule,
    pub candidate_count: usize,
    pub length_alpha: f64,
    /// Leading epochs trained without selection or ranking loss.
    pub warmup_epochs: usize,
    /// Rebuild candidates from the model being trained before every
    /// selective epoch instead of keeping the initial set.
    pub regenerate_candidates: bool,
    /// Decoding length cap for candidates and held-out evaluation.
    pub max_len: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.5,
            selection: SelectionConfig::default(),
            margin: MarginSchedule::default(),
            candidate_count: 4,
            length_alpha: 1.0,
            warmup_epochs: 0,
            regenerate_candidates: false,
            max_len: 40,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.selection.validate()?;
        self.margin.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.selection.mode == SelectionMode::Combined && self.candidate_count < 2 {
            return Err(Error::Config("combined selection needs candidate_count >= 2".into()));
        }
        if !(self.length_alpha.is_finite() && self.length_alpha >= 0.0) {
            return Err(Error::Config("length_alpha must be >= 0".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }

    /// Same schedule with selection turned off.
    pub fn vanilla(&self) -> Self {
        Self {
            selection: SelectionConfig {
                gamma: 1.0,
                mode: SelectionMode::CeOnly,
                ..self.selection
            },
            ..self.clone()
        }
    }
}

/// A case encoded for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    /// Value of the grouping attribute, when one was requested.
    pub group: Option<String>,
    pub input: Vec<u32>,
    pub target: Vec<u32>,
    pub reference: String,
    pub gold_labels: Option<LabelVector>,
    /// Candidate outputs, best quality first.
    pub candidates: Vec<Vec<u32>>,
}

/// Encodes `cases` with the model's vocabularies. Existing candidate lists
/// are put in quality order with `scorer`.
pub fn build_examples(
    cases: &[Case],
    model: &ToyModel,
    group_attribute: Option<&str>,
    scorer: &Scorer,
) -> Result<Vec<Example>> {
    cases
        .iter()
        .map(|case| {
            case.validate()?;
            let target = model.vocab.encode(&case.reference);
            if target.is_empty() {
                return Err(Error::InvalidCase {
                    id: case.id.clone(),
                    message: "reference has no tokens".into(),
                });
            }
            let candidates = match &case.candidates {
                Some(cands) => {
                    let ranked =
                        order_candidates(cands, &case.reference, case.gold_labels.as_ref(), scorer)?;
                    ranked
                        .order()
                        .into_iter()
                        .map(|i| model.vocab.encode(&cands[i].text))
                        .collect()
                }
                None => Vec::new(),
            };
            Ok(Example {
                id: case.id.clone(),
                group: group_attribute.and_then(|a| case.attr(a)).map(str::to_string),
                input: case.source.as_deref().map(|s| model.encode_input(s)).unwrap_or_default(),
                target,
                reference: case.reference.clone(),
                gold_labels: case.gold_labels.clone(),
                candidates,
            })
        })
        .collect()
}

/// Replaces every example's candidates with the model's top beam
/// hypotheses, put in quality order.
pub fn refresh_candidates(
    model: &ToyModel,
    examples: &mut [Example],
    count: usize,
    max_len: usize,
    scorer: &Scorer,
    exec: Exec,
) -> Result<()> {
    let fresh = parallel::map(examples, exec, |ex| -> Result<Vec<Vec<u32>>> {
        // Wider beam so that dropping empty outputs still leaves `count`.
        let hyps = decode::nbest(model, &ex.input, max_len, 2 * count)?;
        let outputs: Vec<Vec<u32>> = hyps
            .into_iter()
            .map(|h| h.tokens)
            .filter(|t| !t.is_empty())
            .take(count)
            .collect();
        if outputs.len() < 2 {
            return Err(Error::InvalidCase {
                id: ex.id.clone(),
                message: "fewer than 2 non-empty candidates".into(),
            });
        }
        let cands: Vec<Candidate> = outputs.iter().map(|t| Candidate::new(model.vocab.decode(t))).collect();
        let ranked = order_candidates(&cands, &ex.reference, ex.gold_labels.as_ref(), scorer)?;
        Ok(ranked.order().into_iter().map(|i| outputs[i].clone()).collect())
    });
    for (ex, cands) in examples.iter_mut().zip(fresh) {
        ex.candidates = cands?;
    }
    Ok(())
}

/// `sequence_logprob / |candidate|^alpha`
pub fn candidate_score(model: &ToyModel, input: &[u32], candidate: &[u32], alpha: f64) -> Result<f64> {
    let lp = model.sequence_logprob(input, candidate)?;
    Ok(lp / (candidate.len() as f64).powf(alpha))
}

/// Ranking loss of an example's candidates under the model.
pub fn example_ranking_loss(model: &ToyModel, ex: &Example, config: &TrainConfig) -> Result<f64> {
    let scores = candidate_scores(model, ex, config.length_alpha)?;
    ranking_loss(&scores, &config.margin)
}

fn candidate_scores(model: &ToyModel, ex: &Example, alpha: f64) -> Result<Vec<f64>> {
    if ex.candidates.len() < 2 {
        return Err(Error::InvalidCase {
            id: ex.id.clone(),
            message: format!("combined mode needs >= 2 candidates, got {}", ex.candidates.len()),
        });
    }
    ex.candidates
        .iter()
        .map(|c| candidate_score(model, &ex.input, c, alpha))
        .collect()
}

/// Adds `scale * d ranking_loss / d theta` into `grad`, given the scores
/// already computed for `ex`.
fn accumulate_ranking_grad(
    model: &ToyModel,
    ex: &Example,
    scores: &[f64],
    config: &TrainConfig,
    scale: f64,
    grad: &mut Params,
) -> Result<()> {
    let dscores = ranking_loss_grad(scores, &config.margin)?;
    for (cand, ds) in ex.candidates.iter().zip(dscores) {
        if ds != 0.0 {
            let norm = (cand.len() as f64).powf(config.length_alpha);
            model.accumulate_logprob_grad(&ex.input, cand, scale * ds / norm, grad);
        }
    }
    Ok(())
}

/// Ranking loss of `ex` and its gradient.
pub fn ranking_loss_and_grad(
    model: &ToyModel,
    ex: &Example,
    config: &TrainConfig,
) -> Result<(f64, Params)> {
    let scores = candidate_scores(model, ex, config.length_alpha)?;
    let loss = ranking_loss(&scores, &config.margin)?;
    let mut grad = model.params.zeros_like();
    accumulate_ranking_grad(model, ex, &scores, config, 1.0, &mut grad)?;
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over all cases, measured before each batch update.
    pub mean_ce: f64,
    /// Mean ranking loss, in selective combined epochs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ranking: Option<f64>,
    /// Selected cases over batch size, averaged over batches.
    pub selected_fraction: f64,
    /// Mean ROUGE-1 F of greedy outputs per held-out group after the epoch.
    pub heldout_rouge1: BTreeMap<String, f64>,
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[epoch as u64]));
    order.shuffle(&mut rng);
    order
}

fn sgd_step(model: &mut ToyModel, grad: &Params, lr: f64) {
    model.params.add_scaled(grad, -lr);
}

/// One pass over `examples` in seeded batches: per-case losses, top-gamma
/// selection, gradient averaged over the selected cases, one SGD step per
/// batch. Selected cases are accumulated in batch order.
///
/// `heldout` examples with a group are decoded greedily after the epoch to
/// fill the per-group ROUGE-1 summary.
pub fn train_epoch(
    model: &mut ToyModel,
    examples: &[Example],
    config: &TrainConfig,
    epoch: usize,
    heldout: &[Example],
) -> Result<EpochStats> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    let selective = epoch >= config.warmup_epochs;
    let selection = if selective {
        config.selection
    } else {
        config.vanilla().selection
    };
    let combined = selection.mode == SelectionMode::Combined;
    if combined {
        if let Some(ex) = examples.iter().find(|e| e.candidates.len() < 2) {
            return Err(Error::InvalidCase {
                id: ex.id.clone(),
                message: format!("combined mode needs >= 2 candidates, got {}", ex.candidates.len()),
            });
        }
    }
    let order = epoch_order(examples.len(), config.seed, epoch);
    let mut grad = model.params.zeros_like();
    let mut ce_total = 0.0;
    let mut ranking_total = 0.0;
    let mut fraction_total = 0.0;
    let mut batches = 0usize;
    for batch in order.chunks(config.batch_size) {
        let mut ce = Vec::with_capacity(batch.len());
        for &i in batch {
            ce.push(model.ce_loss(&examples[i].input, &examples[i].target)?);
        }
        let mut scores = Vec::new();
        let mut ranking = Vec::new();
        if combined {
            for &i in batch {
                let s = candidate_scores(model, &examples[i], config.length_alpha)?;
                ranking.push(ranking_loss(&s, &config.margin)?);
                scores.push(s);
            }
        }
        let keys: Vec<&str> = batch.iter().map(|&i| examples[i].id.as_str()).collect();
        let mut chosen = select_indices(&keys, &ce, combined.then_some(ranking.as_slice()), &selection)?;
        chosen.sort_unstable();
        let scale = 1.0 / chosen.len() as f64;
        grad.fill_zero();
        for &pos in &chosen {
            let ex = &examples[batch[pos]];
            model.accumulate_ce_grad(&ex.input, &ex.target, scale, &mut grad)?;
            if combined {
                let w = selection.ranking_weight;
                accumulate_ranking_grad(model, ex, &scores[pos], config, scale * w, &mut grad)?;
            }
        }
        sgd_step(model, &grad, config.learning_rate);
        if !model.params.all_finite() {
            return Err(Error::NonFinite(batches));
        }
        ce_total += ce.iter().sum::<f64>();
        ranking_total += ranking.iter().sum::<f64>();
        fraction_total += chosen.len() as f64 / batch.len() as f64;
        batches += 1;
    }
    let n = examples.len() as f64;
    Ok(EpochStats {
        epoch,
        mean_ce: ce_total / n,
        mean_ranking: combined.then(|| ranking_total / n),
        selected_fraction: fraction_total / batches as f64,
        heldout_rouge1: group_rouge1(model, heldout, config.max_len, 1, Exec::Sequential)?,
    })
}

/// Plain minibatch SGD on cross-entropy over every case, with the same
/// batch order as [`train_epoch`]. Returns the mean pre-update CE.
pub fn train_epoch_vanilla(
    model: &mut ToyModel,
    examples: &[Example],
    config: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    let order = epoch_order(examples.len(), config.seed, epoch);
    let mut grad = model.params.zeros_like();
    let mut total = 0.0;
    for batch in order.chunks(config.batch_size) {
        grad.fill_zero();
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let ex = &examples[i];
            total += model.accumulate_ce_grad(&ex.input, &ex.target, scale, &mut grad)?;
        }
        sgd_step(model, &grad, config.learning_rate);
    }
    Ok(total / examples.len() as f64)
}

/// Decodes every example and returns its output tokens.
pub(crate) fn decode_all(
    model: &ToyModel,
    examples: &[Example],
    max_len: usize,
    beam: usize,
    exec: Exec,
) -> Result<Vec<Vec<u32>>> {
    parallel::map(examples, exec, |ex| decode::generate(model, &ex.input, max_len, beam))
        .into_iter()
        .collect()
}

fn group_rouge1(
    model: &ToyModel,
    examples: &[Example],
    max_len: usize,
    beam: usize,
    exec: Exec,
) -> Result<BTreeMap<String, f64>> {
    let outputs = decode_all(model, examples, max_len, beam, exec)?;
    let cfg = MetricConfig::default();
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (ex, out) in examples.iter().zip(outputs) {
        let Some(group) = &ex.group else { continue };
        let cand = tokenize(&model.vocab.decode(&out), &cfg);
        let reference = tokenize(&ex.reference, &cfg);
        let f = rouge_n(&cand, std::slice::from_ref(&reference), 1).f;
        let slot = sums.entry(group.clone()).or_default();
        slot.0 += f;
        slot.1 += 1;
    }
    Ok(sums.into_iter().map(|(g, (s, n))| (g, s / n as f64)).collect())
}
