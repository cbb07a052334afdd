//! A small conditional next-token model with hand-written gradients.
//!
//! The input text is pooled into one vector (mean of input embeddings). Each
//! output step combines it with the embedding of the previous output token:
//!
//! ```text
//! h_t = tanh(pool(input) + E[prev_t])
//! p_t = softmax(W h_t + b)
//! ```
//!
//! That is enough for teacher-forced cross-entropy, candidate sequence
//! scoring and beam decoding without a tensor library.

mod decode;
mod experiment;
mod train;

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{tokenize, MetricConfig};

pub use decode::{generate, nbest, Hypothesis};
pub use experiment::{
    run_bias_experiment, run_seed, ExperimentConfig, ExperimentResult, ExperimentSummary,
    Interval, SeedRun,
};
pub use train::{
    build_examples, candidate_score, example_ranking_loss, ranking_loss_and_grad,
    refresh_candidates, train_epoch, train_epoch_vanilla, EpochStats, Example, TrainConfig,
};

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const UNK: u32 = 2;
pub const RESERVED: [&str; 3] = ["<bos>", "<eos>", "<unk>"];

/// Token list with the three reserved entries first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Reserved tokens followed by `words` in first-seen order, duplicates
    /// dropped.
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        for w in words {
            let w = w.as_ref();
            if !index.contains_key(w) {
                index.insert(w.to_string(), tokens.len() as u32);
                tokens.push(w.to_string());
            }
        }
        Self { tokens, index }
    }

    /// Collects every token of `texts` under the default metric tokenizer.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let cfg = MetricConfig::default();
        let mut words = Vec::new();
        for t in texts {
            words.extend(tokenize(t, &cfg).tokens().iter().cloned());
        }
        Self::new(words)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokenizes with the default metric tokenizer and maps to ids.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text, &MetricConfig::default())
            .tokens()
            .iter()
            .map(|t| self.id(t))
            .collect()
    }

    /// Joins non-reserved tokens with spaces.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&i| i > UNK)
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Model parameters, or a gradient of the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub input_size: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Input embeddings, `input_size x embed_dim`, pooled by mean.
    pub input: Vec<f64>,
    /// Previous-token embeddings, `vocab_size x embed_dim`.
    pub embed: Vec<f64>,
    /// Output projection, `vocab_size x embed_dim`.
    pub proj: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Params {
    pub fn zeros(input_size: usize, vocab_size: usize, embed_dim: usize) -> Self {
        let n = vocab_size * embed_dim;
        Self {
            input_size,
            vocab_size,
            embed_dim,
            input: vec![0.0; input_size * embed_dim],
            embed: vec![0.0; n],
            proj: vec![0.0; n],
            bias: vec![0.0; vocab_size],
        }
    }

    pub fn len(&self) -> usize {
        (self.input_size + 2 * self.vocab_size) * self.embed_dim + self.vocab_size
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.input, &self.embed, &self.proj, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.input, &mut self.embed, &mut self.proj, &mut self.bias]
    }

    /// Flat view across all tensors, in declaration order.
    pub fn get(&self, i: usize) -> f64 {
        let mut i = i;
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut i = i;
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = value;
                return;
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.vocab_size, self.embed_dim)
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Scratch buffers for one forward step.
pub(crate) struct Step {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Step {
    fn new(model: &ToyModel) -> Self {
        Self {
            hidden: vec![0.0; model.params.embed_dim],
            logits: vec![0.0; model.params.vocab_size],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    /// Tokens the input text is encoded with.
    pub input_vocab: Vocab,
    /// Output tokens.
    pub vocab: Vocab,
    pub params: Params,
    pub seed: u64,
}

/// Half-width of the uniform initialization.
pub const INIT_SCALE: f64 = 0.1;

/// Builds a model with parameters drawn uniformly from
/// `[-INIT_SCALE, INIT_SCALE]`.
pub fn init_model(input_vocab: Vocab, vocab: Vocab, embed_dim: usize, seed: u64) -> Result<ToyModel> {
    let mut model = zero_model(input_vocab, vocab, embed_dim)?;
    model.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.params.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-INIT_SCALE..INIT_SCALE);
        }
    }
    Ok(model)
}

/// A model whose every parameter is zero, i.e. a uniform predictor.
pub fn zero_model(input_vocab: Vocab, vocab: Vocab, embed_dim: usize) -> Result<ToyModel> {
    if vocab.len() < RESERVED.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "vocabulary needs at least {} tokens including reserved ones, got {}",
            RESERVED.len() + 1,
            vocab.len()
        )));
    }
    if embed_dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be at least 1".into()));
    }
    let params = Params::zeros(input_vocab.len(), vocab.len(), embed_dim);
    Ok(ToyModel {
        input_vocab,
        vocab,
        params,
        seed: 0,
    })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl ToyModel {
    pub fn vocab_size(&self) -> usize {
        self.params.vocab_size
    }

    pub fn embed_dim(&self) -> usize {
        self.params.embed_dim
    }

    pub fn encode_input(&self, text: &str) -> Vec<u32> {
        self.input_vocab.encode(text)
    }

    /// Mean of the input embeddings; zero for an empty input.
    pub fn pool(&self, input: &[u32]) -> Vec<f64> {
        let d = self.embed_dim();
        let mut pooled = vec![0.0; d];
        if input.is_empty() {
            return pooled;
        }
        for &tok in input {
            let row = &self.params.input[tok as usize * d..(tok as usize + 1) * d];
            for (p, r) in pooled.iter_mut().zip(row) {
                *p += r;
            }
        }
        let inv = 1.0 / input.len() as f64;
        pooled.iter_mut().for_each(|p| *p *= inv);
        pooled
    }

    /// Fills `step` for one position and returns log-sum-exp of the logits.
    pub(crate) fn forward(&self, pooled: &[f64], prev: u32, step: &mut Step) -> f64 {
        let d = self.embed_dim();
        let emb = &self.params.embed[prev as usize * d..(prev as usize + 1) * d];
        for ((h, p), e) in step.hidden.iter_mut().zip(pooled).zip(emb) {
            *h = (p + e).tanh();
        }
        for (v, logit) in step.logits.iter_mut().enumerate() {
            let row = &self.params.proj[v * d..(v + 1) * d];
            *logit = self.params.bias[v] + row.iter().zip(&step.hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        log_sum_exp(&step.logits)
    }

    /// Next-token distribution after `prev` given `input`.
    pub fn next_distribution(&self, input: &[u32], prev: u32) -> Vec<f64> {
        let pooled = self.pool(input);
        let mut step = Step::new(self);
        let lse = self.forward(&pooled, prev, &mut step);
        step.logits.iter().map(|z| (z - lse).exp()).collect()
    }

    /// Teacher-forced log-probability of exactly `output` (no end token
    /// appended), starting from BOS.
    pub fn sequence_logprob(&self, input: &[u32], output: &[u32]) -> Result<f64> {
        if output.is_empty() {
            return Err(Error::Empty("output sequence"));
        }
        let pooled = self.pool(input);
        let mut step = Step::new(self);
        let mut prev = BOS;
        let mut total = 0.0;
        for &y in output {
            let lse = self.forward(&pooled, prev, &mut step);
            total += step.logits[y as usize] - lse;
            prev = y;
        }
        Ok(total)
    }

    /// Adds `coeff * d/dtheta log p(output | input)` into `grad` and returns
    /// the log-probability.
    pub fn accumulate_logprob_grad(
        &self,
        input: &[u32],
        output: &[u32],
        coeff: f64,
        grad: &mut Params,
    ) -> f64 {
        let d = self.embed_dim();
        let pooled = self.pool(input);
        let mut step = Step::new(self);
        let mut d_pooled = vec![0.0; d];
        let mut d_hidden = vec![0.0; d];
        let mut prev = BOS;
        let mut total = 0.0;
        for &y in output {
            let lse = self.forward(&pooled, prev, &mut step);
            total += step.logits[y as usize] - lse;
            // d log p_y / d z_v = 1[v = y] - p_v
            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            for v in 0..self.vocab_size() {
                let p = (step.logits[v] - lse).exp();
                let dz = coeff * (f64::from(u8::from(v as u32 == y)) - p);
                if dz == 0.0 {
                    continue;
                }
                grad.bias[v] += dz;
                let row = v * d..(v + 1) * d;
                for ((g, h), (dh, w)) in grad.proj[row.clone()]
                    .iter_mut()
                    .zip(&step.hidden)
                    .zip(d_hidden.iter_mut().zip(&self.params.proj[row]))
                {
                    *g += dz * h;
                    *dh += dz * w;
                }
            }
            let emb_row = prev as usize * d..(prev as usize + 1) * d;
            for ((ge, dp), (dh, h)) in grad.embed[emb_row]
                .iter_mut()
                .zip(d_pooled.iter_mut())
                .zip(d_hidden.iter().zip(&step.hidden))
            {
                let da = dh * (1.0 - h * h);
                *ge += da;
                *dp += da;
            }
            prev = y;
        }
        if !input.is_empty() {
            let inv = 1.0 / input.len() as f64;
            for &tok in input {
                let row = tok as usize * d..(tok as usize + 1) * d;
                for (g, dp) in grad.input[row].iter_mut().zip(&d_pooled) {
                    *g += dp * inv;
                }
            }
        }
        total
    }

    /// Mean per-token negative log-likelihood of `target` followed by EOS.
    pub fn ce_loss(&self, input: &[u32], target: &[u32]) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::Empty("reference"));
        }
        let seq = with_eos(target);
        Ok(-self.sequence_logprob(input, &seq)? / seq.len() as f64)
    }

    /// Cross-entropy of `target` (plus EOS) and its gradient.
    pub fn ce_loss_and_grad(&self, input: &[u32], target: &[u32]) -> Result<(f64, Params)> {
        let mut grad = self.params.zeros_like();
        let loss = self.accumulate_ce_grad(input, target, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds `scale * d CE / d theta` into `grad` and returns the CE.
    pub fn accumulate_ce_grad(
        &self,
        input: &[u32],
        target: &[u32],
        scale: f64,
        grad: &mut Params,
    ) -> Result<f64> {
        if target.is_empty() {
            return Err(Error::Empty("reference"));
        }
        let seq = with_eos(target);
        let n = seq.len() as f64;
        let logprob = self.accumulate_logprob_grad(input, &seq, -scale / n, grad);
        Ok(-logprob / n)
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            input_size: self.params.input_size,
            vocab_size: self.vocab_size(),
            embed_dim: self.embed_dim(),
            seed: self.seed,
            input_vocab: self.input_vocab.tokens[RESERVED.len()..].to_vec(),
            vocab: self.vocab.tokens[RESERVED.len()..].to_vec(),
            params: self.params.clone(),
        };
        serde_json::to_writer(out, &ckpt)?;
        Ok(())
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_reader(input)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let input_vocab = Vocab::new(&ckpt.input_vocab);
        let vocab = Vocab::new(&ckpt.vocab);
        let p = &ckpt.params;
        let (ni, nv, d) = (ckpt.input_size, ckpt.vocab_size, ckpt.embed_dim);
        let consistent = input_vocab.len() == ni
            && vocab.len() == nv
            && (p.input_size, p.vocab_size, p.embed_dim) == (ni, nv, d)
            && p.input.len() == ni * d
            && p.embed.len() == nv * d
            && p.proj.len() == nv * d
            && p.bias.len() == nv;
        if !consistent {
            return Err(Error::Config("checkpoint dimensions do not match its tensors".into()));
        }
        if !p.all_finite() {
            return Err(Error::Config("checkpoint holds non-finite parameters".into()));
        }
        Ok(Self {
            input_vocab,
            vocab,
            params: ckpt.params,
            seed: ckpt.seed,
        })
    }
}

pub(crate) fn with_eos(tokens: &[u32]) -> Vec<u32> {
    let mut seq = Vec::with_capacity(tokens.len() + 1);
    seq.extend_from_slice(tokens);
    seq.push(EOS);
    seq
}

const CHECKPOINT_FORMAT: &str = "fairgen-toymodel";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    input_size: usize,
    vocab_size: usize,
    embed_dim: usize,
    seed: u64,
    input_vocab: Vec<String>,
    vocab: Vec<String>,
    params: Params,
}
