//! Beam search decoding.

use std::cmp::Ordering;

use super::{Step, ToyModel, BOS, EOS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Output tokens without the end token.
    pub tokens: Vec<u32>,
    /// Log-probability including the end token when `finished`.
    pub logprob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability per emitted position, counting the end token.
    fn normalized(&self) -> f64 {
        let n = self.tokens.len() + usize::from(self.finished);
        if n == 0 {
            0.0
        } else {
            self.logprob / n as f64
        }
    }
}

/// Up to `beam` hypotheses, best first by length-normalized log-probability.
///
/// Ties among expansions go to the lower parent rank, then the lower token
/// index, so `beam = 1` is greedy argmax decoding.
pub fn nbest(model: &ToyModel, input: &[u32], max_len: usize, beam: usize) -> Result<Vec<Hypothesis>> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    if beam == 0 {
        return Err(Error::InvalidArgument("beam must be at least 1".into()));
    }
    let pooled = model.pool(input);
    let mut step = Step::new(model);
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        // (logprob, parent rank, token)
        let mut expansions: Vec<(f64, usize, u32)> = Vec::new();
        for (rank, hyp) in alive.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let lse = model.forward(&pooled, prev, &mut step);
            for (tok, z) in step.logits.iter().enumerate() {
                if tok as u32 == BOS {
                    continue;
                }
                expansions.push((hyp.logprob + z - lse, rank, tok as u32));
            }
        }
        expansions.sort_by(|a, b| match b.0.total_cmp(&a.0) {
            Ordering::Equal => (a.1, a.2).cmp(&(b.1, b.2)),
            other => other,
        });
        let mut next = Vec::with_capacity(beam);
        for (logprob, rank, tok) in expansions.into_iter().take(beam) {
            let mut tokens = alive[rank].tokens.clone();
            if tok == EOS {
                finished.push(Hypothesis {
                    tokens,
                    logprob,
                    finished: true,
                });
            } else {
                tokens.push(tok);
                next.push(Hypothesis {
                    tokens,
                    logprob,
                    finished: false,
                });
            }
        }
        alive = next;
        if finished.len() >= beam || alive.is_empty() {
            break;
        }
    }
    // Hypotheses still open at max_len are kept as truncated outputs.
    finished.extend(alive);
    finished.sort_by(|a, b| b.normalized().total_cmp(&a.normalized()));
    finished.truncate(beam);
    Ok(finished)
}

/// Best beam hypothesis, at most `max_len` tokens long.
pub fn generate(model: &ToyModel, input: &[u32], max_len: usize, beam: usize) -> Result<Vec<u32>> {
    let mut best = nbest(model, input, max_len, beam)?;
    Ok(best.swap_remove(0).tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toymodel::{init_model, Vocab};

    fn greedy(model: &ToyModel, input: &[u32], max_len: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut prev = BOS;
        for _ in 0..max_len {
            let p = model.next_distribution(input, prev);
            let mut best = EOS;
            for tok in 1..p.len() {
                if p[tok] > p[best as usize] {
                    best = tok as u32;
                }
            }
            if best == EOS {
                break;
            }
            out.push(best);
            prev = best;
        }
        out
    }

    #[test]
    fn beam_one_is_greedy() {
        let vocab = Vocab::new(["a", "b", "c", "d", "e", "f"]);
        for seed in 0..20 {
            let m = init_model(vocab.clone(), vocab.clone(), 4, seed).unwrap();
            let input = [3, 5, 7];
            assert_eq!(generate(&m, &input, 12, 1).unwrap(), greedy(&m, &input, 12));
        }
    }

    #[test]
    fn respects_max_len() {
        let vocab = Vocab::new(["a", "b", "c"]);
        let m = init_model(vocab.clone(), vocab, 3, 5).unwrap();
        for max_len in 1..6 {
            for beam in 1..4 {
                for h in nbest(&m, &[3], max_len, beam).unwrap() {
                    assert!(h.tokens.len() <= max_len);
                }
            }
        }
        assert!(generate(&m, &[3], 0, 1).is_err());
        assert!(generate(&m, &[3], 3, 0).is_err());
    }

    #[test]
    fn nbest_is_sorted_and_bounded() {
        let vocab = Vocab::new(["a", "b", "c", "d"]);
        let m = init_model(vocab.clone(), vocab, 3, 9).unwrap();
        let hyps = nbest(&m, &[4], 6, 4).unwrap();
        assert!(!hyps.is_empty() && hyps.len() <= 4);
        for w in hyps.windows(2) {
            assert!(w[0].normalized() >= w[1].normalized());
        }
    }
}
