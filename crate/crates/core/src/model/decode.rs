use std::cmp::Ordering;

use super::{PjxModel, BOS, EOS, PAD};
use crate::error::{PjxError, Result};
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    /// Keeps the `k` best partial sequences by summed log-probability.
    Beam(usize),
}

#[derive(Clone, Debug)]
struct Hypothesis {
    tokens: Vec<usize>,
    logprobs: Vec<f64>,
    score: f64,
    h: Tensor,
    c: Tensor,
    done: bool,
}

fn ln(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE).ln()
}

/// PAD and BOS are never emitted.
fn emittable(tok: usize) -> bool {
    tok != PAD && tok != BOS
}

fn better(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

impl PjxModel {
    fn step_values(&self, fused: &Tensor, prev: usize, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor, Vec<f64>)> {
        let mut g = Graph::with_params(&self.params);
        let f = g.constant(fused.clone());
        let hv = g.constant(h.clone());
        let cv = g.constant(c.clone());
        let (nh, nc, probs) = self.decoder_step(&mut g, f, prev, hv, cv)?;
        Ok((g.value(nh), g.value(nc), g.data(probs).to_vec()))
    }

    /// Generates a justification from the fused feature. Returns the emitted
    /// ids (BOS and EOS stripped) and the log-probability of every emitted
    /// token, EOS included when it was produced.
    pub fn decode_explanation(
        &self,
        fused: &Tensor,
        mode: DecodeMode,
        max_len: usize,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        if max_len == 0 {
            return Err(PjxError::Parameter("max_len must be at least 1".into()));
        }
        match mode {
            DecodeMode::Greedy => self.greedy(fused, max_len),
            DecodeMode::Beam(0) => Err(PjxError::Parameter("beam width must be at least 1".into())),
            DecodeMode::Beam(k) => self.beam(fused, k, max_len),
        }
    }

    fn greedy(&self, fused: &Tensor, max_len: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let hd = self.config.decoder_hidden;
        let (mut h, mut c) = (Tensor::zeros(&[1, hd]), Tensor::zeros(&[1, hd]));
        let mut prev = BOS;
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        for _ in 0..max_len {
            let (nh, nc, probs) = self.step_values(fused, prev, &h, &c)?;
            (h, c) = (nh, nc);
            let mut best = None::<usize>;
            for (tok, &p) in probs.iter().enumerate() {
                if emittable(tok) && best.map_or(true, |b| p > probs[b]) {
                    best = Some(tok);
                }
            }
            let tok = best.expect("vocabulary has emittable tokens");
            logprobs.push(ln(probs[tok]));
            if tok == EOS {
                break;
            }
            tokens.push(tok);
            prev = tok;
        }
        Ok((tokens, logprobs))
    }

    fn beam(&self, fused: &Tensor, k: usize, max_len: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let hd = self.config.decoder_hidden;
        let mut beam = vec![Hypothesis {
            tokens: Vec::new(),
            logprobs: Vec::new(),
            score: 0.0,
            h: Tensor::zeros(&[1, hd]),
            c: Tensor::zeros(&[1, hd]),
            done: false,
        }];
        for _ in 0..max_len {
            if beam.iter().all(|hyp| hyp.done) {
                break;
            }
            let mut candidates = Vec::new();
            for hyp in &beam {
                if hyp.done {
                    candidates.push(hyp.clone());
                    continue;
                }
                let prev = hyp.tokens.last().copied().unwrap_or(BOS);
                let (h, c, probs) = self.step_values(fused, prev, &hyp.h, &hyp.c)?;
                let mut order: Vec<usize> = (0..probs.len()).filter(|&t| emittable(t)).collect();
                order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
                for &tok in order.iter().take(k) {
                    let mut next = Hypothesis {
                        tokens: hyp.tokens.clone(),
                        logprobs: hyp.logprobs.clone(),
                        score: hyp.score + ln(probs[tok]),
                        h: h.clone(),
                        c: c.clone(),
                        done: tok == EOS,
                    };
                    next.logprobs.push(ln(probs[tok]));
                    if tok != EOS {
                        next.tokens.push(tok);
                    }
                    candidates.push(next);
                }
            }
            candidates.sort_by(better);
            candidates.truncate(k);
            beam = candidates;
        }
        beam.sort_by(better);
        let best = beam.into_iter().next().expect("beam is never empty");
        Ok((best.tokens, best.logprobs))
    }
}
