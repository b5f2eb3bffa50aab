//! Beam search with length limits tied to the encoder output length.
//!
//! With `T'` encoder frames, a hypothesis may emit eos only once it holds
//! at least `ceil(min_ratio * T')` content tokens and must emit eos when it
//! reaches `ceil(max_ratio * T')`. sos is never proposed. A finished
//! hypothesis scores `sum log p (eos included) + penalty * content_len`.
//! Ties prefer the lexicographically smaller token sequence, then the
//! hypothesis that finished first.

use std::cmp::Ordering;

use crate::attention::AttentionKind;
use crate::decoder::DecoderState;
use crate::encoder::FeatureSequence;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::kv::KeyValues;
use crate::model::Model;
use crate::real::Real;
use crate::tensor::log_softmax;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Bonus per content token added to finished scores.
    pub penalty: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam: 20,
            min_ratio: 0.1,
            max_ratio: 0.5,
            penalty: 0.1,
        }
    }
}

impl BeamConfig {
    pub const KEYS: &'static [&'static str] =
        &["beam.size", "beam.min_ratio", "beam.max_ratio", "beam.penalty"];

    pub fn with_beam(beam: usize) -> Self {
        BeamConfig {
            beam,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        if !(self.min_ratio > 0.0 && self.min_ratio <= self.max_ratio && self.max_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "length ratios need 0 < min <= max, got {} and {}",
                self.min_ratio, self.max_ratio
            )));
        }
        if !self.penalty.is_finite() {
            return Err(Error::Config("length penalty must be finite".into()));
        }
        Ok(())
    }

    /// `(min_len, max_len)` in content tokens for `frames` encoder frames.
    pub fn length_limits(&self, frames: usize) -> (usize, usize) {
        let lim = |r: f64| (r * frames as f64).ceil() as usize;
        (lim(self.min_ratio), lim(self.max_ratio).max(1))
    }

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.read_into("beam.size", &mut self.beam)?;
        kv.read_into("beam.min_ratio", &mut self.min_ratio)?;
        kv.read_into("beam.max_ratio", &mut self.max_ratio)?;
        kv.read_into("beam.penalty", &mut self.penalty)?;
        Ok(())
    }

    pub fn write(&self, kv: &mut KeyValues) {
        kv.set("beam.size", self.beam);
        kv.set("beam.min_ratio", self.min_ratio);
        kv.set("beam.max_ratio", self.max_ratio);
        kv.set("beam.penalty", self.penalty);
    }
}

/// Attention weights of each head over the decoded steps, `[head][step][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub kinds: Vec<AttentionKind>,
    pub weights: Vec<Vec<Vec<f64>>>,
}

impl AttentionTrace {
    pub fn heads(&self) -> usize {
        self.weights.len()
    }

    pub fn steps(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Largest deviation of any row sum from 1, or `None` if a weight is
    /// negative or non-finite.
    pub fn max_row_error(&self) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for row in self.weights.iter().flatten() {
            if row.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                return None;
            }
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        Some(worst)
    }
}

#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// Content tokens, without sos or eos.
    pub tokens: Vec<usize>,
    /// Sum of log probabilities of the emitted tokens.
    pub log_prob: f64,
    /// Running log probability after each emitted token.
    pub prefix_scores: Vec<f64>,
    pub state: DecoderState,
    pub finished: bool,
    /// Per step, the attention weights of each head.
    weights: Vec<Vec<Var>>,
    finish_round: usize,
}

#[derive(Debug, Clone)]
pub struct BeamResult {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// `log_prob + penalty * tokens.len()`.
    pub score: f64,
    pub prefix_scores: Vec<f64>,
    pub trace: AttentionTrace,
}

fn rank(a_score: f64, a_tokens: &[usize], a_round: usize, b_score: f64, b_tokens: &[usize], b_round: usize) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then_with(|| a_tokens.cmp(b_tokens))
        .then_with(|| a_round.cmp(&b_round))
}

/// Allowed next tokens for a hypothesis holding `len` content tokens.
fn allowed(len: usize, limits: (usize, usize), vocab_size: usize, sos: usize, eos: usize) -> impl Iterator<Item = usize> {
    let (min_len, max_len) = limits;
    (0..vocab_size).filter(move |&c| {
        if c == sos {
            false
        } else if c == eos {
            len >= min_len
        } else {
            len < max_len
        }
    })
}

fn finish<T: Real>(g: &Graph<'_, T>, model: &Model<T>, best: Hypothesis, penalty: f64) -> BeamResult {
    let heads = model.decoder.heads.len();
    let weights = (0..heads)
        .map(|n| {
            best.weights
                .iter()
                .map(|step| g.value(step[n]).data().iter().map(|&w| w.to_f64()).collect())
                .collect()
        })
        .collect();
    BeamResult {
        score: best.log_prob + penalty * best.tokens.len() as f64,
        tokens: best.tokens,
        log_prob: best.log_prob,
        prefix_scores: best.prefix_scores,
        trace: AttentionTrace {
            kinds: model.config.decoder.kinds.clone(),
            weights,
        },
    }
}

pub fn beam_search<T: Real>(model: &Model<T>, x: &FeatureSequence<T>, config: &BeamConfig) -> Result<BeamResult> {
    config.validate()?;
    let vocab = model.vocab();
    let (sos, eos, v) = (vocab.sos(), vocab.eos(), vocab.size());
    let mut g = Graph::with_params(&model.store);
    let session = model.begin(&mut g, x)?;
    let limits = config.length_limits(session.frames);

    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        prefix_scores: Vec::new(),
        state: session.state,
        finished: false,
        weights: Vec::new(),
        finish_round: 0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut round = 0;
    while !live.is_empty() {
        round += 1;
        struct Candidate {
            score: f64,
            tokens: Vec<usize>,
            hyp: usize,
            token: usize,
        }
        let mut outputs = Vec::with_capacity(live.len());
        let mut candidates = Vec::new();
        for (h, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(sos);
            let out = model.decoder.step(&mut g, &session.memory, prev, &hyp.state)?;
            let logp = log_softmax(g.value(out.logits).data());
            for c in allowed(hyp.tokens.len(), limits, v, sos, eos) {
                let mut tokens = hyp.tokens.clone();
                if c != eos {
                    tokens.push(c);
                }
                candidates.push(Candidate {
                    score: hyp.log_prob + logp[c].to_f64(),
                    tokens,
                    hyp: h,
                    token: c,
                });
            }
            outputs.push(out);
        }
        candidates.sort_by(|a, b| rank(a.score, &a.tokens, 0, b.score, &b.tokens, 0));
        candidates.truncate(config.beam);

        let mut next = Vec::with_capacity(candidates.len());
        for cand in candidates {
            let parent = &live[cand.hyp];
            let out = &outputs[cand.hyp];
            let mut weights = parent.weights.clone();
            weights.push(out.weights.clone());
            let mut prefix_scores = parent.prefix_scores.clone();
            prefix_scores.push(cand.score);
            let hyp = Hypothesis {
                tokens: cand.tokens,
                log_prob: cand.score,
                prefix_scores,
                state: out.state.clone(),
                finished: cand.token == eos,
                weights,
                finish_round: round,
            };
            if hyp.finished {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        live = next;
    }

    let penalty = config.penalty;
    let final_score = |h: &Hypothesis| h.log_prob + penalty * h.tokens.len() as f64;
    let best = finished
        .into_iter()
        .min_by(|a, b| rank(final_score(a), &a.tokens, a.finish_round, final_score(b), &b.tokens, b.finish_round))
        .ok_or_else(|| Error::Contract("beam search finished no hypothesis".into()))?;
    Ok(finish(&g, model, best, penalty))
}

/// Picks the most probable allowed token at every step, lowest id on ties.
pub fn greedy_search<T: Real>(model: &Model<T>, x: &FeatureSequence<T>, config: &BeamConfig) -> Result<BeamResult> {
    config.validate()?;
    let vocab = model.vocab();
    let (sos, eos, v) = (vocab.sos(), vocab.eos(), vocab.size());
    let mut g = Graph::with_params(&model.store);
    let session = model.begin(&mut g, x)?;
    let limits = config.length_limits(session.frames);
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        prefix_scores: Vec::new(),
        state: session.state,
        finished: false,
        weights: Vec::new(),
        finish_round: 0,
    };
    while !hyp.finished {
        let prev = hyp.tokens.last().copied().unwrap_or(sos);
        let out = model.decoder.step(&mut g, &session.memory, prev, &hyp.state)?;
        let logp = log_softmax(g.value(out.logits).data());
        let mut best: Option<usize> = None;
        for c in allowed(hyp.tokens.len(), limits, v, sos, eos) {
            if best.is_none_or(|b| logp[c] > logp[b]) {
                best = Some(c);
            }
        }
        let c = best.expect("eos or a content token is always allowed");
        hyp.log_prob += logp[c].to_f64();
        hyp.prefix_scores.push(hyp.log_prob);
        hyp.weights.push(out.weights);
        hyp.state = out.state;
        if c == eos {
            hyp.finished = true;
        } else {
            hyp.tokens.push(c);
        }
    }
    Ok(finish(&g, model, hyp, config.penalty))
}

/// One `id<TAB>text` line per decoded utterance.
pub fn format_decodes<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut out = String::new();
    for (id, text) in rows {
        out.push_str(id);
        out.push('\t');
        out.push_str(text);
        out.push('\n');
    }
    out
}
