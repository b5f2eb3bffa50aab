//! Edit distance and character error rate.

use crate::decoder::VocabSpec;
use crate::error::{Error, Result};

/// Levenshtein distance with unit insertion, deletion and substitution costs.
pub fn edit_distance<X: PartialEq>(a: &[X], b: &[X]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn strip(ids: &[usize], vocab: &VocabSpec) -> Vec<usize> {
    ids.iter().copied().filter(|&i| !vocab.is_special(i)).collect()
}

/// Edit distance and reference length after dropping sos/eos.
pub fn errors(hyp: &[usize], reference: &[usize], vocab: &VocabSpec) -> Result<(usize, usize)> {
    let r = strip(reference, vocab);
    if r.is_empty() {
        return Err(Error::Contract("reference has no content tokens".into()));
    }
    Ok((edit_distance(&strip(hyp, vocab), &r), r.len()))
}

pub fn cer(hyp: &[usize], reference: &[usize], vocab: &VocabSpec) -> Result<f64> {
    let (e, n) = errors(hyp, reference, vocab)?;
    Ok(e as f64 / n as f64)
}

/// Total edits over total reference length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorCount {
    pub edits: usize,
    pub reference: usize,
}

impl ErrorCount {
    pub fn add(&mut self, hyp: &[usize], reference: &[usize], vocab: &VocabSpec) -> Result<()> {
        let (e, n) = errors(hyp, reference, vocab)?;
        self.edits += e;
        self.reference += n;
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        if self.reference == 0 {
            0.0
        } else {
            self.edits as f64 / self.reference as f64
        }
    }
}
