use std::collections::HashMap;

use super::tokens;

const MAX_ORDER: usize = 4;

pub(crate) fn ngram_counts<'a>(toks: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and hypothesis n-gram total for one order.
pub(crate) fn clipped_overlap(reference: &[&str], hypothesis: &[&str], n: usize) -> (usize, usize) {
    let r = ngram_counts(reference, n);
    let h = ngram_counts(hypothesis, n);
    let matched = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, hypothesis.len().saturating_sub(n - 1))
}

/// Sentence BLEU, uniform weights over orders 1–4.
///
/// A modified precision with no matches is replaced by `1 / (2·|hyp|)`. An
/// order longer than both sentences has nothing to match and counts as 1, so
/// identical short sentences still score 1. Brevity penalty `exp(1 − r/c)` when
/// the hypothesis is shorter than the reference. Empty hypothesis or
/// reference scores 0.
pub fn bleu(reference: &str, hypothesis: &str) -> f64 {
    let r = tokens(reference);
    let h = tokens(hypothesis);
    if h.is_empty() || r.is_empty() {
        return 0.0;
    }
    let floor = 1.0 / (2.0 * h.len() as f64);
    let log_precision: f64 = (1..=MAX_ORDER)
        .map(|n| {
            let (matched, total) = clipped_overlap(&r, &h, n);
            let p = if total == 0 && r.len() < n {
                1.0
            } else if matched == 0 {
                floor
            } else {
                matched as f64 / total as f64
            };
            p.ln()
        })
        .sum::<f64>()
        / MAX_ORDER as f64;
    let (c, rl) = (h.len() as f64, r.len() as f64);
    let bp = if c < rl { (1.0 - rl / c).exp() } else { 1.0 };
    (bp * log_precision.exp()).clamp(0.0, 1.0)
}
