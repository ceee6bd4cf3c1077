use super::bleu::clipped_overlap;
use super::{lcs_len, tokens};

fn f1(overlap: usize, hyp_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / hyp_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

/// F1 over clipped n-gram overlap. When neither side has an n-gram of this
/// order the score is 1 for identical token sequences and 0 otherwise.
pub fn rouge_n(reference: &str, hypothesis: &str, n: usize) -> f64 {
    assert!(n >= 1, "rouge order must be positive");
    let r = tokens(reference);
    let h = tokens(hypothesis);
    let ref_total = r.len().saturating_sub(n - 1);
    let (overlap, hyp_total) = clipped_overlap(&r, &h, n);
    if ref_total == 0 && hyp_total == 0 {
        return if r == h { 1.0 } else { 0.0 };
    }
    f1(overlap, hyp_total, ref_total)
}

/// F1 from the token-level longest common subsequence.
pub fn rouge_l(reference: &str, hypothesis: &str) -> f64 {
    let r = tokens(reference);
    let h = tokens(hypothesis);
    if r.is_empty() && h.is_empty() {
        return 1.0;
    }
    f1(lcs_len(&r, &h), h.len(), r.len())
}
