//! Text similarity metrics.
//!
//! All metrics return values in `[0, 1]`. Word-level metrics tokenise on
//! whitespace.

mod bleu;
mod meteor;
mod report;
mod rouge;

use serde::{Deserialize, Serialize};

pub use bleu::bleu;
pub use meteor::{meteor_alignment, meteor_lite, MeteorAlignment};
pub use report::{
    render_table, score_transcripts, score_transcripts_with, MetricName, MetricReport, MetricSummary, ScoreTarget,
    SentenceScores,
};
pub use rouge::{rouge_l, rouge_n};

pub(crate) fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Length of the longest common subsequence of two sequences.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// How matching characters are counted for [`char_accuracy_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharAlignment {
    /// Longest common subsequence: the optimal non-contiguous alignment.
    #[default]
    Lcs,
    /// Ratcliff/Obershelp: longest common block, then recurse on both sides.
    MatchingBlocks,
}

/// `2·|M| / (|s1| + |s2|)` with `|M|` the LCS length; 1.0 when both are empty.
pub fn char_accuracy(s1: &str, s2: &str) -> f64 {
    char_accuracy_with(s1, s2, CharAlignment::Lcs)
}

pub fn char_accuracy_with(s1: &str, s2: &str, mode: CharAlignment) -> f64 {
    let a: Vec<char> = s1.chars().collect();
    let b: Vec<char> = s2.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let matched = match mode {
        CharAlignment::Lcs => lcs_len(&a, &b),
        CharAlignment::MatchingBlocks => matching_blocks_len(&a, &b),
    };
    2.0 * matched as f64 / (a.len() + b.len()) as f64
}

fn matching_blocks_len(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // Longest common substring; earliest in `a`, then earliest in `b`.
    let (mut best, mut best_i, mut best_j) = (0, 0, 0);
    let mut prev = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            if ca == cb {
                cur[j + 1] = prev[j] + 1;
                if cur[j + 1] > best {
                    best = cur[j + 1];
                    best_i = i + 1 - best;
                    best_j = j + 1 - best;
                }
            }
        }
        prev = cur;
    }
    if best == 0 {
        return 0;
    }
    best + matching_blocks_len(&a[..best_i], &b[..best_j])
        + matching_blocks_len(&a[best_i + best..], &b[best_j + best..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_accuracy_examples() {
        assert_eq!(char_accuracy("abc", "abc"), 1.0);
        assert_eq!(char_accuracy("abc", ""), 0.0);
        assert_eq!(char_accuracy("", ""), 1.0);
        assert_eq!(char_accuracy("abcd", "axcd"), 0.75);
    }

    #[test]
    fn matching_blocks_can_undercount_lcs() {
        // Block "ba" is taken first and leaves nothing alignable on either
        // side; the LCS "acc" is longer.
        let (a, b) = ("bbabcc", "aaccba");
        assert_eq!(char_accuracy(a, b), 0.5);
        assert_eq!(char_accuracy_with(a, b, CharAlignment::MatchingBlocks), 4.0 / 12.0);
        assert_eq!(char_accuracy_with("abc", "abc", CharAlignment::MatchingBlocks), 1.0);
        assert_eq!(char_accuracy_with("", "", CharAlignment::MatchingBlocks), 1.0);
    }
}
