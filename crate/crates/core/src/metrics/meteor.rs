//! METEOR without the synonym stage: exact matches first, then Porter-stem
//! matches among the still-unaligned tokens.

use std::collections::BTreeMap;

use super::tokens;

/// Above this many candidate alignments per stage the search falls back to
/// pairing occurrences in order, which is chunk-optimal for the common case
/// of repeated words appearing in the same relative order.
const MAX_ENUMERATED: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeteorAlignment {
    pub exact_matches: usize,
    pub stem_matches: usize,
    pub chunks: usize,
}

impl MeteorAlignment {
    pub fn matches(&self) -> usize {
        self.exact_matches + self.stem_matches
    }
}

type Pair = (usize, usize); // (hyp index, ref index)

fn count_chunks(pairs: &[Pair]) -> usize {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    sorted
        .iter()
        .enumerate()
        .filter(|&(i, &(h, r))| i == 0 || sorted[i - 1] != (h - 1, r.wrapping_sub(1)))
        .count()
}

/// Every injective pairing that matches `min(|hyp|, |ref|)` positions.
fn assignments(hyp: &[usize], refs: &[usize]) -> Vec<Vec<Pair>> {
    fn go(
        left: &[usize],
        right: &[usize],
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        let Some((&l, rest)) = left.split_first() else {
            out.push(cur.clone());
            return;
        };
        for (j, &r) in right.iter().enumerate() {
            if !used[j] {
                used[j] = true;
                cur.push((l, r));
                go(rest, right, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let flip = hyp.len() > refs.len();
    let (left, right) = if flip { (refs, hyp) } else { (hyp, refs) };
    let mut out = Vec::new();
    go(left, right, &mut vec![false; right.len()], &mut Vec::new(), &mut out);
    if flip {
        for a in &mut out {
            for p in a.iter_mut() {
                *p = (p.1, p.0);
            }
        }
    }
    out
}

fn falling_factorial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i))
}

/// Aligns tokens that share a key, maximising matches and then minimising the
/// chunk count of `fixed ∪ new`.
fn align_stage<K: Ord>(
    hyp_keys: &[Option<K>],
    ref_keys: &[Option<K>],
    fixed: &[Pair],
) -> Vec<Pair> {
    let mut groups: BTreeMap<&K, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, k) in hyp_keys.iter().enumerate() {
        if let Some(k) = k {
            groups.entry(k).or_default().0.push(i);
        }
    }
    for (j, k) in ref_keys.iter().enumerate() {
        if let Some(k) = k {
            if let Some(g) = groups.get_mut(k) {
                g.1.push(j);
            }
        }
    }
    let groups: Vec<(Vec<usize>, Vec<usize>)> = groups
        .into_values()
        .filter(|(h, r)| !h.is_empty() && !r.is_empty())
        .collect();

    let total = groups.iter().fold(1usize, |acc, (h, r)| {
        let (big, small) = (h.len().max(r.len()), h.len().min(r.len()));
        acc.saturating_mul(falling_factorial(big, small))
    });
    if total > MAX_ENUMERATED {
        return groups
            .iter()
            .flat_map(|(h, r)| h.iter().copied().zip(r.iter().copied()))
            .collect();
    }

    let options: Vec<Vec<Vec<Pair>>> = groups.iter().map(|(h, r)| assignments(h, r)).collect();
    let mut best: Option<(usize, Vec<Pair>)> = None;
    let mut cur: Vec<Pair> = fixed.to_vec();
    search(&options, &mut cur, &mut best);
    let (_, all) = best.expect("at least one assignment");
    all[fixed.len()..].to_vec()
}

fn search(options: &[Vec<Vec<Pair>>], cur: &mut Vec<Pair>, best: &mut Option<(usize, Vec<Pair>)>) {
    let Some((first, rest)) = options.split_first() else {
        let chunks = count_chunks(cur);
        if best.as_ref().is_none_or(|(c, _)| chunks < *c) {
            *best = Some((chunks, cur.clone()));
        }
        return;
    };
    for choice in first {
        let n = cur.len();
        cur.extend_from_slice(choice);
        search(rest, cur, best);
        cur.truncate(n);
    }
}

pub fn meteor_alignment(reference: &str, hypothesis: &str) -> MeteorAlignment {
    let r = tokens(reference);
    let h = tokens(hypothesis);
    let exact = align_stage(
        &h.iter().map(|t| Some(*t)).collect::<Vec<_>>(),
        &r.iter().map(|t| Some(*t)).collect::<Vec<_>>(),
        &[],
    );
    let mut hyp_used = vec![false; h.len()];
    let mut ref_used = vec![false; r.len()];
    for &(i, j) in &exact {
        hyp_used[i] = true;
        ref_used[j] = true;
    }
    let stem_keys = |toks: &[&str], used: &[bool]| -> Vec<Option<String>> {
        toks.iter()
            .zip(used)
            .map(|(t, &u)| (!u).then(|| porter_stemmer::stem(&t.to_lowercase())))
            .collect()
    };
    let stemmed = align_stage(&stem_keys(&h, &hyp_used), &stem_keys(&r, &ref_used), &exact);
    let all: Vec<Pair> = exact.iter().chain(&stemmed).copied().collect();
    MeteorAlignment {
        exact_matches: exact.len(),
        stem_matches: stemmed.len(),
        chunks: if all.is_empty() { 0 } else { count_chunks(&all) },
    }
}

/// `F·(1 − 0.5·(chunks/matches)³)` with `F = 10PR / (R + 9P)`; 0 without matches.
pub fn meteor_lite(reference: &str, hypothesis: &str) -> f64 {
    let (rl, hl) = (tokens(reference).len(), tokens(hypothesis).len());
    let a = meteor_alignment(reference, hypothesis);
    let m = a.matches();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hl as f64;
    let r = m as f64 / rl as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / m as f64).powi(3);
    (f * (1.0 - penalty)).clamp(0.0, 1.0)
}
