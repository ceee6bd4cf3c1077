use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};

/// Normalised sentences over `a..z`, `0..9` and single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceCorpus {
    pub sentences: Vec<String>,
    pub digit_count: usize,
    pub plain_count: usize,
}

impl SentenceCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Lowercases, drops everything outside the keystroke alphabet and collapses
/// runs of whitespace to one space. Idempotent.
pub fn normalize_sentence(line: &str) -> String {
    let kept: String = line
        .chars()
        .flat_map(char::to_lowercase)
        .filter_map(|c| match c {
            'a'..='z' | '0'..='9' => Some(c),
            c if c.is_whitespace() => Some(' '),
            _ => None,
        })
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Stratified selection of `n_digit` digit-bearing and `n_plain` digit-free
/// sentences from raw lines. The returned order is shuffled under `seed`.
pub fn select_sentences<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    n_digit: usize,
    n_plain: usize,
    seed: u64,
) -> Result<SentenceCorpus> {
    let (mut digit, mut plain): (Vec<String>, Vec<String>) = lines
        .into_iter()
        .map(normalize_sentence)
        .filter(|s| !s.is_empty())
        .partition(|s| s.chars().any(|c| c.is_ascii_digit()));
    for (stratum, pool, n) in [("digit", &digit, n_digit), ("plain", &plain, n_plain)] {
        if pool.len() < n {
            return Err(Error::InsufficientCorpus {
                stratum,
                available: pool.len(),
                requested: n,
            });
        }
    }
    digit.shuffle(&mut rng::rng(derive_seed(seed, 0)));
    plain.shuffle(&mut rng::rng(derive_seed(seed, 1)));
    let mut sentences: Vec<String> = digit
        .into_iter()
        .take(n_digit)
        .chain(plain.into_iter().take(n_plain))
        .collect();
    sentences.shuffle(&mut rng::rng(derive_seed(seed, 2)));
    Ok(SentenceCorpus {
        sentences,
        digit_count: n_digit,
        plain_count: n_plain,
    })
}

/// Reads a one-sentence-per-line UTF-8 file and selects from it.
pub fn load_corpus(
    path: impl AsRef<Path>,
    n_digit: usize,
    n_plain: usize,
    seed: u64,
) -> Result<SentenceCorpus> {
    let text = fs::read_to_string(path)?;
    select_sentences(text.lines(), n_digit, n_plain, seed)
}

/// Word list the synthetic corpus is drawn from.
pub const SYNTH_VOCABULARY: &[&str] = &[
    "the", "a", "we", "you", "they", "she", "he", "our", "my", "their", "team", "manager",
    "doctor", "student", "teacher", "driver", "family", "company", "city", "market", "train",
    "office", "meeting", "report", "project", "garden", "window", "river", "house", "school",
    "letter", "budget", "plan", "order", "price", "ticket", "flight", "hotel", "room", "table",
    "coffee", "dinner", "music", "movie", "book", "paper", "phone", "computer", "keyboard",
    "password", "message", "account", "server", "network", "printer", "camera", "will", "has",
    "have", "had", "is", "was", "were", "are", "been", "being", "visit", "visited", "finish",
    "finished", "open", "opened", "send", "sent", "call", "called", "write", "wrote", "read",
    "reading", "build", "built", "move", "moved", "check", "checked", "review", "reviewed",
    "before", "after", "during", "since", "until", "every", "each", "some", "many", "few",
    "new", "old", "large", "small", "quiet", "busy", "early", "late", "quickly", "slowly",
    "today", "tomorrow", "yesterday", "morning", "evening", "night", "week", "month", "year",
    "minutes", "hours", "days", "people", "items", "pages", "files", "in", "on", "at", "for",
    "with", "from", "to", "by", "about", "and", "but", "then",
];

/// Seeded synthetic sentences, roughly half containing a number, one per
/// line. Stands in for a real sentence corpus in tests and demos.
pub fn synth_corpus_text(seed: u64, lines: usize) -> String {
    let mut rng = rng::rng(seed);
    let mut out = String::new();
    for i in 0..lines {
        let words = rng.random_range(5..=9);
        let mut sentence: Vec<String> = (0..words)
            .map(|_| SYNTH_VOCABULARY.choose(&mut rng).unwrap().to_string())
            .collect();
        if i % 2 == 0 {
            let number = match rng.random_range(0..3) {
                0 => rng.random_range(1..10).to_string(),
                1 => rng.random_range(10..100).to_string(),
                _ => rng.random_range(1990..2031).to_string(),
            };
            let at = rng.random_range(1..=sentence.len());
            sentence.insert(at, number);
        }
        let mut line = sentence.join(" ");
        if let Some(first) = line.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        line.push('.');
        out.push_str(&line);
        out.push('\n');
    }
    out
}
