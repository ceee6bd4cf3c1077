use std::collections::BTreeSet;

use super::{CorrectorBackend, PromptMessage};
use crate::attack::AttackTranscript;
use crate::error::Result;

/// Replaces each token by the closest word within edit distance 1.
///
/// Known words are kept. Among candidates the smallest distance wins, then
/// the alphabetically first word. Tokens with no candidate stay unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictionaryCorrector {
    words: BTreeSet<String>,
}

impl DictionaryCorrector {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    /// Every whitespace token of every sentence.
    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a str>) -> Self {
        Self::new(sentences.into_iter().flat_map(str::split_whitespace))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn correct_token<'a>(&'a self, token: &'a str) -> &'a str {
        if self.words.contains(token) {
            return token;
        }
        self.words
            .iter()
            .find(|w| strsim::levenshtein(w, token) <= 1)
            .map_or(token, String::as_str)
    }

    pub fn correct_text(&self, text: &str) -> String {
        text.split_whitespace()
            .map(|t| self.correct_token(t))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl CorrectorBackend for DictionaryCorrector {
    fn name(&self) -> &str {
        "dictionary"
    }

    fn correct(&self, _: &[PromptMessage], t: &AttackTranscript) -> Result<String> {
        Ok(self.correct_text(&t.predicted))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_edit_repairs() {
        let d = DictionaryCorrector::new(["the", "cat", "sat"]);
        assert_eq!(d.correct_text("the caf sat"), "the cat sat");
        assert_eq!(d.correct_text("xyzzy"), "xyzzy");
    }

    #[test]
    fn ties_go_to_the_alphabetically_first_word() {
        let d = DictionaryCorrector::new(["cot", "cat"]);
        assert_eq!(d.correct_token("cut"), "cat");
        assert_eq!(d.correct_token("cot"), "cot");
    }
}
