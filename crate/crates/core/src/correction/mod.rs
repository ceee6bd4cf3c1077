//! Few-shot typo correction.
//!
//! [`build_fewshot_prompt`] renders the system/user message pair sent to a
//! chat model. [`CorrectorBackend`] abstracts where corrections come from: a
//! remote chat-completion endpoint, or one of the local reference backends
//! (oracle, echo, dictionary). Batch correction never aborts on a failed
//! sentence; the failure is recorded on the transcript instead.

mod dictionary;
mod remote;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::AttackTranscript;
use crate::error::{invalid, Result};
use crate::rng::{self, derive_seed};

pub use dictionary::DictionaryCorrector;
pub use remote::{RemoteConfig, RemoteCorrector};

pub const SYSTEM_PROMPT: &str = "You are an expert in correcting typos in sentences.";
const PREAMBLE: &str = "Here are pairs of sentences with typos; learn from them:";
const INSTRUCTION: &str =
    "Now, please correct these sentences and output only the corrected version with no additional text: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMessage {
    pub role: Role,
    pub content: String,
}

/// A (noisy, clean) demonstration pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub noisy: String,
    pub clean: String,
}

fn single_line(label: &str, s: &str) -> Result<()> {
    if s.contains(['\n', '\r']) {
        return Err(invalid(format!("{label} must be a single line")));
    }
    Ok(())
}

/// System and user messages for correcting `target`. With no examples the
/// user message is only the correction instruction.
pub fn build_fewshot_prompt(examples: &[FewShotExample], target: &str) -> Result<Vec<PromptMessage>> {
    single_line("target sentence", target)?;
    let mut user = String::new();
    if !examples.is_empty() {
        user.push_str(PREAMBLE);
        user.push_str("\n\n");
        for ex in examples {
            single_line("example sentence", &ex.noisy)?;
            single_line("example sentence", &ex.clean)?;
            if ex.noisy.is_empty() || ex.clean.is_empty() {
                return Err(invalid("few-shot examples must be non-empty"));
            }
            user.push_str(&format!("sentence: {}\ncorrected: {}\n\n", ex.noisy, ex.clean));
        }
    }
    user.push_str(INSTRUCTION);
    user.push_str(target);
    Ok(vec![
        PromptMessage {
            role: Role::System,
            content: SYSTEM_PROMPT.to_string(),
        },
        PromptMessage {
            role: Role::User,
            content: user,
        },
    ])
}

/// Lowercases, strips an echoed `corrected:` prefix and collapses whitespace.
pub fn normalize_response(text: &str) -> String {
    let mut s = text.trim().to_lowercase();
    if let Some(rest) = s.strip_prefix("corrected:") {
        s = rest.to_string();
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A source of corrected sentences.
pub trait CorrectorBackend: Sync {
    /// Column label used in reports.
    fn name(&self) -> &str;

    /// Raw (unnormalised) correction for one transcript.
    fn correct(&self, messages: &[PromptMessage], transcript: &AttackTranscript) -> Result<String>;

    /// Upper bound on in-flight requests; local backends ignore it.
    fn max_concurrent(&self) -> usize {
        1
    }
}

/// Returns the ground truth: the upper bound on any corrector.
pub struct OracleCorrector;

impl CorrectorBackend for OracleCorrector {
    fn name(&self) -> &str {
        "oracle"
    }

    fn correct(&self, _: &[PromptMessage], t: &AttackTranscript) -> Result<String> {
        Ok(t.truth.clone())
    }
}

/// Returns the prediction unchanged.
pub struct EchoCorrector;

impl CorrectorBackend for EchoCorrector {
    fn name(&self) -> &str {
        "echo"
    }

    fn correct(&self, _: &[PromptMessage], t: &AttackTranscript) -> Result<String> {
        Ok(t.predicted.clone())
    }
}

/// Draws up to `k` demonstrations from `pool` at the target's noise level,
/// never using the target sentence itself.
pub fn select_examples(
    pool: &[AttackTranscript],
    target: &AttackTranscript,
    k: usize,
    seed: u64,
) -> Vec<FewShotExample> {
    let candidates: Vec<&AttackTranscript> = pool
        .iter()
        .filter(|p| p.noise_level == target.noise_level && p.truth != target.truth)
        .collect();
    let mut rng = rng::rng(derive_seed(seed, target.index as u64));
    candidates
        .choose_multiple(&mut rng, k)
        .map(|p| FewShotExample {
            noisy: p.predicted.clone(),
            clean: p.truth.clone(),
        })
        .collect()
}

/// Corrects one transcript. Backend failures are stored in
/// `correction_error`, with `corrected` falling back to the prediction.
pub fn correct(
    backend: &dyn CorrectorBackend,
    transcript: &AttackTranscript,
    pool: &[AttackTranscript],
    k: usize,
    seed: u64,
) -> AttackTranscript {
    let mut out = transcript.clone();
    let examples = select_examples(pool, transcript, k, seed);
    let result = build_fewshot_prompt(&examples, &transcript.predicted)
        .and_then(|messages| backend.correct(&messages, transcript));
    match result {
        Ok(text) => {
            out.corrected = Some(normalize_response(&text));
            out.correction_error = None;
        }
        Err(e) => {
            out.corrected = Some(transcript.predicted.clone());
            out.correction_error = Some(format!("{}: {e}", e.kind()));
        }
    }
    out
}

/// Corrects a batch with at most `max_concurrent` sentences in flight.
/// Output order follows input order.
pub fn correct_batch(
    backend: &dyn CorrectorBackend,
    transcripts: &[AttackTranscript],
    pool: &[AttackTranscript],
    k: usize,
    seed: u64,
    max_concurrent: usize,
) -> Result<Vec<AttackTranscript>> {
    if max_concurrent == 0 {
        return Err(invalid("max_concurrent must be at least 1"));
    }
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(max_concurrent)
        .build()
        .map_err(|e| invalid(e.to_string()))?;
    Ok(workers.install(|| {
        transcripts
            .par_iter()
            .map(|t| correct(backend, t, pool, k, seed))
            .collect()
    }))
}
