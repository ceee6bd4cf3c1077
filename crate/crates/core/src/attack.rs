//! Sentence-level attack simulation.
//!
//! The audio path realises every character of a sentence with a recorded
//! clip, adds waveform noise and classifies it. The channel path skips the
//! audio and draws each prediction from a confusion matrix. Both produce one
//! [`AttackTranscript`] per sentence, with per-sentence seeds derived from the
//! run seed and the sentence index so results do not depend on scheduling.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    classify_noisy, estimate_channel, simulate_channel, ConfusionMatrix, KeystrokeClassifier,
};
use crate::dataset::{KeyLabel, KeystrokeDataset, NUM_KEYS, NUM_SYMBOLS};
use crate::error::{invalid, Error, Result};
use crate::metrics::char_accuracy;
use crate::rng::{self, derive_seed};
use crate::signal::{NoiseLevel, NoiseSpec};
use crate::spectrogram::MelExtractor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackPath {
    Audio,
    Channel,
}

/// One attacked sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackTranscript {
    /// Position of the sentence in the attacked corpus.
    pub index: usize,
    pub truth: String,
    pub predicted: String,
    #[serde(default)]
    pub corrected: Option<String>,
    pub noise_level: NoiseLevel,
    pub eta: f64,
    /// Per-sentence seed.
    pub seed: u64,
    pub path: AttackPath,
    /// Set when the corrector failed on this sentence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction_error: Option<String>,
}

impl AttackTranscript {
    /// Character accuracy of the uncorrected prediction.
    pub fn accuracy(&self) -> f64 {
        char_accuracy(&self.truth, &self.predicted)
    }
}

/// Mean uncorrected character accuracy; 1.0 for an empty batch.
pub fn mean_accuracy(transcripts: &[AttackTranscript]) -> f64 {
    if transcripts.is_empty() {
        return 1.0;
    }
    transcripts.iter().map(AttackTranscript::accuracy).sum::<f64>() / transcripts.len() as f64
}

fn check_alphabet(text: &str) -> Result<()> {
    text.chars().try_for_each(|c| KeyLabel::from_char(c).map(|_| ()))
}

/// Audio-path attacker bound to a model and the victim's clips.
pub struct AudioAttack<'a> {
    model: &'a dyn KeystrokeClassifier,
    ds: &'a KeystrokeDataset,
    extractor: MelExtractor,
    by_class: Vec<Vec<usize>>,
}

impl<'a> AudioAttack<'a> {
    pub fn new(model: &'a dyn KeystrokeClassifier, ds: &'a KeystrokeDataset) -> Result<Self> {
        let by_class = ds.indices_by_class();
        if let Some(k) = by_class.iter().position(Vec::is_empty) {
            return Err(invalid(format!(
                "dataset has no clips for key {}",
                KeyLabel::from_index(k).unwrap()
            )));
        }
        Ok(Self {
            model,
            ds,
            extractor: MelExtractor::new(model.mel_config().clone())?,
            by_class,
        })
    }

    /// The SPACE row of the channel at `eta`, estimated from one pass over
    /// every clip.
    pub fn space_row(&self, eta: f64, seed: u64) -> Result<Vec<f64>> {
        let cm = estimate_channel(self.model, self.ds, eta, 1, seed)?;
        Ok(cm.rows()[NUM_KEYS].clone())
    }

    fn sentence(&self, text: &str, eta: f64, seed: u64, space_row: &[f64]) -> Result<String> {
        text.chars()
            .enumerate()
            .map(|(j, c)| {
                let key = KeyLabel::from_char(c)?;
                let mut rng = rng::rng(derive_seed(seed, j as u64));
                if key.is_space() {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let pick = space_row
                        .iter()
                        .position(|&p| {
                            acc += p;
                            u < acc
                        })
                        .unwrap_or(NUM_SYMBOLS - 1);
                    return Ok(KeyLabel::from_index(pick).unwrap().as_char());
                }
                let clips = &self.by_class[key.index()];
                let clip = clips[rng.random_range(0..clips.len())];
                let noise = NoiseSpec::new(eta, rng.random())?;
                let p = classify_noisy(self.model, &self.extractor, self.ds.waveform(clip), noise)?;
                Ok(p.label.as_char())
            })
            .collect()
    }

    /// Attacks every sentence at noise factor `eta`.
    pub fn run(
        &self,
        sentences: &[String],
        level: NoiseLevel,
        eta: f64,
        seed: u64,
    ) -> Result<Vec<AttackTranscript>> {
        NoiseSpec::new(eta, seed)?;
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        sentences.iter().try_for_each(|s| check_alphabet(s))?;
        let space = self.space_row(eta, derive_seed(seed, u64::MAX))?;
        sentences
            .par_iter()
            .enumerate()
            .map(|(i, truth)| {
                let s = derive_seed(seed, i as u64);
                Ok(AttackTranscript {
                    index: i,
                    truth: truth.clone(),
                    predicted: self.sentence(truth, eta, s, &space)?,
                    corrected: None,
                    noise_level: level,
                    eta,
                    seed: s,
                    path: AttackPath::Audio,
                    correction_error: None,
                })
            })
            .collect()
    }
}

/// Audio-path attack; see [`AudioAttack::run`].
pub fn attack_audio(
    sentences: &[String],
    ds: &KeystrokeDataset,
    model: &dyn KeystrokeClassifier,
    level: NoiseLevel,
    eta: f64,
    seed: u64,
) -> Result<Vec<AttackTranscript>> {
    AudioAttack::new(model, ds)?.run(sentences, level, eta, seed)
}

/// Channel-path attack: each sentence passes through `cm` independently.
pub fn attack_channel(
    sentences: &[String],
    cm: &ConfusionMatrix,
    level: NoiseLevel,
    eta: f64,
    seed: u64,
) -> Result<Vec<AttackTranscript>> {
    if cm.size() != NUM_SYMBOLS {
        return Err(invalid("the channel path needs a 37x37 matrix"));
    }
    sentences
        .par_iter()
        .enumerate()
        .map(|(i, truth)| {
            let s = derive_seed(seed, i as u64);
            Ok(AttackTranscript {
                index: i,
                truth: truth.clone(),
                predicted: simulate_channel(cm, truth, s)?,
                corrected: None,
                noise_level: level,
                eta,
                seed: s,
                path: AttackPath::Channel,
                correction_error: None,
            })
        })
        .collect()
}

pub fn write_transcripts(path: impl AsRef<Path>, transcripts: &[AttackTranscript]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for t in transcripts {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<AttackTranscript>> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: AttackTranscript = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", n + 1),
        })?;
        if t.predicted.chars().count() != t.truth.chars().count() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: predicted and truth differ in length", n + 1),
            });
        }
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train_centroid, AugmentSpec};
    use crate::dataset::{stratified_split, synth_dataset};
    use crate::spectrogram::MelConfig;

    fn sentences() -> Vec<String> {
        ["the cat sat on the mat", "call 911 now", "zebra quiz 42"]
            .map(String::from)
            .to_vec()
    }

    #[test]
    fn identity_channel_reproduces_truth() {
        let cm = ConfusionMatrix::identity(37).unwrap();
        let t = attack_channel(&sentences(), &cm, NoiseLevel::Low, 0.0, 4).unwrap();
        assert!(t.iter().all(|t| t.predicted == t.truth));
        assert_eq!(t, attack_channel(&sentences(), &cm, NoiseLevel::Low, 0.0, 4).unwrap());
        assert!(attack_channel(&["Hi".into()], &cm, NoiseLevel::Low, 0.0, 4).is_err());
    }

    #[test]
    fn audio_path_clean_and_empty() {
        let ds = synth_dataset(3, 4).unwrap();
        let split = stratified_split(&ds, 0.25, 3).unwrap();
        let m = train_centroid(&ds, &split, &MelConfig::phone(), &AugmentSpec::none()).unwrap();
        assert!(attack_audio(&[], &ds, &m, NoiseLevel::Low, 0.0, 1).unwrap().is_empty());
        let t = attack_audio(&sentences(), &ds, &m, NoiseLevel::Low, 0.0, 1).unwrap();
        assert!(t.iter().all(|t| t.predicted.len() == t.truth.len()));
        assert!(mean_accuracy(&t) >= 0.95, "{}", mean_accuracy(&t));
        assert_eq!(t, attack_audio(&sentences(), &ds, &m, NoiseLevel::Low, 0.0, 1).unwrap());
    }

    #[test]
    fn jsonl_round_trip() {
        let cm = ConfusionMatrix::uniform(37).unwrap();
        let mut t = attack_channel(&sentences(), &cm, NoiseLevel::High, 1.5, 9).unwrap();
        t[1].corrected = Some("fixed".into());
        t[2].correction_error = Some("timeout".into());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        write_transcripts(&p, &t).unwrap();
        assert_eq!(read_transcripts(&p).unwrap(), t);
    }
}
