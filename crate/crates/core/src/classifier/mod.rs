//! Keystroke classification.
//!
//! Any type implementing [`KeystrokeClassifier`] can drive evaluation, the
//! attack simulation and noise calibration. [`CentroidModel`] is the built-in
//! nearest-centroid baseline.

mod centroid;
mod channel;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{KeyLabel, KeystrokeDataset, Split, NUM_KEYS};
use crate::error::{invalid, Result};
use crate::rng::derive_seed;
use crate::signal::{add_gaussian_noise, time_shift, NoiseSpec, Waveform};
use crate::spectrogram::{mask_augment, MaskSpec, MelConfig, MelExtractor, MelSpectrogram};

pub use centroid::{train_centroid, CentroidModel, CentroidTrainer, TrainingMeta};
pub use channel::{extend_with_space, simulate_channel, ConfusionMatrix, SpaceMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: KeyLabel,
    /// Higher is more confident.
    pub score: f64,
}

pub trait KeystrokeClassifier: Send + Sync {
    fn mel_config(&self) -> &MelConfig;

    fn predict(&self, spec: &MelSpectrogram) -> Result<Prediction>;
}

/// Produces a classifier from a dataset and a split.
pub trait ClassifierTrainer {
    type Model: KeystrokeClassifier;

    fn train(&self, ds: &KeystrokeDataset, split: &Split) -> Result<Self::Model>;
}

/// Waveform and image augmentation applied while featurising:
/// noise → time shift → mel → masking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    pub noise_eta: f64,
    pub time_shift_fraction: f64,
    pub max_mask_fraction: f64,
    pub masks_per_axis: usize,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn none() -> Self {
        Self {
            noise_eta: 0.0,
            time_shift_fraction: 0.0,
            max_mask_fraction: 0.0,
            masks_per_axis: 0,
            seed: 0,
        }
    }

    /// Phone-profile baseline augmentation: 0.3 time shift, two 10% masks per axis.
    pub fn phone(seed: u64) -> Self {
        Self {
            noise_eta: 0.0,
            time_shift_fraction: 0.3,
            max_mask_fraction: 0.1,
            masks_per_axis: 2,
            seed,
        }
    }

    pub fn zoom(seed: u64) -> Self {
        Self {
            time_shift_fraction: 0.4,
            ..Self::phone(seed)
        }
    }

    /// Featurises `w`, drawing all randomness from `(self.seed, stream)`.
    pub fn featurize(
        &self,
        extractor: &MelExtractor,
        w: &Waveform,
        stream: u64,
    ) -> Result<MelSpectrogram> {
        let base = derive_seed(self.seed, stream);
        let mut w = add_gaussian_noise(w, NoiseSpec::new(self.noise_eta, derive_seed(base, 0))?)?;
        if self.time_shift_fraction > 0.0 {
            w = time_shift(&w, self.time_shift_fraction, derive_seed(base, 1))?;
        }
        let spec = extractor.extract(&w)?;
        if self.masks_per_axis == 0 || self.max_mask_fraction == 0.0 {
            return Ok(spec);
        }
        mask_augment(
            &spec,
            &MaskSpec {
                max_mask_fraction: self.max_mask_fraction,
                masks_per_axis: self.masks_per_axis,
                seed: derive_seed(base, 2),
            },
        )
    }
}

/// Classifies one clip after adding waveform noise.
pub fn classify_noisy(
    model: &dyn KeystrokeClassifier,
    extractor: &MelExtractor,
    w: &Waveform,
    noise: NoiseSpec,
) -> Result<Prediction> {
    let noisy = add_gaussian_noise(w, noise)?;
    model.predict(&extractor.extract(&noisy)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// 36×36, rows normalised by per-class test counts.
    pub confusion: ConfusionMatrix,
    pub tested: usize,
}

fn confusion_counts(
    model: &dyn KeystrokeClassifier,
    ds: &KeystrokeDataset,
    indices: &[usize],
    eta: f64,
    seed: u64,
) -> Result<Vec<Vec<u64>>> {
    let extractor = MelExtractor::new(model.mel_config().clone())?;
    let predicted: Vec<(usize, usize)> = indices
        .par_iter()
        .map(|&i| {
            let noise = NoiseSpec::new(eta, derive_seed(seed, i as u64))?;
            let p = classify_noisy(model, &extractor, ds.waveform(i), noise)?;
            Ok((ds.label(i).index(), p.label.index()))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![vec![0u64; NUM_KEYS]; NUM_KEYS];
    for (t, p) in predicted {
        counts[t][p] += 1;
    }
    Ok(counts)
}

/// Classifies every test item after noise injection at `noise.eta`.
pub fn evaluate(
    model: &dyn KeystrokeClassifier,
    ds: &KeystrokeDataset,
    split: &Split,
    noise: NoiseSpec,
) -> Result<Evaluation> {
    split.validate_for(ds)?;
    if split.test.is_empty() {
        return Err(invalid("test split is empty"));
    }
    let noise = NoiseSpec::new(noise.eta, noise.seed)?;
    let counts = confusion_counts(model, ds, &split.test, noise.eta, noise.seed)?;
    let correct: u64 = (0..NUM_KEYS).map(|i| counts[i][i]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / split.test.len() as f64,
        confusion: ConfusionMatrix::from_counts(&counts)?,
        tested: split.test.len(),
    })
}

/// Estimates the 37-symbol channel at noise factor `eta` by classifying every
/// clip `repeats` times with fresh noise, then adding the space row.
pub fn estimate_channel(
    model: &dyn KeystrokeClassifier,
    ds: &KeystrokeDataset,
    eta: f64,
    repeats: usize,
    seed: u64,
) -> Result<ConfusionMatrix> {
    if repeats == 0 {
        return Err(invalid("need at least one repeat"));
    }
    NoiseSpec::new(eta, seed)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut counts = vec![vec![0u64; NUM_KEYS]; NUM_KEYS];
    for r in 0..repeats {
        let c = confusion_counts(model, ds, &all, eta, derive_seed(seed, r as u64))?;
        for (acc, row) in counts.iter_mut().zip(c) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    extend_with_space(&ConfusionMatrix::from_counts(&counts)?, SpaceMode::MeanAccuracy)
}
