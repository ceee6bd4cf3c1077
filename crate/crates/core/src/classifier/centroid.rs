use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AugmentSpec, ClassifierTrainer, KeystrokeClassifier, Prediction};
use crate::dataset::{KeyLabel, KeystrokeDataset, Split, NUM_KEYS};
use crate::error::{invalid, Error, Result};
use crate::matfile;
use crate::spectrogram::{MelConfig, MelExtractor, MelSpectrogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub augment: AugmentSpec,
    pub train_items: usize,
}

/// One mean feature vector per key; predicts the nearest in Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    centroids: Vec<Vec<f32>>,
    mel_config: MelConfig,
    meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    mel_config: MelConfig,
    training: TrainingMeta,
    centroids: Vec<String>,
}

impl CentroidModel {
    pub fn new(centroids: Vec<Vec<f32>>, mel_config: MelConfig, meta: TrainingMeta) -> Result<Self> {
        if centroids.len() != NUM_KEYS {
            return Err(invalid(format!("need 36 centroids, got {}", centroids.len())));
        }
        let len = mel_config.feature_len();
        if let Some(c) = centroids.iter().find(|c| c.len() != len) {
            return Err(Error::DimensionMismatch {
                expected: len.to_string(),
                found: c.len().to_string(),
            });
        }
        Ok(Self {
            centroids,
            mel_config,
            meta,
        })
    }

    pub fn centroid(&self, key: KeyLabel) -> &[f32] {
        &self.centroids[key.index()]
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    /// Nearest centroid for a raw feature vector.
    pub fn predict_features(&self, features: &[f32]) -> Result<Prediction> {
        if features.len() != self.mel_config.feature_len() {
            return Err(Error::DimensionMismatch {
                expected: self.mel_config.feature_len().to_string(),
                found: features.len().to_string(),
            });
        }
        let mut best = (0usize, f64::INFINITY);
        for (k, c) in self.centroids.iter().enumerate() {
            let d: f64 = c
                .iter()
                .zip(features)
                .map(|(&a, &b)| {
                    let diff = f64::from(a) - f64::from(b);
                    diff * diff
                })
                .sum();
            // Strict comparison keeps the earlier label on ties.
            if d < best.1 {
                best = (k, d);
            }
        }
        Ok(Prediction {
            label: KeyLabel::from_index(best.0).expect("36 centroids"),
            score: -best.1.sqrt(),
        })
    }

    /// Writes `centroid_<key>.asmx` per key and `model.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut names = Vec::with_capacity(NUM_KEYS);
        for (k, c) in KeyLabel::keys().zip(&self.centroids) {
            let name = format!("centroid_{}.asmx", k.file_stem());
            matfile::write(dir.join(&name), self.mel_config.n_mels, self.mel_config.target_width, c)?;
            names.push(name);
        }
        let file = ModelFile {
            mel_config: self.mel_config.clone(),
            training: self.meta.clone(),
            centroids: names,
        };
        fs::write(dir.join("model.json"), serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let file: ModelFile = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
        let centroids = file
            .centroids
            .iter()
            .map(|name| matfile::read(dir.join(name)).map(|(_, _, v)| v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(centroids, file.mel_config, file.training)
    }
}

impl KeystrokeClassifier for CentroidModel {
    fn mel_config(&self) -> &MelConfig {
        &self.mel_config
    }

    fn predict(&self, spec: &MelSpectrogram) -> Result<Prediction> {
        if spec.config() != &self.mel_config {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.mel_config.n_mels, self.mel_config.target_width),
                found: format!("{}x{}", spec.rows(), spec.cols()),
            });
        }
        self.predict_features(spec.values())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTrainer {
    pub mel_config: MelConfig,
    pub augment: AugmentSpec,
}

impl ClassifierTrainer for CentroidTrainer {
    type Model = CentroidModel;

    fn train(&self, ds: &KeystrokeDataset, split: &Split) -> Result<CentroidModel> {
        train_centroid(ds, split, &self.mel_config, &self.augment)
    }
}

/// Centroid per class = mean augmented feature over that class's train items.
pub fn train_centroid(
    ds: &KeystrokeDataset,
    split: &Split,
    mel_cfg: &MelConfig,
    augment: &AugmentSpec,
) -> Result<CentroidModel> {
    split.validate_for(ds)?;
    let extractor = MelExtractor::new(mel_cfg.clone())?;
    let features: Vec<(usize, MelSpectrogram)> = split
        .train
        .par_iter()
        .map(|&i| Ok((i, augment.featurize(&extractor, ds.waveform(i), i as u64)?)))
        .collect::<Result<_>>()?;

    let len = mel_cfg.feature_len();
    let mut sums = vec![vec![0.0f64; len]; NUM_KEYS];
    let mut counts = [0usize; NUM_KEYS];
    for (i, spec) in &features {
        let k = ds.label(*i).index();
        counts[k] += 1;
        for (s, &v) in sums[k].iter_mut().zip(spec.values()) {
            *s += f64::from(v);
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(invalid(format!(
            "class {} has no training items",
            KeyLabel::from_index(k).unwrap()
        )));
    }
    let centroids = sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| s.into_iter().map(|v| (v / n as f64) as f32).collect())
        .collect();
    CentroidModel::new(
        centroids,
        mel_cfg.clone(),
        TrainingMeta {
            augment: *augment,
            train_items: split.train.len(),
        },
    )
}
