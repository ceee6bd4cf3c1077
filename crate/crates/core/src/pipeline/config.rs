use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::AttackPath;
use crate::classifier::AugmentSpec;
use crate::correction::RemoteConfig;
use crate::dataset::DatasetProfile;
use crate::error::{Error, Result};
use crate::metrics::CharAlignment;
use crate::signal::{NoiseLevel, NoisePreset, SegmentationConfig};
use crate::spectrogram::MelConfig;

/// The single JSON document driving a run. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: DatasetProfile,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub correction: CorrectionConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory of per-key recordings; required for phone and zoom.
    #[serde(default)]
    pub recordings: Option<PathBuf>,
    /// Strokes per key when the synthetic keyboard generates recordings.
    #[serde(default = "default_strokes")]
    pub strokes_per_key: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Defaults to 25 strokes (`strokes_per_key` for synthetic) with clips
    /// one spectrogram wide.
    #[serde(default)]
    pub segmentation: Option<SegmentationConfig>,
}

fn default_strokes() -> usize {
    25
}
fn default_test_fraction() -> f64 {
    0.2
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            recordings: None,
            strokes_per_key: default_strokes(),
            test_fraction: default_test_fraction(),
            segmentation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// One sentence per line; a synthetic corpus is generated when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_stratum")]
    pub digit_sentences: usize,
    #[serde(default = "default_stratum")]
    pub plain_sentences: usize,
}

fn default_stratum() -> usize {
    500
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            path: None,
            digit_sentences: default_stratum(),
            plain_sentences: default_stratum(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Defaults to the profile's 64×64 geometry.
    #[serde(default)]
    pub mel: Option<MelConfig>,
    /// Defaults to the profile's augmentation; none for synthetic.
    #[serde(default)]
    pub augment: Option<AugmentSpec>,
    /// Also write a PNG per clip when featurising.
    #[serde(default)]
    pub png: bool,
}

/// How a noise level obtains its η.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSetting {
    /// Bisect to the level's target accuracy.
    #[default]
    Calibrate,
    /// A published operating point such as `phone-low`.
    Preset { name: String },
    Fixed { eta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_eta_high")]
    pub eta_high: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Sentences averaged per probe.
    #[serde(default = "default_probe")]
    pub probe_sentences: usize,
}

fn default_tolerance() -> f64 {
    0.02
}
fn default_eta_high() -> f64 {
    1.0
}
fn default_max_iterations() -> usize {
    30
}
fn default_probe() -> usize {
    50
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            tolerance: default_tolerance(),
            eta_high: default_eta_high(),
            max_iterations: default_max_iterations(),
            probe_sentences: default_probe(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub low: NoiseSetting,
    #[serde(default)]
    pub medium: NoiseSetting,
    #[serde(default)]
    pub high: NoiseSetting,
    #[serde(default)]
    pub calibration: CalibrationConfig,
}

impl NoiseConfig {
    pub fn setting(&self, level: NoiseLevel) -> &NoiseSetting {
        match level {
            NoiseLevel::Low => &self.low,
            NoiseLevel::Medium => &self.medium,
            NoiseLevel::High => &self.high,
        }
    }

    pub fn setting_mut(&mut self, level: NoiseLevel) -> &mut NoiseSetting {
        match level {
            NoiseLevel::Low => &mut self.low,
            NoiseLevel::Medium => &mut self.medium,
            NoiseLevel::High => &mut self.high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default = "default_path")]
    pub path: AttackPath,
    #[serde(default = "default_attack_sentences")]
    pub sentences: usize,
    /// Passes over the dataset when estimating a confusion channel.
    #[serde(default = "default_repeats")]
    pub channel_repeats: usize,
}

fn default_path() -> AttackPath {
    AttackPath::Audio
}
fn default_attack_sentences() -> usize {
    200
}
fn default_repeats() -> usize {
    1
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            path: default_path(),
            sentences: default_attack_sentences(),
            channel_repeats: default_repeats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Oracle,
    Echo,
    /// Word list file, one word per line; defaults to the corpus vocabulary.
    Dictionary {
        #[serde(default)]
        wordlist: Option<PathBuf>,
    },
    Remote(RemoteConfig),
}

impl BackendConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            BackendConfig::Oracle => "oracle",
            BackendConfig::Echo => "echo",
            BackendConfig::Dictionary { .. } => "dictionary",
            BackendConfig::Remote(_) => "remote",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionConfig {
    #[serde(default = "default_backends")]
    pub backends: Vec<BackendConfig>,
    /// Few-shot examples per prompt.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Sentences attacked only to serve as few-shot examples.
    #[serde(default = "default_pool")]
    pub pool_sentences: usize,
}

fn default_backends() -> Vec<BackendConfig> {
    vec![
        BackendConfig::Oracle,
        BackendConfig::Echo,
        BackendConfig::Dictionary { wordlist: None },
    ]
}
fn default_k() -> usize {
    2
}
fn default_pool() -> usize {
    50
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            backends: default_backends(),
            k: default_k(),
            pool_sentences: default_pool(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default)]
    pub char_alignment: CharAlignment,
    /// Add an `uncorrected` column scored on the raw predictions.
    #[serde(default = "yes")]
    pub include_uncorrected: bool,
}

fn yes() -> bool {
    true
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            char_alignment: CharAlignment::Lcs,
            include_uncorrected: true,
        }
    }
}

impl RunConfig {
    pub fn new(profile: DatasetProfile) -> Self {
        Self {
            profile,
            seed: 0,
            data: DataConfig::default(),
            corpus: CorpusConfig::default(),
            features: FeatureConfig::default(),
            noise: NoiseConfig::default(),
            attack: AttackConfig::default(),
            correction: CorrectionConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }

    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn mel(&self) -> MelConfig {
        self.features.mel.clone().unwrap_or_else(|| match self.profile {
            DatasetProfile::Zoom => MelConfig::zoom(),
            DatasetProfile::Phone | DatasetProfile::Synthetic => MelConfig::phone(),
        })
    }

    /// Augmentation used while training: the profile's table values, except
    /// the synthetic profile, which trains on clean clips.
    pub fn augment(&self) -> AugmentSpec {
        self.features.augment.unwrap_or_else(|| match self.profile {
            DatasetProfile::Phone => AugmentSpec::phone(self.seed),
            DatasetProfile::Zoom => AugmentSpec::zoom(self.seed),
            DatasetProfile::Synthetic => AugmentSpec::none(),
        })
    }

    pub fn segmentation(&self) -> SegmentationConfig {
        self.data.segmentation.clone().unwrap_or_else(|| SegmentationConfig {
            expected_segments: match self.profile {
                DatasetProfile::Synthetic => self.data.strokes_per_key,
                _ => SegmentationConfig::default().expected_segments,
            },
            clip_length: self.mel().nominal_clip_length(),
            ..SegmentationConfig::default()
        })
    }

    /// Sentences the corpus must provide: attack, few-shot pool and probes.
    pub fn sentences_needed(&self) -> usize {
        self.attack.sentences + self.correction.pool_sentences + self.noise.calibration.probe_sentences
    }

    /// Checks every field and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if matches!(self.profile, DatasetProfile::Phone | DatasetProfile::Zoom)
            && self.data.recordings.is_none()
        {
            p.push(format!("data.recordings is required for the {:?} profile", self.profile));
        }
        if self.data.strokes_per_key < 2 {
            p.push("data.strokes_per_key must be at least 2".into());
        }
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            p.push("data.test_fraction must lie in (0, 1)".into());
        }
        let mel = self.mel();
        if let Err(e) = mel.validate() {
            p.push(format!("features.mel: {e}"));
        }
        if let Err(e) = self.segmentation().validate(mel.sample_rate_hz) {
            p.push(format!("data.segmentation: {e}"));
        }
        let aug = self.augment();
        if !(aug.noise_eta >= 0.0 && aug.noise_eta.is_finite()) {
            p.push("features.augment.noise_eta must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&aug.time_shift_fraction) {
            p.push("features.augment.time_shift_fraction must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&aug.max_mask_fraction) {
            p.push("features.augment.max_mask_fraction must lie in [0, 1]".into());
        }
        for level in NoiseLevel::ALL {
            match self.noise.setting(level) {
                NoiseSetting::Calibrate => {}
                NoiseSetting::Preset { name } => {
                    if let Err(e) = name.parse::<NoisePreset>() {
                        p.push(format!("noise.{level}.name: {e}"));
                    }
                }
                NoiseSetting::Fixed { eta } => {
                    if !(*eta >= 0.0 && eta.is_finite()) {
                        p.push(format!("noise.{level}.eta must be finite and non-negative"));
                    }
                }
            }
        }
        let cal = &self.noise.calibration;
        if !(cal.tolerance > 0.0) {
            p.push("noise.calibration.tolerance must be positive".into());
        }
        if !(cal.eta_high > 0.0 && cal.eta_high.is_finite()) {
            p.push("noise.calibration.eta_high must be positive".into());
        }
        if cal.max_iterations == 0 {
            p.push("noise.calibration.max_iterations must be at least 1".into());
        }
        if cal.probe_sentences == 0 {
            p.push("noise.calibration.probe_sentences must be at least 1".into());
        }
        if self.attack.sentences == 0 {
            p.push("attack.sentences must be at least 1".into());
        }
        if self.attack.channel_repeats == 0 {
            p.push("attack.channel_repeats must be at least 1".into());
        }
        if self.correction.backends.is_empty() {
            p.push("correction.backends is empty".into());
        }
        let mut names = Vec::new();
        for (i, b) in self.correction.backends.iter().enumerate() {
            if let BackendConfig::Remote(r) = b {
                p.extend(r.problems().into_iter().map(|m| format!("correction.backends[{i}]: {m}")));
            }
            let name = backend_label(b);
            if names.contains(&name) {
                p.push(format!("correction.backends[{i}]: duplicate backend {name:?}"));
            }
            names.push(name);
        }
        if self.correction.k > 0 && self.correction.pool_sentences < 2 {
            p.push("correction.pool_sentences must be at least 2 when k > 0".into());
        }
        if self.corpus.path.is_none()
            && self.corpus.digit_sentences + self.corpus.plain_sentences < self.sentences_needed()
        {
            p.push(format!(
                "corpus provides {} sentences but attack, pool and probes need {}",
                self.corpus.digit_sentences + self.corpus.plain_sentences,
                self.sentences_needed()
            ));
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// SHA-256 of the canonical JSON of everything that shapes the audio,
    /// model, calibration and attack stages. Correction and metric settings
    /// are excluded so backends can be added to an existing run.
    pub fn upstream_hash(&self) -> String {
        let mut upstream = self.clone();
        upstream.correction.backends.clear();
        upstream.correction.k = 0;
        upstream.metrics = MetricsConfig::default();
        sha256_hex(&canonical_json(&upstream))
    }

    /// SHA-256 of the canonical JSON of the whole config.
    pub fn hash(&self) -> String {
        sha256_hex(&canonical_json(self))
    }
}

/// Label used for a backend's report column and output directory.
pub fn backend_label(b: &BackendConfig) -> String {
    match b {
        BackendConfig::Remote(r) => format!("remote-{}", r.model),
        other => other.kind().to_string(),
    }
}

/// JSON with object keys sorted, so equal configs hash equally.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json's Value map is ordered by key without the preserve_order feature.
    serde_json::to_value(value)
        .expect("config serialises")
        .to_string()
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
