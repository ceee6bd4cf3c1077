//! Run configuration, manifests and the pipeline stages behind the CLI.
//!
//! A run lives in `<out>/run-<hash>/`, where the hash covers every setting
//! that shapes audio, model, calibration and attack artifacts. Each stage
//! reads its inputs from that directory, writes its own files and records
//! them in `manifest.json`. No stage rewrites another stage's output.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{attack_audio, attack_channel, read_transcripts, write_transcripts, AttackPath, AttackTranscript};
use crate::calibration::{calibrate_eta, CalibrationResult, CalibrationSpec};
use crate::classifier::{estimate_channel, evaluate, train_centroid, CentroidModel, Evaluation};
use crate::correction::{
    correct_batch, CorrectorBackend, DictionaryCorrector, EchoCorrector, OracleCorrector, RemoteCorrector,
};
use crate::attack::AudioAttack;
use crate::dataset::{
    load_corpus, load_recordings, select_sentences, stratified_split, synth_corpus_text, DatasetProfile,
    KeyLabel, KeystrokeDataset, SentenceCorpus, Split, SynthKeyboard,
};
use crate::error::{invalid, Error, Result};
use crate::metrics::{render_table, score_transcripts_with, MetricReport, ScoreTarget};
use crate::rng::derive_seed;
use crate::signal::wav::write_wav;
use crate::signal::{NoiseLevel, NoisePreset, NoiseSpec};
use crate::spectrogram::MelExtractor;

pub use config::{
    backend_label, canonical_json, sha256_hex, AttackConfig, BackendConfig, CalibrationConfig, CorpusConfig,
    CorrectionConfig, DataConfig, FeatureConfig, MetricsConfig, NoiseConfig, NoiseSetting, RunConfig,
};

/// Seed streams, one per stage.
mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const CORPUS: u64 = 3;
    pub const CALIBRATE: u64 = 4;
    pub const EVALUATE: u64 = 5;
    pub const ATTACK: u64 = 6;
    pub const POOL: u64 = 7;
    pub const CORRECT: u64 = 8;
    pub const CHANNEL: u64 = 9;
}

/// The noise factor used for one level and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelNoise {
    pub eta: f64,
    /// `calibrated`, `fixed`, or a preset name.
    pub source: String,
    #[serde(default)]
    pub calibration: Option<CalibrationResult>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config: RunConfig,
    pub config_hash: String,
    pub upstream_hash: String,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default)]
    pub noise: BTreeMap<NoiseLevel, LevelNoise>,
    /// Stage name → artifact paths relative to the run directory.
    #[serde(default)]
    pub artifacts: BTreeMap<String, Vec<String>>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Loads either a run config or a run manifest (whose embedded config is
/// returned), validating the result.
pub fn load_config_or_manifest(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(vec![e.to_string()]))?;
    if value.get("config_hash").is_some() {
        let manifest: RunManifest =
            serde_json::from_value(value).map_err(|e| Error::Config(vec![e.to_string()]))?;
        manifest.config.validate()?;
        return Ok(manifest.config);
    }
    RunConfig::from_json(&text)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, stage: &str) -> Result<T> {
    if !path.is_file() {
        return Err(invalid(format!(
            "{} not found; run the `{stage}` stage first",
            path.display()
        )));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Corpus slices: attacked sentences, few-shot pool and calibration probes.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSlices {
    pub attack: Vec<String>,
    pub pool: Vec<String>,
    pub probe: Vec<String>,
    /// Every selected sentence, for building a dictionary.
    pub all: Vec<String>,
}

/// One configured run rooted at `<out>/run-<hash>/`.
pub struct Pipeline {
    config: RunConfig,
    root: PathBuf,
    levels: Vec<NoiseLevel>,
}

impl Pipeline {
    pub fn new(config: RunConfig, out: impl AsRef<Path>) -> Result<Self> {
        config.validate()?;
        let root = out.as_ref().join(format!("run-{}", &config.upstream_hash()[..16]));
        fs::create_dir_all(&root)?;
        let p = Self {
            config,
            root,
            levels: NoiseLevel::ALL.to_vec(),
        };
        p.update_manifest(|_| {})?;
        Ok(p)
    }

    /// Restricts level-wise stages to `levels`.
    pub fn with_levels(mut self, levels: Vec<NoiseLevel>) -> Self {
        self.levels = levels;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    fn seed(&self, stream: u64) -> u64 {
        derive_seed(self.config.seed, stream)
    }

    fn update_manifest(&self, f: impl FnOnce(&mut RunManifest)) -> Result<()> {
        let path = self.manifest_path();
        let mut m = if path.is_file() {
            RunManifest::load(&path)?
        } else {
            RunManifest {
                config: self.config.clone(),
                config_hash: String::new(),
                upstream_hash: String::new(),
                seeds: BTreeMap::new(),
                noise: BTreeMap::new(),
                artifacts: BTreeMap::new(),
            }
        };
        m.config = self.config.clone();
        m.config_hash = self.config.hash();
        m.upstream_hash = self.config.upstream_hash();
        m.seeds = [
            ("run", self.config.seed),
            ("data", self.seed(stream::DATA)),
            ("split", self.seed(stream::SPLIT)),
            ("corpus", self.seed(stream::CORPUS)),
            ("calibrate", self.seed(stream::CALIBRATE)),
            ("evaluate", self.seed(stream::EVALUATE)),
            ("attack", self.seed(stream::ATTACK)),
            ("pool", self.seed(stream::POOL)),
            ("correct", self.seed(stream::CORRECT)),
            ("channel", self.seed(stream::CHANNEL)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        f(&mut m);
        write_json(&path, &m)
    }

    fn record(&self, stage: &str, paths: &[PathBuf]) -> Result<()> {
        let rel: Vec<String> = paths
            .iter()
            .map(|p| p.strip_prefix(&self.root).unwrap_or(p).display().to_string())
            .collect();
        self.update_manifest(|m| {
            m.artifacts.insert(stage.to_string(), rel);
        })
    }

    fn dataset_manifest(&self) -> PathBuf {
        self.root.join("dataset").join("manifest.json")
    }

    /// Writes the synthetic keyboard's 36 recordings (synthetic profile only).
    fn synth_recordings(&self) -> Result<PathBuf> {
        let dir = self.root.join("recordings");
        fs::create_dir_all(&dir)?;
        let kb = SynthKeyboard {
            sample_rate_hz: self.config.mel().sample_rate_hz,
            ..SynthKeyboard::default()
        };
        for key in KeyLabel::keys() {
            let w = kb.recording(
                key,
                self.config.data.strokes_per_key,
                0.5,
                derive_seed(self.seed(stream::DATA), key.index() as u64),
            );
            write_wav(dir.join(format!("{}.wav", key.file_stem())), &w)?;
        }
        Ok(dir)
    }

    /// Segments every key's recording into labelled clips.
    pub fn segment(&self) -> Result<KeystrokeDataset> {
        let recordings = match (&self.config.data.recordings, self.config.profile) {
            (Some(dir), _) => dir.clone(),
            (None, DatasetProfile::Synthetic) => self.synth_recordings()?,
            (None, _) => return Err(Error::Config(vec!["data.recordings is required".into()])),
        };
        let ds = load_recordings(&recordings, self.config.profile, &self.config.segmentation())?;
        let manifest = ds.save_manifest(self.root.join("dataset"))?;
        self.record("segment", &[manifest])?;
        Ok(ds)
    }

    pub fn dataset(&self) -> Result<KeystrokeDataset> {
        let path = self.dataset_manifest();
        if !path.is_file() {
            return Err(invalid("no segmented dataset; run the `segment` stage first"));
        }
        KeystrokeDataset::load_manifest(path)
    }

    /// Writes the clean mel image of every clip, plus a PNG if configured.
    pub fn featurize(&self) -> Result<usize> {
        let ds = self.dataset()?;
        let extractor = MelExtractor::new(self.config.mel())?;
        let dir = self.root.join("features");
        fs::create_dir_all(&dir)?;
        let mut seen = BTreeMap::new();
        let mut index = Vec::with_capacity(ds.len());
        for i in 0..ds.len() {
            let label = ds.label(i);
            let n = seen.entry(label).or_insert(0usize);
            let stem = format!("{}_{:03}", label.file_stem(), *n);
            *n += 1;
            let spec = extractor.extract(ds.waveform(i))?;
            spec.write_matrix(dir.join(format!("{stem}.asmx")))?;
            if self.config.features.png {
                spec.write_png(dir.join(format!("{stem}.png")))?;
            }
            index.push(serde_json::json!({"label": label, "matrix": format!("{stem}.asmx")}));
        }
        let index_path = dir.join("index.json");
        write_json(&index_path, &index)?;
        self.record("featurize", &[index_path])?;
        Ok(ds.len())
    }

    /// Splits the dataset and fits the nearest-centroid model.
    pub fn train(&self) -> Result<CentroidModel> {
        let ds = self.dataset()?;
        let split = stratified_split(&ds, self.config.data.test_fraction, self.seed(stream::SPLIT))?;
        let split_path = self.root.join("split.json");
        write_json(&split_path, &split)?;
        let model = train_centroid(&ds, &split, &self.config.mel(), &self.config.augment())?;
        let model_dir = self.root.join("model");
        model.save(&model_dir)?;
        self.record("train", &[split_path, model_dir.join("model.json")])?;
        Ok(model)
    }

    pub fn model(&self) -> Result<CentroidModel> {
        if !self.root.join("model").join("model.json").is_file() {
            return Err(invalid("no trained model; run the `train` stage first"));
        }
        CentroidModel::load(self.root.join("model"))
    }

    pub fn split(&self) -> Result<Split> {
        read_json(&self.root.join("split.json"), "train")
    }

    /// Selects the corpus and slices it into attack, pool and probe sets.
    pub fn corpus(&self) -> Result<CorpusSlices> {
        let c = &self.config.corpus;
        let seed = self.seed(stream::CORPUS);
        let corpus: SentenceCorpus = match &c.path {
            Some(path) => load_corpus(path, c.digit_sentences, c.plain_sentences, seed)?,
            None => {
                let lines = 2 * c.digit_sentences.max(c.plain_sentences) + 2;
                let text = synth_corpus_text(seed, lines);
                select_sentences(text.lines(), c.digit_sentences, c.plain_sentences, seed)?
            }
        };
        let need = self.config.sentences_needed();
        if corpus.len() < need {
            return Err(Error::InsufficientCorpus {
                stratum: "total",
                available: corpus.len(),
                requested: need,
            });
        }
        let s = &corpus.sentences;
        let a = self.config.attack.sentences;
        let p = a + self.config.correction.pool_sentences;
        Ok(CorpusSlices {
            attack: s[..a].to_vec(),
            pool: s[a..p].to_vec(),
            probe: s[p..need].to_vec(),
            all: s.clone(),
        })
    }

    /// Resolves η for each selected level, bisecting where configured.
    pub fn calibrate(&self) -> Result<BTreeMap<NoiseLevel, LevelNoise>> {
        let mut out = BTreeMap::new();
        let mut lazy: Option<(KeystrokeDataset, CentroidModel, Vec<String>)> = None;
        for &level in &self.levels {
            let noise = match self.config.noise.setting(level) {
                NoiseSetting::Fixed { eta } => LevelNoise {
                    eta: *eta,
                    source: "fixed".into(),
                    calibration: None,
                },
                NoiseSetting::Preset { name } => LevelNoise {
                    eta: name.parse::<NoisePreset>()?.eta(),
                    source: name.clone(),
                    calibration: None,
                },
                NoiseSetting::Calibrate => {
                    if lazy.is_none() {
                        lazy = Some((self.dataset()?, self.model()?, self.corpus()?.probe));
                    }
                    let (ds, model, probe) = lazy.as_ref().unwrap();
                    let cal = &self.config.noise.calibration;
                    let spec = CalibrationSpec {
                        target: level.target_accuracy(),
                        tolerance: cal.tolerance,
                        eta_low: 0.0,
                        eta_high: cal.eta_high,
                        max_iterations: cal.max_iterations,
                    };
                    let probe_attack = AudioAttack::new(model, ds)?;
                    let r = calibrate_eta(&probe_attack, &spec, probe, self.seed(stream::CALIBRATE))?;
                    LevelNoise {
                        eta: r.eta,
                        source: "calibrated".into(),
                        calibration: Some(r),
                    }
                }
            };
            out.insert(level, noise);
        }
        let path = self.root.join("noise.json");
        let mut all: BTreeMap<NoiseLevel, LevelNoise> = if path.is_file() {
            read_json(&path, "calibrate")?
        } else {
            BTreeMap::new()
        };
        all.extend(out.clone());
        write_json(&path, &all)?;
        self.update_manifest(|m| m.noise = all.clone())?;
        self.record("calibrate", &[path])?;
        Ok(out)
    }

    pub fn noise(&self) -> Result<BTreeMap<NoiseLevel, LevelNoise>> {
        let all: BTreeMap<NoiseLevel, LevelNoise> = read_json(&self.root.join("noise.json"), "calibrate")?;
        for level in &self.levels {
            if !all.contains_key(level) {
                return Err(invalid(format!("no noise factor for level {level}; run `calibrate`")));
            }
        }
        Ok(all)
    }

    /// Test-split accuracy clean and at every resolved level.
    pub fn evaluate(&self) -> Result<BTreeMap<String, Evaluation>> {
        let ds = self.dataset()?;
        let model = self.model()?;
        let split = self.split()?;
        let seed = self.seed(stream::EVALUATE);
        let mut out = BTreeMap::new();
        out.insert("clean".to_string(), evaluate(&model, &ds, &split, NoiseSpec::new(0.0, seed)?)?);
        let noise_path = self.root.join("noise.json");
        if noise_path.is_file() {
            let noise: BTreeMap<NoiseLevel, LevelNoise> = read_json(&noise_path, "calibrate")?;
            for (level, n) in noise {
                out.insert(level.to_string(), evaluate(&model, &ds, &split, NoiseSpec::new(n.eta, seed)?)?);
            }
        }
        let path = self.root.join("evaluation.json");
        write_json(&path, &out)?;
        self.record("evaluate", &[path])?;
        Ok(out)
    }

    fn transcripts_path(&self, kind: &str, level: NoiseLevel) -> PathBuf {
        self.root.join(kind).join(format!("{level}.jsonl"))
    }

    /// Attacks the attack and pool slices at every selected level.
    pub fn attack(&self) -> Result<BTreeMap<NoiseLevel, Vec<AttackTranscript>>> {
        let ds = self.dataset()?;
        let model = self.model()?;
        let noise = self.noise()?;
        let slices = self.corpus()?;
        let mut written = Vec::new();
        let mut out = BTreeMap::new();
        for &level in &self.levels {
            let eta = noise[&level].eta;
            let run = |sentences: &[String], seed: u64| -> Result<Vec<AttackTranscript>> {
                match self.config.attack.path {
                    AttackPath::Audio => attack_audio(sentences, &ds, &model, level, eta, seed),
                    AttackPath::Channel => {
                        let cm = estimate_channel(
                            &model,
                            &ds,
                            eta,
                            self.config.attack.channel_repeats,
                            derive_seed(self.seed(stream::CHANNEL), level as u64),
                        )?;
                        attack_channel(sentences, &cm, level, eta, seed)
                    }
                }
            };
            let level_seed = |s: u64| derive_seed(self.seed(s), level as u64);
            let main = run(&slices.attack, level_seed(stream::ATTACK))?;
            let pool = run(&slices.pool, level_seed(stream::POOL))?;
            for (kind, ts) in [("transcripts", &main), ("pool", &pool)] {
                let path = self.transcripts_path(kind, level);
                fs::create_dir_all(path.parent().unwrap())?;
                write_transcripts(&path, ts)?;
                written.push(path);
            }
            out.insert(level, main);
        }
        self.record("attack", &written)?;
        Ok(out)
    }

    fn backend(&self, cfg: &BackendConfig) -> Result<Box<dyn CorrectorBackend>> {
        Ok(match cfg {
            BackendConfig::Oracle => Box::new(OracleCorrector),
            BackendConfig::Echo => Box::new(EchoCorrector),
            BackendConfig::Dictionary { wordlist: Some(path) } => {
                let text = fs::read_to_string(path)?;
                Box::new(DictionaryCorrector::new(text.split_whitespace().map(str::to_lowercase)))
            }
            BackendConfig::Dictionary { wordlist: None } => {
                let slices = self.corpus()?;
                Box::new(DictionaryCorrector::from_sentences(slices.all.iter().map(String::as_str)))
            }
            BackendConfig::Remote(r) => Box::new(RemoteCorrector::new(r.clone())?),
        })
    }

    /// Corrects the attacked transcripts with every configured backend.
    pub fn correct(&self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for cfg in &self.config.correction.backends {
            let backend = self.backend(cfg)?;
            let label = backend_label(cfg);
            for &level in &self.levels {
                let ts = read_transcripts(self.existing(self.transcripts_path("transcripts", level), "attack")?)?;
                let pool = read_transcripts(self.existing(self.transcripts_path("pool", level), "attack")?)?;
                let corrected = correct_batch(
                    backend.as_ref(),
                    &ts,
                    &pool,
                    self.config.correction.k,
                    derive_seed(self.seed(stream::CORRECT), level as u64),
                    backend.max_concurrent(),
                )?;
                let path = self.root.join("corrected").join(&label).join(format!("{level}.jsonl"));
                fs::create_dir_all(path.parent().unwrap())?;
                write_transcripts(&path, &corrected)?;
                written.push(path);
            }
        }
        self.record("correct", &written)?;
        Ok(written)
    }

    fn existing(&self, path: PathBuf, stage: &str) -> Result<PathBuf> {
        if path.is_file() {
            Ok(path)
        } else {
            Err(invalid(format!("{} not found; run the `{stage}` stage first", path.display())))
        }
    }

    fn columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        if self.config.metrics.include_uncorrected {
            cols.push("uncorrected".to_string());
        }
        cols.extend(self.config.correction.backends.iter().map(backend_label));
        cols
    }

    /// Scores every backend column at every selected level.
    pub fn score(&self) -> Result<Vec<MetricReport>> {
        let alignment = self.config.metrics.char_alignment;
        let mut reports = Vec::new();
        let mut written = Vec::new();
        for col in self.columns() {
            for &level in &self.levels {
                let (source, target) = if col == "uncorrected" {
                    (self.transcripts_path("transcripts", level), ScoreTarget::Predicted)
                } else {
                    let p = self.root.join("corrected").join(&col).join(format!("{level}.jsonl"));
                    (p, ScoreTarget::Corrected)
                };
                let stage = if col == "uncorrected" { "attack" } else { "correct" };
                let ts = read_transcripts(self.existing(source, stage)?)?;
                let report = score_transcripts_with(&ts, target, &col, alignment)?;
                let path = self.root.join("reports").join(&col).join(format!("{level}.json"));
                write_json(&path, &report)?;
                written.push(path);
                reports.push(report);
            }
        }
        self.record("score", &written)?;
        Ok(reports)
    }

    /// Aggregates stored reports into `report.txt`.
    pub fn report(&self) -> Result<String> {
        let mut reports = Vec::new();
        for col in self.columns() {
            for &level in &self.levels {
                let path = self.root.join("reports").join(&col).join(format!("{level}.json"));
                reports.push(read_json::<MetricReport>(&path, "score")?);
            }
        }
        let table = render_table(&reports);
        let path = self.root.join("report.txt");
        fs::write(&path, &table)?;
        self.record("report", &[path])?;
        Ok(table)
    }

    /// Every stage in order; returns the rendered table.
    pub fn run_all(&self) -> Result<String> {
        self.segment()?;
        self.featurize()?;
        self.train()?;
        self.calibrate()?;
        self.evaluate()?;
        self.attack()?;
        self.correct()?;
        self.score()?;
        self.report()
    }
}
