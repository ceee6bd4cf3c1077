//! Keystroke recordings, sentence corpora and stratified splits.

mod corpus;
mod synth;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::signal::wav::{read_wav, write_wav};
use crate::signal::{segment_keystrokes, SegmentationConfig, Waveform};

pub use corpus::{load_corpus, normalize_sentence, select_sentences, synth_corpus_text, SentenceCorpus, SYNTH_VOCABULARY};
pub use synth::{synth_dataset, synth_recording, SynthKeyboard};

/// Symbols in channel order: `a..z`, `0..9`, then space.
pub const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789 ";
/// Keys with recorded audio; space has none.
pub const NUM_KEYS: usize = 36;
/// Keys plus space.
pub const NUM_SYMBOLS: usize = 37;

/// One symbol of the keystroke alphabet, stored as its channel index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyLabel(u8);

impl KeyLabel {
    pub const SPACE: KeyLabel = KeyLabel(36);

    pub fn from_index(i: usize) -> Option<Self> {
        (i < NUM_SYMBOLS).then_some(KeyLabel(i as u8))
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'a'..='z' => Ok(KeyLabel(c as u8 - b'a')),
            '0'..='9' => Ok(KeyLabel(26 + c as u8 - b'0')),
            ' ' => Ok(KeyLabel::SPACE),
            other => Err(Error::Alphabet(other)),
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_char(self) -> char {
        ALPHABET.as_bytes()[self.index()] as char
    }

    pub fn is_space(self) -> bool {
        self == KeyLabel::SPACE
    }

    /// The 36 trainable keys in label order.
    pub fn keys() -> impl Iterator<Item = KeyLabel> {
        (0..NUM_KEYS as u8).map(KeyLabel)
    }

    /// File stem used for per-key recordings and clips.
    pub fn file_stem(self) -> String {
        if self.is_space() {
            "space".into()
        } else {
            self.as_char().to_string()
        }
    }
}

impl fmt::Display for KeyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.file_stem())
    }
}

impl FromStr for KeyLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "space" {
            return Ok(KeyLabel::SPACE);
        }
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => KeyLabel::from_char(c),
            _ => Err(invalid(format!("not a key label: {s:?}"))),
        }
    }
}

impl Serialize for KeyLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.file_stem())
    }
}

impl<'de> Deserialize<'de> for KeyLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Converts a sentence into symbol labels.
pub fn encode_text(text: &str) -> Result<Vec<KeyLabel>> {
    text.chars().map(KeyLabel::from_char).collect()
}

pub fn decode_labels(labels: &[KeyLabel]) -> String {
    labels.iter().map(|k| k.as_char()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetProfile {
    Phone,
    Zoom,
    Synthetic,
}

/// Labelled keystroke clips sharing one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct KeystrokeDataset {
    items: Vec<(KeyLabel, Waveform)>,
    profile: DatasetProfile,
}

impl KeystrokeDataset {
    pub fn new(items: Vec<(KeyLabel, Waveform)>, profile: DatasetProfile) -> Result<Self> {
        if items.is_empty() {
            return Err(invalid("dataset has no items"));
        }
        let sr = items[0].1.sample_rate_hz();
        if items.iter().any(|(_, w)| w.sample_rate_hz() != sr) {
            return Err(invalid("dataset mixes sample rates"));
        }
        if items.iter().any(|(k, _)| k.is_space()) {
            return Err(invalid("space is not a trainable keystroke class"));
        }
        let counts = class_counts(&items);
        if let Some((k, n)) = counts
            .iter()
            .enumerate()
            .find(|(_, &n)| n == 1)
            .map(|(k, &n)| (KeyLabel(k as u8), n))
        {
            return Err(invalid(format!("class {k} has only {n} item")));
        }
        Ok(Self { items, profile })
    }

    pub fn items(&self) -> &[(KeyLabel, Waveform)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn profile(&self) -> DatasetProfile {
        self.profile
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.items[0].1.sample_rate_hz()
    }

    pub fn label(&self, i: usize) -> KeyLabel {
        self.items[i].0
    }

    pub fn waveform(&self, i: usize) -> &Waveform {
        &self.items[i].1
    }

    /// Item indices per class, in label order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by = vec![Vec::new(); NUM_KEYS];
        for (i, (k, _)) in self.items.iter().enumerate() {
            by[k.index()].push(i);
        }
        by
    }

    /// Writes each clip as `clips/<label>_<n>.wav` plus `manifest.json`.
    pub fn save_manifest(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("clips"))?;
        let mut seen = [0usize; NUM_KEYS];
        let mut entries = Vec::with_capacity(self.items.len());
        for (label, w) in &self.items {
            let rel = format!("clips/{}_{:03}.wav", label.file_stem(), seen[label.index()]);
            seen[label.index()] += 1;
            write_wav(dir.join(&rel), w)?;
            entries.push(ManifestEntry {
                label: *label,
                path: rel,
            });
        }
        let manifest = DatasetManifest {
            profile: self.profile,
            sample_rate_hz: self.sample_rate_hz(),
            items: entries,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }

    /// Loads a dataset written by [`save_manifest`](Self::save_manifest);
    /// clip paths resolve relative to the manifest's directory.
    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let items = manifest
            .items
            .iter()
            .map(|e| Ok((e.label, read_wav(base.join(&e.path))?)))
            .collect::<Result<Vec<_>>>()?;
        if items.iter().any(|(_, w)| w.sample_rate_hz() != manifest.sample_rate_hz) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "clip sample rate differs from manifest".into(),
            });
        }
        Self::new(items, manifest.profile)
    }
}

fn class_counts(items: &[(KeyLabel, Waveform)]) -> [usize; NUM_KEYS] {
    let mut counts = [0; NUM_KEYS];
    for (k, _) in items {
        counts[k.index()] += 1;
    }
    counts
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetManifest {
    profile: DatasetProfile,
    sample_rate_hz: u32,
    items: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    label: KeyLabel,
    path: String,
}

/// Reads `<symbol>.wav` for each of the 36 keys from `root` and segments each
/// recording into `seg_cfg.expected_segments` labelled clips.
pub fn load_recordings(
    root: impl AsRef<Path>,
    profile: DatasetProfile,
    seg_cfg: &SegmentationConfig,
) -> Result<KeystrokeDataset> {
    let root = root.as_ref();
    let missing: Vec<String> = KeyLabel::keys()
        .filter(|k| !root.join(format!("{}.wav", k.file_stem())).is_file())
        .map(|k| k.file_stem())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }
    let mut items = Vec::with_capacity(NUM_KEYS * seg_cfg.expected_segments);
    for key in KeyLabel::keys() {
        let recording = read_wav(root.join(format!("{}.wav", key.file_stem())))?;
        let clips = segment_keystrokes(&recording, seg_cfg).map_err(|e| match e {
            Error::Segmentation {
                found, expected, ..
            } => Error::Segmentation {
                key: Some(key.file_stem()),
                found,
                expected,
            },
            other => other,
        })?;
        items.extend(clips.into_iter().map(|c| (key, c)));
    }
    KeystrokeDataset::new(items, profile)
}

/// Disjoint train/test index sets over a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Every item on the test side, none on the train side.
    pub fn all_test(ds: &KeystrokeDataset) -> Self {
        Self {
            train: Vec::new(),
            test: (0..ds.len()).collect(),
        }
    }

    pub fn validate_for(&self, ds: &KeystrokeDataset) -> Result<()> {
        let mut seen = vec![false; ds.len()];
        for &i in self.train.iter().chain(&self.test) {
            if i >= ds.len() {
                return Err(invalid(format!("split index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(invalid(format!("split index {i} appears twice")));
            }
        }
        Ok(())
    }
}

/// Per-class shuffle, then `round(n_class * test_fraction)` items of each
/// class go to the test side.
pub fn stratified_split(ds: &KeystrokeDataset, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut idx) in ds.indices_by_class().into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        if n_test >= idx.len() {
            return Err(invalid(format!(
                "class {} would have no training items",
                KeyLabel(class as u8)
            )));
        }
        idx.shuffle(&mut rng::rng(rng::derive_seed(seed, class as u64)));
        split.test.extend_from_slice(&idx[..n_test]);
        split.train.extend_from_slice(&idx[n_test..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trip() {
        for (i, c) in ALPHABET.chars().enumerate() {
            let k = KeyLabel::from_char(c).unwrap();
            assert_eq!(k.index(), i);
            assert_eq!(k.as_char(), c);
            assert_eq!(k.file_stem().parse::<KeyLabel>().unwrap(), k);
        }
        assert!(matches!(KeyLabel::from_char('!'), Err(Error::Alphabet('!'))));
        assert_eq!(KeyLabel::keys().count(), 36);
        assert!(KeyLabel::keys().all(|k| !k.is_space()));
    }

    #[test]
    fn empty_directory_lists_all_keys() {
        let dir = tempfile::tempdir().unwrap();
        match load_recordings(dir.path(), DatasetProfile::Phone, &SegmentationConfig::default()) {
            Err(Error::MissingKeys(keys)) => {
                assert_eq!(keys.len(), 36);
                assert_eq!(keys[0], "a");
                assert_eq!(keys[35], "9");
            }
            other => panic!("expected MissingKeys, got {other:?}"),
        }
    }

    #[test]
    fn split_counts_and_determinism() {
        let ds = synth_dataset(3, 25).unwrap();
        let s = stratified_split(&ds, 0.2, 9).unwrap();
        s.validate_for(&ds).unwrap();
        assert_eq!(s.train.len() + s.test.len(), 900);
        for class in ds.indices_by_class() {
            let in_test = class.iter().filter(|i| s.test.contains(i)).count();
            assert_eq!(in_test, 5);
        }
        assert_eq!(s, stratified_split(&ds, 0.2, 9).unwrap());
        assert_ne!(s, stratified_split(&ds, 0.2, 10).unwrap());
        assert!(stratified_split(&ds, 0.0, 1).is_err());
        assert!(stratified_split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn two_class_split_is_a_partition() {
        let full = synth_dataset(1, 25).unwrap();
        let items: Vec<_> = full
            .items()
            .iter()
            .filter(|(k, _)| k.index() < 2)
            .cloned()
            .collect();
        let ds = KeystrokeDataset::new(items, DatasetProfile::Synthetic).unwrap();
        let s = stratified_split(&ds, 0.2, 4).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(s.test.len(), 10);
    }

    #[test]
    fn split_rejects_class_without_train_side() {
        let full = synth_dataset(1, 2).unwrap();
        assert!(stratified_split(&full, 0.75, 0).is_err());
    }

    #[test]
    fn dataset_rejects_singleton_classes() {
        let w = Waveform::zeros(10, 44_100).unwrap();
        let items = vec![(KeyLabel::from_char('a').unwrap(), w)];
        assert!(KeystrokeDataset::new(items, DatasetProfile::Synthetic).is_err());
    }
}
