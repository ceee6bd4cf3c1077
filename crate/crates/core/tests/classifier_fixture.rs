use std::collections::HashMap;

use asca::attack::{attack_channel, mean_accuracy};
use asca::calibration::measure_accuracy;
use asca::attack::AudioAttack;
use asca::classifier::{
    estimate_channel, evaluate, simulate_channel, train_centroid, AugmentSpec, ConfusionMatrix,
    KeystrokeClassifier, Prediction,
};
use asca::dataset::{
    select_sentences, stratified_split, synth_corpus_text, synth_dataset, KeyLabel, KeystrokeDataset,
    ALPHABET,
};
use asca::signal::{NoiseLevel, NoiseSpec};
use asca::spectrogram::{MelConfig, MelExtractor, MelSpectrogram};
use asca::Result;
use rand::Rng;

/// Looks the clean image up in a table, so it is right exactly when the
/// input is unperturbed.
struct LookupClassifier {
    config: MelConfig,
    table: HashMap<Vec<u32>, KeyLabel>,
}

impl LookupClassifier {
    fn new(ds: &KeystrokeDataset) -> Self {
        let config = MelConfig::phone();
        let ex = MelExtractor::new(config.clone()).unwrap();
        let table = (0..ds.len())
            .map(|i| (key(&ex.extract(ds.waveform(i)).unwrap()), ds.label(i)))
            .collect();
        Self { config, table }
    }
}

fn key(s: &MelSpectrogram) -> Vec<u32> {
    s.values().iter().map(|v| v.to_bits()).collect()
}

impl KeystrokeClassifier for LookupClassifier {
    fn mel_config(&self) -> &MelConfig {
        &self.config
    }

    fn predict(&self, spec: &MelSpectrogram) -> Result<Prediction> {
        let label = self.table.get(&key(spec)).copied().unwrap_or(KeyLabel::from_index(0).unwrap());
        Ok(Prediction { label, score: 0.0 })
    }
}

fn corpus(n: usize, seed: u64) -> Vec<String> {
    let text = synth_corpus_text(seed, 4 * n);
    select_sentences(text.lines(), n / 2, n - n / 2, seed).unwrap().sentences
}

#[test]
fn perfect_stub_gives_identity_confusion() {
    let ds = synth_dataset(3, 5).unwrap();
    let split = stratified_split(&ds, 0.2, 1).unwrap();
    let stub = LookupClassifier::new(&ds);
    let e = evaluate(&stub, &ds, &split, NoiseSpec::new(0.0, 0).unwrap()).unwrap();
    assert_eq!(e.accuracy, 1.0);
    assert_eq!(e.confusion, ConfusionMatrix::identity(36).unwrap());
}

#[test]
fn fixture_is_separable_clean_and_destroyed_by_extreme_noise() {
    let ds = synth_dataset(11, 25).unwrap();
    let split = stratified_split(&ds, 0.2, 2).unwrap();
    let model = train_centroid(&ds, &split, &MelConfig::phone(), &AugmentSpec::none()).unwrap();
    let clean = evaluate(&model, &ds, &split, NoiseSpec::new(0.0, 5).unwrap()).unwrap();
    assert!(clean.accuracy >= 0.95, "clean accuracy {}", clean.accuracy);
    // Far beyond any calibrated High level on this fixture.
    let wrecked = evaluate(&model, &ds, &split, NoiseSpec::new(10.0, 5).unwrap()).unwrap();
    assert!(wrecked.accuracy <= 0.2, "accuracy under extreme noise {}", wrecked.accuracy);

    let sentences = corpus(40, 9);
    let attack = AudioAttack::new(&model, &ds).unwrap();
    let clean_corpus = measure_accuracy(&attack, 0.0, &sentences, 4).unwrap();
    assert!(clean_corpus >= 0.95, "clean corpus accuracy {clean_corpus}");
    let floor = measure_accuracy(&attack, 10.0, &sentences, 4).unwrap();
    assert!(floor <= 0.25, "corpus accuracy under extreme noise {floor}");
}

#[test]
fn uniform_channel_hits_chance_rate() {
    let n = ALPHABET.chars().count();
    let cm = ConfusionMatrix::from_rows(vec![vec![1.0 / n as f64; n]; n]).unwrap();
    let symbols: Vec<char> = ALPHABET.chars().collect();
    let mut rng = asca::rng::rng(17);
    let text: String = (0..100_000).map(|_| symbols[rng.random_range(0..n)]).collect();
    let out = simulate_channel(&cm, &text, 4).unwrap();
    let hits = text.chars().zip(out.chars()).filter(|(a, b)| a == b).count();
    let rate = hits as f64 / 100_000.0;
    assert!((rate - 1.0 / n as f64).abs() <= 0.01, "rate {rate}");
}

#[test]
fn channel_estimate_is_deterministic_and_matches_its_diagonal() {
    let ds = synth_dataset(2, 10).unwrap();
    let split = stratified_split(&ds, 0.2, 1).unwrap();
    let model = train_centroid(&ds, &split, &MelConfig::phone(), &AugmentSpec::none()).unwrap();
    let cm = estimate_channel(&model, &ds, 0.003, 1, 8).unwrap();
    assert_eq!(cm, estimate_channel(&model, &ds, 0.003, 1, 8).unwrap());
    let sentences = corpus(60, 1);
    let a = attack_channel(&sentences, &cm, NoiseLevel::Medium, 0.003, 5).unwrap();
    assert_eq!(a, attack_channel(&sentences, &cm, NoiseLevel::Medium, 0.003, 5).unwrap());
    let expected: f64 = sentences.iter().map(|s| cm.expected_accuracy(s).unwrap()).sum::<f64>()
        / sentences.len() as f64;
    assert!((mean_accuracy(&a) - expected).abs() < 0.03);
}
