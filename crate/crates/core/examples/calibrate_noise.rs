//! Bisects the noise factor that brings corpus accuracy to each level's
//! target on the synthetic keyboard.

use asca::attack::AudioAttack;
use asca::calibration::{calibrate_eta, CalibrationSpec};
use asca::classifier::{train_centroid, AugmentSpec};
use asca::dataset::{select_sentences, stratified_split, synth_corpus_text, synth_dataset};
use asca::signal::NoiseLevel;
use asca::spectrogram::MelConfig;

fn main() -> asca::Result<()> {
    let ds = synth_dataset(3, 25)?;
    let split = stratified_split(&ds, 0.2, 3)?;
    let model = train_centroid(&ds, &split, &MelConfig::phone(), &AugmentSpec::none())?;
    let text = synth_corpus_text(3, 200);
    let probe = select_sentences(text.lines(), 20, 20, 3)?.sentences;

    let attack = AudioAttack::new(&model, &ds)?;
    for level in NoiseLevel::ALL {
        let r = calibrate_eta(&attack, &CalibrationSpec::for_level(level), &probe, 11)?;
        println!(
            "{level:<7} target {:.2}  eta {:.5}  accuracy {:.3}  ({} probes)",
            r.target, r.eta, r.achieved_accuracy, r.iterations
        );
    }
    Ok(())
}
