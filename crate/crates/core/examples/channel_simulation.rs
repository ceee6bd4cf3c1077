//! Estimates a 37-symbol confusion channel at one noise factor and pushes a
//! sentence through it.

use asca::classifier::{estimate_channel, simulate_channel, train_centroid, AugmentSpec};
use asca::dataset::{stratified_split, synth_dataset};
use asca::metrics::char_accuracy;
use asca::spectrogram::MelConfig;

fn main() -> asca::Result<()> {
    let ds = synth_dataset(4, 10)?;
    let split = stratified_split(&ds, 0.2, 4)?;
    let model = train_centroid(&ds, &split, &MelConfig::phone(), &AugmentSpec::none())?;
    let cm = estimate_channel(&model, &ds, 0.003, 2, 5)?;
    println!("mean diagonal {:.3}", cm.mean_diagonal());

    let truth = "meet me at gate 42 after the 9 oclock train";
    for seed in 0..3 {
        let noisy = simulate_channel(&cm, truth, seed)?;
        println!("{noisy}  ({:.3})", char_accuracy(truth, &noisy));
    }
    Ok(())
}
