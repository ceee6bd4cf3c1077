//! Trains the nearest-centroid baseline on the synthetic keyboard and reports
//! test accuracy as waveform noise grows.

use asca::classifier::{evaluate, train_centroid, AugmentSpec};
use asca::dataset::{stratified_split, synth_dataset};
use asca::signal::NoiseSpec;
use asca::spectrogram::MelConfig;

fn main() -> asca::Result<()> {
    let ds = synth_dataset(1, 25)?;
    let split = stratified_split(&ds, 0.2, 1)?;
    let model = train_centroid(&ds, &split, &MelConfig::phone(), &AugmentSpec::none())?;
    println!("{} clips, {} held out", ds.len(), split.test.len());
    for eta in [0.0, 0.001, 0.003, 0.01, 0.03] {
        let e = evaluate(&model, &ds, &split, NoiseSpec::new(eta, 2)?)?;
        println!("eta {eta:<6} accuracy {:.3}", e.accuracy);
    }
    Ok(())
}
