//! Fits a rank-4 adapter on top of a frozen centroid classifier, with noisy
//! keystroke features ordered Low -> Medium -> High.
//!
//! Usage: `lora_curriculum [learning_rate] [epochs_per_stage]`.

use asca::lora::{accuracy, centroid_base, train_lora, CurriculumSpec, CurriculumTask, KeystrokeTask, LoraAdapter};
use asca::dataset::{stratified_split, synth_dataset};
use asca::signal::NoiseLevel;
use asca::spectrogram::{MelConfig, MelExtractor};

fn main() -> asca::Result<()> {
    let ds = synth_dataset(2, 25)?;
    let split = stratified_split(&ds, 0.2, 2)?;
    let extractor = MelExtractor::new(MelConfig::phone())?;
    let train = KeystrokeTask::new(&ds, split.train.clone(), extractor.clone(), [0.0007, 0.0025, 0.005], 1)?;
    let test = KeystrokeTask::new(&ds, split.test.clone(), extractor.clone(), [0.0007, 0.0025, 0.005], 2)?;

    let base = centroid_base(&train.features_at(0.0, 0)?, 36)?;
    let mut spec = CurriculumSpec::standard(3);
    let mut args = std::env::args().skip(1);
    spec.optimizer.learning_rate = args.next().and_then(|a| a.parse().ok()).unwrap_or(1e-3);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    for stage in &mut spec.stages {
        stage.epochs = epochs;
    }
    let (adapter, log) = train_lora(&base, 4, &train, &spec)?;
    for s in &log {
        println!("{:<7} loss {:.4} -> {:.4} over {} steps", s.level, s.loss_before, s.loss_after, s.steps);
    }
    let (d_in, d_out) = train.dims();
    let zero = LoraAdapter::new(nalgebra::DMatrix::zeros(d_out, 4), nalgebra::DMatrix::zeros(4, d_in))?;
    for level in NoiseLevel::ALL {
        let data = test.features_at(test.eta(level), 99)?;
        println!(
            "{level:<7} test accuracy: base {:.3}, adapted {:.3}",
            accuracy(&base, &zero, &data)?,
            accuracy(&base, &adapter, &data)?
        );
    }
    Ok(())
}
