//! Runs every stage on a small synthetic configuration and prints the table.
//!
//! Artifacts land in `./out/run-<hash>/`.

use asca::dataset::DatasetProfile;
use asca::pipeline::{Pipeline, RunConfig};

fn main() -> asca::Result<()> {
    let mut config = RunConfig::new(DatasetProfile::Synthetic);
    config.data.strokes_per_key = 10;
    config.corpus.digit_sentences = 60;
    config.corpus.plain_sentences = 60;
    config.attack.sentences = 40;
    config.correction.pool_sentences = 20;
    config.noise.calibration.probe_sentences = 30;
    let pipeline = Pipeline::new(config, "out")?;
    let table = pipeline.run_all()?;
    println!("{table}");
    println!("artifacts in {}", pipeline.root().display());
    Ok(())
}
