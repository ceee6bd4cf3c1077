//! Types a few sentences through the noisy classifier, then corrects them
//! with the dictionary backend using two-shot prompts.
//!
//! Set `ASCA_ENDPOINT` and `ASCA_MODEL` (and optionally a token variable named
//! by `ASCA_TOKEN_ENV`) to use a chat-completion endpoint instead.

use asca::attack::attack_audio;
use asca::classifier::{train_centroid, AugmentSpec};
use asca::correction::{correct_batch, CorrectorBackend, DictionaryCorrector, RemoteConfig, RemoteCorrector};
use asca::dataset::{select_sentences, stratified_split, synth_corpus_text, synth_dataset};
use asca::signal::NoiseLevel;
use asca::spectrogram::MelConfig;

fn main() -> asca::Result<()> {
    let ds = synth_dataset(8, 25)?;
    let split = stratified_split(&ds, 0.2, 8)?;
    let model = train_centroid(&ds, &split, &MelConfig::phone(), &AugmentSpec::none())?;
    let text = synth_corpus_text(8, 100);
    let sentences = select_sentences(text.lines(), 6, 6, 8)?.sentences;
    let (targets, pool) = sentences.split_at(4);

    let eta = 0.001;
    let attacked = attack_audio(targets, &ds, &model, NoiseLevel::Low, eta, 1)?;
    let examples = attack_audio(pool, &ds, &model, NoiseLevel::Low, eta, 2)?;

    let backend: Box<dyn CorrectorBackend> = match (std::env::var("ASCA_ENDPOINT"), std::env::var("ASCA_MODEL")) {
        (Ok(endpoint), Ok(model)) => Box::new(RemoteCorrector::new(RemoteConfig {
            token_env: std::env::var("ASCA_TOKEN_ENV").ok(),
            ..RemoteConfig::new(endpoint, model)
        })?),
        _ => Box::new(DictionaryCorrector::from_sentences(sentences.iter().map(String::as_str))),
    };
    let corrected = correct_batch(backend.as_ref(), &attacked, &examples, 2, 3, backend.max_concurrent())?;
    for t in &corrected {
        println!("truth     {}", t.truth);
        println!("predicted {}", t.predicted);
        println!("corrected {}", t.corrected.as_deref().unwrap_or(""));
        if let Some(e) = &t.correction_error {
            println!("error     {e}");
        }
        println!();
    }
    Ok(())
}
