//! Keystroke acoustic side-channel pipeline.
//!
//! Keystroke audio is segmented into clips, turned into mel-spectrogram
//! images and classified; a calibrated noise factor drives the classifier to
//! chosen error rates; the resulting noisy transcripts are corrected by a
//! pluggable text corrector and scored with character and n-gram metrics.
//!
//! | module | role |
//! |---|---|
//! | [`signal`] | waveforms, Gaussian noise, time shift, energy envelope, segmentation |
//! | [`spectrogram`] | mel images and time/frequency masking |
//! | [`dataset`] | recordings, synthetic keyboard, sentence corpora, splits |
//! | [`classifier`] | pluggable classifier, nearest-centroid baseline, confusion channel |
//! | [`lora`] | low-rank adapter on a frozen linear layer, curriculum training |
//! | [`attack`] | sentence-level attack simulation |
//! | [`correction`] | few-shot prompts and corrector backends |
//! | [`metrics`] | character accuracy, BLEU, METEOR, ROUGE, reports |
//! | [`calibration`] | noise-factor search for a target accuracy |
//! | [`pipeline`] | run configuration, manifests and the CLI stages |

pub mod attack;
pub mod calibration;
pub mod classifier;
pub mod correction;
pub mod dataset;
mod error;
pub mod lora;
pub mod matfile;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod signal;
pub mod spectrogram;

pub use error::{Error, Result};
