//! Synthetic keystrokes: one resonant noise burst per key.
//!
//! Key `k` rings at a centre frequency spaced evenly on the mel scale between
//! 400 Hz and 16 kHz, strictly increasing in label order. Every stroke gets
//! its own excitation noise, onset, amplitude and a small frequency jitter, on
//! top of a constant low-level background hiss. Samples are rounded to `f32`
//! so clips survive a WAV round trip bit-exactly.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{DatasetProfile, KeyLabel, KeystrokeDataset, NUM_KEYS};
use crate::error::{invalid, Result};
use crate::rng::{self, derive_seed};
use crate::signal::{Waveform, DEFAULT_SAMPLE_RATE_HZ};
use crate::spectrogram::{hz_to_mel, mel_to_hz, MelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthKeyboard {
    pub sample_rate_hz: u32,
    /// Samples per isolated keystroke clip.
    pub clip_length: usize,
    /// Standard deviation of the background hiss.
    pub noise_floor: f64,
    /// Burst decay time constant, seconds.
    pub decay_secs: f64,
    /// Resonator bandwidth as a fraction of the centre frequency.
    pub relative_bandwidth: f64,
    /// Relative per-stroke frequency jitter (uniform ±).
    pub frequency_jitter: f64,
    /// Unit impulse added to the first excitation sample. A strong touch
    /// transient pins the energy peak to the onset.
    pub touch_impulse: f64,
}

impl Default for SynthKeyboard {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            clip_length: MelConfig::phone().nominal_clip_length(),
            noise_floor: 1e-5,
            decay_secs: 0.03,
            relative_bandwidth: 0.01,
            frequency_jitter: 0.002,
            touch_impulse: 100.0,
        }
    }
}

impl SynthKeyboard {
    pub fn centre_frequency(&self, key: KeyLabel) -> f64 {
        let (lo, hi) = (hz_to_mel(400.0), hz_to_mel(16_000.0));
        mel_to_hz(lo + (hi - lo) * key.index() as f64 / (NUM_KEYS - 1) as f64)
    }

    /// Adds one stroke of `key` into `out` with onset at `onset`.
    fn add_stroke(&self, out: &mut [f64], onset: usize, key: KeyLabel, seed: u64) {
        let mut rng = rng::rng(seed);
        let sr = self.sample_rate_hz as f64;
        let jitter = 1.0 + self.frequency_jitter * rng.random_range(-1.0..=1.0);
        let fc = self.centre_frequency(key) * jitter;
        let amplitude = rng.random_range(0.3..=0.5);
        let r = (-PI * self.relative_bandwidth * fc / sr).exp();
        let (a1, a2) = (2.0 * r * (2.0 * PI * fc / sr).cos(), -r * r);
        let len = ((8.0 * self.decay_secs * sr) as usize).min(out.len().saturating_sub(onset));
        let mut burst = Vec::with_capacity(len);
        let (mut y1, mut y2) = (0.0, 0.0);
        for n in 0..len {
            let env = (-(n as f64) / (self.decay_secs * sr)).exp();
            let mut x: f64 = StandardNormal.sample(&mut rng);
            if n == 0 {
                x += self.touch_impulse;
            }
            let y = env * x + a1 * y1 + a2 * y2;
            burst.push(y);
            (y2, y1) = (y1, y);
        }
        let peak = burst.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            for (o, b) in out[onset..].iter_mut().zip(&burst) {
                *o += amplitude * b / peak;
            }
        }
    }

    fn hiss(&self, len: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng::rng(seed);
        (0..len)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                self.noise_floor * g
            })
            .collect()
    }

    fn finish(&self, samples: Vec<f64>) -> Waveform {
        let samples = samples.into_iter().map(|s| s as f32 as f64).collect();
        Waveform::new(samples, self.sample_rate_hz).expect("synthetic samples are finite")
    }

    /// One isolated keystroke clip, burst starting a few milliseconds before
    /// the clip centre.
    pub fn stroke(&self, key: KeyLabel, seed: u64) -> Waveform {
        let mut s = self.hiss(self.clip_length, derive_seed(seed, 0));
        let mut rng = rng::rng(derive_seed(seed, 1));
        let lead = (0.005 * self.sample_rate_hz as f64) as i64;
        let jitter = (0.002 * self.sample_rate_hz as f64) as i64;
        let onset = (self.clip_length as i64 / 2 - lead + rng.random_range(-jitter..=jitter)).max(0);
        self.add_stroke(&mut s, onset as usize, key, derive_seed(seed, 2));
        self.finish(s)
    }

    /// A continuous recording of `strokes` presses of `key`, `spacing_secs`
    /// apart, starting half a spacing in.
    pub fn recording(&self, key: KeyLabel, strokes: usize, spacing_secs: f64, seed: u64) -> Waveform {
        let spacing = (spacing_secs * self.sample_rate_hz as f64) as usize;
        let len = spacing * strokes + spacing / 2;
        let mut s = self.hiss(len, derive_seed(seed, u64::MAX));
        for i in 0..strokes {
            self.add_stroke(&mut s, spacing / 2 + i * spacing, key, derive_seed(seed, i as u64));
        }
        self.finish(s)
    }

    pub fn dataset(&self, seed: u64, strokes_per_key: usize) -> Result<KeystrokeDataset> {
        if strokes_per_key < 2 {
            return Err(invalid("need at least two strokes per key"));
        }
        let items = KeyLabel::keys()
            .flat_map(|k| {
                (0..strokes_per_key).map(move |i| {
                    let s = derive_seed(derive_seed(seed, k.index() as u64), i as u64);
                    (k, s)
                })
            })
            .map(|(k, s)| (k, self.stroke(k, s)))
            .collect();
        KeystrokeDataset::new(items, DatasetProfile::Synthetic)
    }
}

/// 36 synthetic keys × `strokes_per_key` clips at phone-profile geometry.
pub fn synth_dataset(seed: u64, strokes_per_key: usize) -> Result<KeystrokeDataset> {
    SynthKeyboard::default().dataset(seed, strokes_per_key)
}

/// A 25-strokes-style recording for one key, strokes 0.5 s apart.
pub fn synth_recording(key: KeyLabel, strokes: usize, seed: u64) -> Waveform {
    SynthKeyboard::default().recording(key, strokes, 0.5, seed)
}
