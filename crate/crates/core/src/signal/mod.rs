//! Raw waveforms, Gaussian noise injection, time shifting and the FFT energy
//! envelope used to locate keystrokes.

mod segment;
pub mod wav;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

pub use segment::{segment_keystrokes, SegmentationConfig};

/// Default recording sample rate.
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 44_100;

/// Mono audio with its sample rate. Never empty, always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("waveform has no samples"));
        }
        if sample_rate_hz == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Same sample rate, new samples. Caller guarantees the samples are finite
    /// and non-empty.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        debug_assert!(!samples.is_empty());
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Noise factor and generator seed for additive white Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub eta: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(eta: f64, seed: u64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(invalid(format!("noise factor must be finite and >= 0, got {eta}")));
        }
        Ok(Self { eta, seed })
    }
}

/// Low / Medium / High operating points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    Low,
    Medium,
    High,
}

impl NoiseLevel {
    pub const ALL: [NoiseLevel; 3] = [NoiseLevel::Low, NoiseLevel::Medium, NoiseLevel::High];

    /// Target character accuracy the level is calibrated to.
    pub fn target_accuracy(self) -> f64 {
        match self {
            NoiseLevel::Low => 0.95,
            NoiseLevel::Medium => 0.85,
            NoiseLevel::High => 0.70,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseLevel::Low => "low",
            NoiseLevel::Medium => "medium",
            NoiseLevel::High => "high",
        }
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseLevel {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(NoiseLevel::Low),
            "medium" | "mid" => Ok(NoiseLevel::Medium),
            "high" => Ok(NoiseLevel::High),
            other => Err(invalid(format!("unknown noise level {other:?}"))),
        }
    }
}

/// Recording setup whose published noise factors are exposed as presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordingSetup {
    Phone,
    Zoom,
}

/// A named noise operating point such as `phone-low` or `zoom-high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoisePreset {
    pub setup: RecordingSetup,
    pub level: NoiseLevel,
}

impl NoisePreset {
    pub const fn new(setup: RecordingSetup, level: NoiseLevel) -> Self {
        Self { setup, level }
    }

    /// Published noise factor for this setup and level.
    pub fn eta(self) -> f64 {
        match (self.setup, self.level) {
            (RecordingSetup::Phone, NoiseLevel::Low) => 0.012,
            (RecordingSetup::Phone, NoiseLevel::Medium) => 0.024,
            (RecordingSetup::Phone, NoiseLevel::High) => 0.06,
            (RecordingSetup::Zoom, NoiseLevel::Low) => 0.1,
            (RecordingSetup::Zoom, NoiseLevel::Medium) => 0.5,
            (RecordingSetup::Zoom, NoiseLevel::High) => 1.0,
        }
    }

    pub fn name(self) -> String {
        let setup = match self.setup {
            RecordingSetup::Phone => "phone",
            RecordingSetup::Zoom => "zoom",
        };
        format!("{setup}-{}", self.level)
    }
}

impl FromStr for NoisePreset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (setup, level) = s
            .split_once('-')
            .ok_or_else(|| invalid(format!("preset {s:?} is not <setup>-<level>")))?;
        let setup = match setup {
            "phone" => RecordingSetup::Phone,
            "zoom" => RecordingSetup::Zoom,
            other => return Err(invalid(format!("unknown recording setup {other:?}"))),
        };
        Ok(Self::new(setup, level.parse()?))
    }
}

/// Adds `eta * N(0, 1)` to every sample. No clipping is applied.
pub fn add_gaussian_noise(w: &Waveform, spec: NoiseSpec) -> Result<Waveform> {
    let spec = NoiseSpec::new(spec.eta, spec.seed)?;
    if spec.eta == 0.0 {
        return Ok(w.clone());
    }
    let mut rng = rng::rng(spec.seed);
    let samples = w
        .samples
        .iter()
        .map(|&s| {
            let g: f64 = StandardNormal.sample(&mut rng);
            s + spec.eta * g
        })
        .collect();
    Ok(w.with_samples(samples))
}

/// The offset `time_shift` applies for a given length, fraction and seed.
pub fn draw_shift_offset(len: usize, max_fraction: f64, seed: u64) -> Result<i64> {
    if !(0.0..=1.0).contains(&max_fraction) {
        return Err(invalid(format!(
            "time shift fraction must lie in [0, 1], got {max_fraction}"
        )));
    }
    let bound = (max_fraction * len as f64).floor() as i64;
    if bound == 0 {
        return Ok(0);
    }
    Ok(rng::rng(seed).random_range(-bound..=bound))
}

/// Translates the waveform by a random offset in `[-max_fraction*N, max_fraction*N]`.
pub fn time_shift(w: &Waveform, max_fraction: f64, seed: u64) -> Result<Waveform> {
    let offset = draw_shift_offset(w.len(), max_fraction, seed)?;
    Ok(shift_by(w, offset))
}

/// Translates by exactly `offset` samples (positive moves later), zero-filling.
pub fn shift_by(w: &Waveform, offset: i64) -> Waveform {
    let n = w.len() as i64;
    let mut out = vec![0.0; w.len()];
    for (i, &s) in w.samples.iter().enumerate() {
        let j = i as i64 + offset;
        if (0..n).contains(&j) {
            out[j as usize] = s;
        }
    }
    w.with_samples(out)
}

/// Periodic Hann window of length `n`.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Sum of DFT magnitudes of each Hann-windowed frame.
///
/// Frame `f` covers samples `[f*hop, f*hop + window)`; there are
/// `floor((N - window) / hop) + 1` frames.
pub fn energy_envelope(w: &Waveform, window: usize, hop: usize) -> Result<Vec<f64>> {
    if window == 0 || hop == 0 {
        return Err(invalid("envelope window and hop must be positive"));
    }
    if window > w.len() {
        return Err(invalid(format!(
            "envelope window {window} exceeds waveform length {}",
            w.len()
        )));
    }
    let frames = (w.len() - window) / hop + 1;
    let taper = hann(window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window);
    let mut buf = vec![Complex::new(0.0, 0.0); window];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let frame = &w.samples[f * hop..f * hop + window];
        for ((b, &s), &t) in buf.iter_mut().zip(frame).zip(&taper) {
            *b = Complex::new(s * t, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.push(buf.iter().map(|c| c.norm()).sum());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, len: usize) -> Waveform {
        let sr = DEFAULT_SAMPLE_RATE_HZ;
        let s = (0..len)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        Waveform::new(s, sr).unwrap()
    }

    #[test]
    fn rejects_invalid_waveforms() {
        assert!(Waveform::new(vec![], 8000).is_err());
        assert!(Waveform::new(vec![0.0], 0).is_err());
        assert!(Waveform::new(vec![f64::NAN], 8000).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let w = sine(440.0, 0.5, 1000);
        let out = add_gaussian_noise(&w, NoiseSpec { eta: 0.0, seed: 3 }).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn negative_eta_rejected() {
        let w = sine(440.0, 0.5, 10);
        assert!(add_gaussian_noise(&w, NoiseSpec { eta: -0.1, seed: 0 }).is_err());
    }

    #[test]
    fn noise_variance_matches_eta_squared() {
        let w = Waveform::zeros(100_000, 44_100).unwrap();
        let out = add_gaussian_noise(&w, NoiseSpec { eta: 0.5, seed: 11 }).unwrap();
        let n = out.len() as f64;
        let mean = out.samples().iter().sum::<f64>() / n;
        let var = out.samples().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.2375..=0.2625).contains(&var), "variance {var}");
    }

    #[test]
    fn phone_presets_match_published_factors() {
        use NoiseLevel::*;
        let p = |l| NoisePreset::new(RecordingSetup::Phone, l).eta();
        assert_eq!([p(Low), p(Medium), p(High)], [0.012, 0.024, 0.06]);
        let z = |l| NoisePreset::new(RecordingSetup::Zoom, l).eta();
        assert_eq!([z(Low), z(Medium), z(High)], [0.1, 0.5, 1.0]);
        let parsed: NoisePreset = "zoom-high".parse().unwrap();
        assert_eq!(parsed.eta(), 1.0);
        assert_eq!(parsed.name(), "zoom-high");
        assert!("phone-extreme".parse::<NoisePreset>().is_err());
    }

    #[test]
    fn zero_shift_is_identity() {
        let w = sine(300.0, 1.0, 500);
        assert_eq!(time_shift(&w, 0.0, 99).unwrap(), w);
        assert!(time_shift(&w, 1.5, 0).is_err());
        assert!(time_shift(&w, -0.1, 0).is_err());
    }

    #[test]
    fn forced_offset_moves_impulse() {
        let mut s = vec![0.0; 1000];
        s[100] = 1.0;
        let w = Waveform::new(s, 8000).unwrap();
        let seed = (0..10_000u64)
            .find(|&seed| draw_shift_offset(1000, 0.01, seed).unwrap() == 7)
            .expect("some seed draws offset 7");
        let out = time_shift(&w, 0.01, seed).unwrap();
        for (i, &v) in out.samples().iter().enumerate() {
            assert_eq!(v, if i == 107 { 1.0 } else { 0.0 }, "index {i}");
        }
    }

    #[test]
    fn shift_offsets_stay_in_range() {
        for seed in 0..200 {
            let o = draw_shift_offset(1000, 0.3, seed).unwrap();
            assert!((-300..=300).contains(&o));
        }
    }

    #[test]
    fn envelope_of_silence_is_zero() {
        let w = Waveform::zeros(4096, 44_100).unwrap();
        let env = energy_envelope(&w, 1024, 256).unwrap();
        assert_eq!(env.len(), (4096 - 1024) / 256 + 1);
        assert!(env.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn envelope_scales_linearly_with_amplitude() {
        let full = energy_envelope(&sine(1000.0, 1.0, 8192), 1024, 256).unwrap();
        let half = energy_envelope(&sine(1000.0, 0.5, 8192), 1024, 256).unwrap();
        for (a, b) in full.iter().zip(&half) {
            assert!(((a - 2.0 * b) / a).abs() < 1e-9);
        }
    }

    #[test]
    fn envelope_rejects_bad_geometry() {
        let w = Waveform::zeros(100, 44_100).unwrap();
        assert!(energy_envelope(&w, 1024, 256).is_err());
        assert!(energy_envelope(&w, 64, 0).is_err());
    }
}
