//! Mel-spectrogram images and time/frequency masking.
//!
//! The pipeline is: Hann-windowed, centre-padded STFT → power spectrum →
//! area-normalised triangular mel filterbank (HTK mel scale) →
//! `10·log10(max(p, 1e-10))` → crop or pad to a fixed width → per-image
//! min–max normalisation to `[0, 1]`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::{hann, Waveform, DEFAULT_SAMPLE_RATE_HZ};
use crate::{matfile, rng};

/// Power floor applied before the dB conversion.
pub const POWER_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelConfig {
    pub n_mels: usize,
    pub n_fft: usize,
    pub hop_length: usize,
    pub sample_rate_hz: u32,
    pub fmin: f64,
    pub fmax: f64,
    pub target_width: usize,
}

impl MelConfig {
    /// Phone recordings, baseline-classifier geometry (64×64).
    pub fn phone() -> Self {
        Self::with_geometry(64, 300, 64)
    }

    /// Phone recordings, produced directly at transformer size (224×224).
    pub fn phone_direct() -> Self {
        Self::with_geometry(224, 85, 224)
    }

    pub fn zoom() -> Self {
        Self::with_geometry(64, 226, 64)
    }

    pub fn zoom_direct() -> Self {
        Self::with_geometry(224, 64, 224)
    }

    fn with_geometry(n_mels: usize, hop_length: usize, target_width: usize) -> Self {
        let sr = DEFAULT_SAMPLE_RATE_HZ;
        Self {
            n_mels,
            n_fft: 1024,
            hop_length,
            sample_rate_hz: sr,
            fmin: 0.0,
            fmax: sr as f64 / 2.0,
            target_width,
        }
    }

    /// Clip length whose centre-padded STFT has exactly `target_width` frames.
    pub fn nominal_clip_length(&self) -> usize {
        self.hop_length * (self.target_width - 1)
    }

    pub fn feature_len(&self) -> usize {
        self.n_mels * self.target_width
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_mels == 0 || self.n_fft == 0 || self.hop_length == 0 || self.target_width == 0 {
            problems.push("mel bands, fft size, hop and width must be positive".to_string());
        }
        if self.sample_rate_hz == 0 {
            problems.push("sample rate must be positive".to_string());
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            problems.push(format!("need 0 <= fmin < fmax, got {} and {}", self.fmin, self.fmax));
        }
        if self.fmax > self.sample_rate_hz as f64 / 2.0 {
            problems.push(format!("fmax {} exceeds Nyquist", self.fmax));
        }
        if self.n_fft < self.n_mels {
            problems.push("fft size must be at least the number of mel bands".to_string());
        }
        if self.hop_length > self.n_fft {
            problems.push("hop length must not exceed the fft size".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(invalid(problems.join("; ")))
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// The `n_mels + 2` filter edge frequencies; band `k` peaks at entry `k + 1`.
pub fn mel_edges_hz(cfg: &MelConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let step = (hi - lo) / (cfg.n_mels + 1) as f64;
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + step * i as f64))
        .collect()
}

/// Nonzero span of one triangular filter over the linear-frequency bins.
#[derive(Debug, Clone)]
struct MelBand {
    first_bin: usize,
    weights: Vec<f64>,
}

fn filterbank(cfg: &MelConfig) -> Vec<MelBand> {
    let edges = mel_edges_hz(cfg);
    let n_bins = cfg.n_fft / 2 + 1;
    let bin_hz = cfg.sample_rate_hz as f64 / cfg.n_fft as f64;
    (0..cfg.n_mels)
        .map(|k| {
            let (left, centre, right) = (edges[k], edges[k + 1], edges[k + 2]);
            let area = 2.0 / (right - left);
            let w: Vec<f64> = (0..n_bins)
                .map(|b| {
                    let f = b as f64 * bin_hz;
                    let rise = (f - left) / (centre - left);
                    let fall = (right - f) / (right - centre);
                    area * rise.min(fall).max(0.0)
                })
                .collect();
            match w.iter().position(|&x| x > 0.0) {
                Some(first) => {
                    let last = w.iter().rposition(|&x| x > 0.0).unwrap();
                    MelBand {
                        first_bin: first,
                        weights: w[first..=last].to_vec(),
                    }
                }
                None => MelBand {
                    first_bin: 0,
                    weights: Vec::new(),
                },
            }
        })
        .collect()
}

/// An `n_mels × target_width` image, row-major, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    values: Vec<f32>,
    config: MelConfig,
}

impl MelSpectrogram {
    pub fn from_values(values: Vec<f32>, config: MelConfig) -> Result<Self> {
        if values.len() != config.feature_len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", config.n_mels, config.target_width),
                found: format!("{} values", values.len()),
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("spectrogram values must lie in [0, 1]"));
        }
        Ok(Self { values, config })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn rows(&self) -> usize {
        self.config.n_mels
    }

    pub fn cols(&self) -> usize {
        self.config.target_width
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols() + col]
    }

    pub fn write_matrix(&self, path: impl AsRef<Path>) -> Result<()> {
        matfile::write(path, self.rows(), self.cols(), &self.values)
    }

    pub fn read_matrix(path: impl AsRef<Path>, config: MelConfig) -> Result<Self> {
        let path = path.as_ref();
        let (rows, cols, values) = matfile::read(path)?;
        if (rows, cols) != (config.n_mels, config.target_width) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", config.n_mels, config.target_width),
                found: format!("{rows}x{cols}"),
            });
        }
        Self::from_values(values, config)
    }

    /// 8-bit grayscale PNG, lowest mel band at the bottom.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, self.cols() as u32, self.rows() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut pixels = Vec::with_capacity(self.values.len());
        for row in (0..self.rows()).rev() {
            for col in 0..self.cols() {
                pixels.push((self.get(row, col) * 255.0).round() as u8);
            }
        }
        let png_err = |e: png::EncodingError| std::io::Error::other(e.to_string());
        let mut w = enc.write_header().map_err(png_err)?;
        w.write_image_data(&pixels).map_err(png_err)?;
        Ok(())
    }
}

/// Reusable mel-spectrogram extractor holding the FFT plan, window and
/// filterbank for one configuration.
#[derive(Clone)]
pub struct MelExtractor {
    config: MelConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    bands: Vec<MelBand>,
}

impl std::fmt::Debug for MelExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelExtractor").field("config", &self.config).finish()
    }
}

impl MelExtractor {
    pub fn new(config: MelConfig) -> Result<Self> {
        config.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(Self {
            window: hann(config.n_fft),
            bands: filterbank(&config),
            fft,
            config,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    /// Mel power spectra in dB, `n_mels` rows by however many frames the
    /// centre-padded STFT produces.
    pub fn mel_db(&self, w: &Waveform) -> Result<(usize, Vec<f64>)> {
        let cfg = &self.config;
        if w.sample_rate_hz() != cfg.sample_rate_hz {
            return Err(invalid(format!(
                "waveform sampled at {} Hz, extractor expects {} Hz",
                w.sample_rate_hz(),
                cfg.sample_rate_hz
            )));
        }
        if w.len() < cfg.hop_length {
            return Err(invalid(format!(
                "waveform of {} samples is shorter than one hop ({})",
                w.len(),
                cfg.hop_length
            )));
        }
        let pad = cfg.n_fft / 2;
        let src = w.samples();
        let frames = 1 + w.len() / cfg.hop_length;
        let n_bins = cfg.n_fft / 2 + 1;
        let mut db = vec![0.0; cfg.n_mels * frames];
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];
        for t in 0..frames {
            let start = (t * cfg.hop_length) as i64 - pad as i64;
            for (i, b) in buf.iter_mut().enumerate() {
                let j = start + i as i64;
                let s = if (0..src.len() as i64).contains(&j) {
                    src[j as usize]
                } else {
                    0.0
                };
                *b = Complex::new(s * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (k, band) in self.bands.iter().enumerate() {
                let e: f64 = band
                    .weights
                    .iter()
                    .zip(&power[band.first_bin..])
                    .map(|(w, p)| w * p)
                    .sum();
                db[k * frames + t] = 10.0 * e.max(POWER_FLOOR).log10();
            }
        }
        Ok((frames, db))
    }

    pub fn extract(&self, w: &Waveform) -> Result<MelSpectrogram> {
        let cfg = &self.config;
        let (frames, db) = self.mel_db(w)?;
        let floor_db = 10.0 * POWER_FLOOR.log10();
        let width = cfg.target_width;
        let mut img = vec![floor_db; cfg.n_mels * width];
        for k in 0..cfg.n_mels {
            let n = frames.min(width);
            img[k * width..k * width + n].copy_from_slice(&db[k * frames..k * frames + n]);
        }
        let (lo, hi) = img
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        let values = if range > 0.0 {
            img.iter()
                .map(|&v| (((v - lo) / range) as f32).clamp(0.0, 1.0))
                .collect()
        } else {
            vec![0.0; img.len()]
        };
        Ok(MelSpectrogram {
            values,
            config: cfg.clone(),
        })
    }
}

/// One-shot convenience around [`MelExtractor`].
pub fn mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    MelExtractor::new(cfg.clone())?.extract(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    pub max_mask_fraction: f64,
    pub masks_per_axis: usize,
    pub seed: u64,
}

impl MaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_mask_fraction) {
            return Err(invalid(format!(
                "mask fraction must lie in [0, 1], got {}",
                self.max_mask_fraction
            )));
        }
        Ok(())
    }
}

/// Zeroes `masks_per_axis` random column bands and as many row bands.
///
/// Each band is `U{0..=floor(fraction·axis_len)}` wide at a uniform position.
pub fn mask_augment(s: &MelSpectrogram, m: &MaskSpec) -> Result<MelSpectrogram> {
    m.validate()?;
    let mut out = s.clone();
    let (rows, cols) = (s.rows(), s.cols());
    let mut rng = rng::rng(m.seed);
    let band = |len: usize, rng: &mut rng::Rng| {
        let max_w = (m.max_mask_fraction * len as f64).floor() as usize;
        let width = rng.random_range(0..=max_w);
        let start = rng.random_range(0..=len - width);
        start..start + width
    };
    for _ in 0..m.masks_per_axis {
        let span = band(cols, &mut rng);
        for r in 0..rows {
            out.values[r * cols + span.start..r * cols + span.end].fill(0.0);
        }
    }
    for _ in 0..m.masks_per_axis {
        let span = band(rows, &mut rng);
        out.values[span.start * cols..span.end * cols].fill(0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_geometries() {
        let p = MelConfig::phone();
        assert_eq!((p.n_mels, p.n_fft, p.hop_length, p.target_width), (64, 1024, 300, 64));
        let d = MelConfig::phone_direct();
        assert_eq!((d.n_mels, d.hop_length, d.target_width), (224, 85, 224));
        assert_eq!(MelConfig::zoom().hop_length, 226);
        assert_eq!(MelConfig::zoom_direct().hop_length, 64);
        assert_eq!(p.nominal_clip_length(), 18_900);
    }

    #[test]
    fn mel_scale_round_trips() {
        for f in [0.0, 100.0, 1000.0, 8000.0, 22_050.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn filters_are_area_normalised() {
        // Integrated over continuous frequency each triangle has unit area;
        // sampled on the bin grid the sum approximates area / bin width.
        let cfg = MelConfig::phone();
        let bin_hz = cfg.sample_rate_hz as f64 / cfg.n_fft as f64;
        for band in filterbank(&cfg).iter().skip(20) {
            let area: f64 = band.weights.iter().sum::<f64>() * bin_hz;
            assert!((area - 1.0).abs() < 0.05, "area {area}");
        }
    }

    #[test]
    fn silence_maps_to_zero_image() {
        let w = Waveform::zeros(18_900, 44_100).unwrap();
        let s = mel_spectrogram(&w, &MelConfig::phone()).unwrap();
        assert_eq!((s.rows(), s.cols()), (64, 64));
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_mismatch_and_short_input() {
        let cfg = MelConfig::phone();
        let w = Waveform::zeros(18_900, 16_000).unwrap();
        assert!(mel_spectrogram(&w, &cfg).is_err());
        let w = Waveform::zeros(299, 44_100).unwrap();
        assert!(mel_spectrogram(&w, &cfg).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = MelConfig::phone();
        cfg.fmax = 30_000.0;
        assert!(cfg.validate().is_err());
        let mut cfg = MelConfig::phone();
        cfg.hop_length = 2048;
        assert!(cfg.validate().is_err());
    }

    fn ones(n: usize) -> MelSpectrogram {
        let cfg = MelConfig::with_geometry(n, 300, n);
        MelSpectrogram::from_values(vec![1.0; n * n], cfg).unwrap()
    }

    #[test]
    fn zero_fraction_mask_is_identity() {
        let s = ones(64);
        let m = MaskSpec {
            max_mask_fraction: 0.0,
            masks_per_axis: 2,
            seed: 5,
        };
        assert_eq!(mask_augment(&s, &m).unwrap(), s);
    }

    #[test]
    fn mask_bounds_on_all_ones_image() {
        let s = ones(64);
        for seed in 0..500 {
            let m = MaskSpec {
                max_mask_fraction: 0.1,
                masks_per_axis: 2,
                seed,
            };
            let out = mask_augment(&s, &m).unwrap();
            let zero_rows = (0..64).filter(|&r| (0..64).all(|c| out.get(r, c) == 0.0)).count();
            let zero_cols = (0..64).filter(|&c| (0..64).all(|r| out.get(r, c) == 0.0)).count();
            assert!(zero_rows <= 12, "seed {seed}: {zero_rows} rows");
            assert!(zero_cols <= 12, "seed {seed}: {zero_cols} cols");
            assert_eq!(out, mask_augment(&s, &m).unwrap());
        }
    }
}
