use serde::{Deserialize, Serialize};

use super::{energy_envelope, Waveform};
use crate::error::{invalid, Error, Result};

/// Parameters for splitting a multi-stroke recording into per-keystroke clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationConfig {
    pub expected_segments: usize,
    pub energy_window: usize,
    pub energy_hop: usize,
    /// Minimum distance between accepted peaks, in seconds.
    pub min_separation_secs: f64,
    /// Samples per extracted clip.
    pub clip_length: usize,
    /// A frame is a peak candidate only if its energy exceeds this multiple of
    /// the median frame energy.
    pub min_peak_to_median: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            expected_segments: 25,
            energy_window: 1024,
            energy_hop: 256,
            min_separation_secs: 0.1,
            // 300 * (64 - 1): one phone-profile spectrogram width.
            clip_length: 18_900,
            min_peak_to_median: 4.0,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        if self.expected_segments == 0 || self.energy_window == 0 || self.energy_hop == 0 {
            return Err(invalid("segment count, energy window and hop must be positive"));
        }
        if self.clip_length == 0 {
            return Err(invalid("clip length must be positive"));
        }
        if self.energy_hop > self.energy_window {
            return Err(invalid("energy hop must not exceed the energy window"));
        }
        if !(self.min_separation_secs > 0.0)
            || self.min_separation_secs * sample_rate_hz as f64 <= self.energy_hop as f64
        {
            return Err(invalid(
                "minimum separation must span more than one envelope hop",
            ));
        }
        if !(self.min_peak_to_median >= 1.0) {
            return Err(invalid("peak-to-median ratio must be >= 1"));
        }
        Ok(())
    }

    fn min_separation_frames(&self, sample_rate_hz: u32) -> usize {
        (self.min_separation_secs * sample_rate_hz as f64 / self.energy_hop as f64).ceil() as usize
    }
}

/// Splits a recording into exactly `cfg.expected_segments` clips centred on
/// the strongest, mutually separated energy peaks, in temporal order.
pub fn segment_keystrokes(w: &Waveform, cfg: &SegmentationConfig) -> Result<Vec<Waveform>> {
    cfg.validate(w.sample_rate_hz())?;
    let peaks = detect_peaks(w, cfg)?;
    let half = cfg.clip_length / 2;
    Ok(peaks
        .into_iter()
        .map(|frame| {
            let centre = frame * cfg.energy_hop + cfg.energy_window / 2;
            extract_clip(w, centre as i64 - half as i64, cfg.clip_length)
        })
        .collect())
}

/// Envelope frame indices of the accepted peaks, ascending.
pub(crate) fn detect_peaks(w: &Waveform, cfg: &SegmentationConfig) -> Result<Vec<usize>> {
    let too_few = |found| Error::Segmentation {
        key: None,
        found,
        expected: cfg.expected_segments,
    };
    if w.len() < cfg.energy_window {
        return Err(too_few(0));
    }
    let env = energy_envelope(w, cfg.energy_window, cfg.energy_hop)?;
    let threshold = median(&env) * cfg.min_peak_to_median;

    let mut candidates: Vec<usize> = (0..env.len())
        .filter(|&i| {
            let e = env[i];
            e > threshold
                && e > 0.0
                && (i == 0 || e > env[i - 1])
                && (i + 1 == env.len() || e >= env[i + 1])
        })
        .collect();
    // Strongest first; earlier frame wins ties.
    candidates.sort_by(|&a, &b| env[b].total_cmp(&env[a]).then(a.cmp(&b)));

    let sep = cfg.min_separation_frames(w.sample_rate_hz());
    let mut accepted: Vec<usize> = Vec::with_capacity(cfg.expected_segments);
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= sep) {
            accepted.push(c);
            if accepted.len() == cfg.expected_segments {
                break;
            }
        }
    }
    if accepted.len() < cfg.expected_segments {
        return Err(too_few(accepted.len()));
    }
    accepted.sort_unstable();
    Ok(accepted)
}

fn extract_clip(w: &Waveform, start: i64, len: usize) -> Waveform {
    let src = w.samples();
    let clip = (0..len as i64)
        .map(|k| {
            let i = start + k;
            if (0..src.len() as i64).contains(&i) {
                src[i as usize]
            } else {
                0.0
            }
        })
        .collect();
    w.with_samples(clip)
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clicks(positions: &[usize], len: usize) -> Waveform {
        let mut s = vec![0.0; len];
        for &p in positions {
            s[p] = 1.0;
            s[p + 1] = -0.6;
        }
        Waveform::new(s, 44_100).unwrap()
    }

    #[test]
    fn silence_is_a_segmentation_error() {
        let w = Waveform::zeros(44_100 * 3, 44_100).unwrap();
        let err = segment_keystrokes(&w, &SegmentationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Segmentation { found: 0, expected: 25, .. }));
    }

    #[test]
    fn too_few_clicks_errors_instead_of_returning_fewer() {
        let pos: Vec<usize> = (0..5).map(|k| 10_000 + k * 22_050).collect();
        let w = clicks(&pos, 200_000);
        match segment_keystrokes(&w, &SegmentationConfig::default()) {
            Err(Error::Segmentation { found, expected, .. }) => {
                assert_eq!((found, expected), (5, 25));
            }
            other => panic!("expected segmentation error, got {other:?}"),
        }
    }

    #[test]
    fn edge_clips_are_zero_padded() {
        let cfg = SegmentationConfig {
            expected_segments: 1,
            ..SegmentationConfig::default()
        };
        let w = clicks(&[600], 30_000);
        let segs = segment_keystrokes(&w, &cfg).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), cfg.clip_length);
        assert_eq!(segs[0].samples()[0], 0.0);
        assert!(segs[0].samples().contains(&1.0));
    }

    #[test]
    fn config_validation() {
        let bad = SegmentationConfig {
            energy_hop: 2048,
            ..SegmentationConfig::default()
        };
        assert!(bad.validate(44_100).is_err());
        let bad = SegmentationConfig {
            min_separation_secs: 0.001,
            ..SegmentationConfig::default()
        };
        assert!(bad.validate(44_100).is_err());
        assert!(SegmentationConfig::default().validate(44_100).is_ok());
    }
}
