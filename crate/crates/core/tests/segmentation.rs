use asca::dataset::{load_recordings, synth_recording, DatasetProfile, KeyLabel};
use asca::signal::wav::write_wav;
use asca::signal::{energy_envelope, segment_keystrokes, SegmentationConfig, Waveform};
use asca::Error;

const SR: u32 = 44_100;

/// Short decaying clicks at known sample positions over a quiet floor.
fn click_train(positions: &[usize], len: usize) -> Waveform {
    let mut s = vec![0.0; len];
    for (i, v) in s.iter_mut().enumerate() {
        *v = 1e-4 * ((i as f64 * 0.37).sin());
    }
    for &p in positions {
        for k in 0..200 {
            if p + k < len {
                s[p + k] += (-(k as f64) / 40.0).exp() * if k % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
    }
    Waveform::new(s, SR).unwrap()
}

#[test]
fn impulse_train_envelope_peaks_at_click_frames() {
    let hop = 256;
    let window = 1024;
    let clicks: Vec<usize> = (1..6).map(|i| i * 8000).collect();
    let w = click_train(&clicks, 48_000);
    let env = energy_envelope(&w, window, hop).unwrap();
    for &c in &clicks {
        // Local maximum among frames whose window covers the click.
        let covering = (c + 1).saturating_sub(window).div_ceil(hop)..=c / hop;
        let best = covering
            .clone()
            .max_by(|&a, &b| env[a].total_cmp(&env[b]))
            .unwrap();
        let expected = c / hop;
        assert!(
            best.abs_diff(expected) <= window / hop,
            "click {c}: peak frame {best}, expected near {expected}"
        );
        assert!(env[best] > 10.0 * env[(c + 4000) / hop]);
    }
}

#[test]
fn twenty_five_clicks_give_twenty_five_clips_each_holding_its_click() {
    let spacing = SR as usize / 2;
    let clicks: Vec<usize> = (0..25).map(|i| spacing / 2 + i * spacing).collect();
    let w = click_train(&clicks, spacing * 25 + spacing / 2);
    let cfg = SegmentationConfig::default();
    let clips = segment_keystrokes(&w, &cfg).unwrap();
    assert_eq!(clips.len(), 25);
    for (clip, &c) in clips.iter().zip(&clicks) {
        assert_eq!(clip.len(), cfg.clip_length);
        // The clip must contain the click's first (largest) sample.
        let peak = clip
            .samples()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        assert!((peak.1 - w.samples()[c]).abs() < 1e-12, "click at {c} missing");
    }
}

#[test]
fn synthetic_keyboard_directory_yields_nine_hundred_items() {
    let dir = tempfile::tempdir().unwrap();
    for key in KeyLabel::keys() {
        let w = synth_recording(key, 25, key.index() as u64);
        write_wav(dir.path().join(format!("{}.wav", key.file_stem())), &w).unwrap();
    }
    let ds = load_recordings(dir.path(), DatasetProfile::Synthetic, &SegmentationConfig::default()).unwrap();
    assert_eq!(ds.len(), 900);
    assert!(ds.indices_by_class().iter().all(|c| c.len() == 25));
}

#[test]
fn one_silent_file_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    for key in KeyLabel::keys() {
        let w = if key.as_char() == 'q' {
            Waveform::zeros(SR as usize * 13, SR).unwrap()
        } else {
            synth_recording(key, 25, 7)
        };
        write_wav(dir.path().join(format!("{}.wav", key.file_stem())), &w).unwrap();
    }
    match load_recordings(dir.path(), DatasetProfile::Synthetic, &SegmentationConfig::default()) {
        Err(Error::Segmentation { key, found, expected }) => {
            assert_eq!(key.as_deref(), Some("q"));
            assert_eq!(found, 0);
            assert_eq!(expected, 25);
        }
        other => panic!("expected a segmentation error, got {other:?}"),
    }
}
