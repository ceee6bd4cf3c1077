//! Segments a synthetic 25-stroke recording and prints where each clip peaks.
//!
//! Pass a WAV path to segment your own recording instead.

use asca::dataset::{synth_recording, KeyLabel};
use asca::signal::wav::read_wav;
use asca::signal::{segment_keystrokes, SegmentationConfig};

fn main() -> asca::Result<()> {
    let recording = match std::env::args().nth(1) {
        Some(path) => read_wav(path)?,
        None => synth_recording(KeyLabel::from_char('k')?, 25, 1),
    };
    let cfg = SegmentationConfig::default();
    let clips = segment_keystrokes(&recording, &cfg)?;
    println!(
        "{:.1} s recording -> {} clips of {} samples",
        recording.duration_secs(),
        clips.len(),
        cfg.clip_length
    );
    for (i, clip) in clips.iter().enumerate() {
        let (peak, _) = clip
            .samples()
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (j, v)| if v.abs() > best.1 { (j, v.abs()) } else { best });
        println!("clip {i:2}: peak at sample {peak}");
    }
    Ok(())
}
