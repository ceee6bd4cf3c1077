//! Extracts the phone-profile mel image of one synthetic keystroke, applies
//! time/frequency masking, and writes both as PNG files.

use asca::dataset::{KeyLabel, SynthKeyboard};
use asca::spectrogram::{mask_augment, MaskSpec, MelConfig, MelExtractor};

fn main() -> asca::Result<()> {
    let cfg = MelConfig::phone();
    let stroke = SynthKeyboard::default().stroke(KeyLabel::from_char('a')?, 3);
    let spec = MelExtractor::new(cfg.clone())?.extract(&stroke)?;
    println!("{}x{} image from {} samples", spec.rows(), spec.cols(), stroke.len());

    let masked = mask_augment(
        &spec,
        &MaskSpec {
            max_mask_fraction: 0.1,
            masks_per_axis: 2,
            seed: 9,
        },
    )?;
    let out = std::env::temp_dir();
    spec.write_png(out.join("keystroke_a.png"))?;
    masked.write_png(out.join("keystroke_a_masked.png"))?;
    println!("wrote {}", out.join("keystroke_a*.png").display());
    Ok(())
}
