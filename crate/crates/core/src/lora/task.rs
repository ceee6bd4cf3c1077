use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{CurriculumTask, Example, FrozenLinear};
use crate::dataset::{KeystrokeDataset, NUM_KEYS};
use crate::error::{invalid, Result};
use crate::rng::derive_seed;
use crate::signal::{add_gaussian_noise, NoiseLevel, NoiseSpec};
use crate::spectrogram::{MelExtractor, MelSpectrogram};

/// Mean of each mel band over time: one value per row of the image.
pub fn band_features(spec: &MelSpectrogram) -> DVector<f64> {
    let (rows, cols) = (spec.rows(), spec.cols());
    DVector::from_iterator(
        rows,
        (0..rows).map(|r| (0..cols).map(|c| f64::from(spec.get(r, c))).sum::<f64>() / cols as f64),
    )
}

/// A linear layer equivalent to nearest-centroid classification:
/// row `k` is `μ_k`, bias `k` is `−|μ_k|²/2`.
pub fn centroid_base(examples: &[Example], classes: usize) -> Result<FrozenLinear> {
    let d_in = examples
        .first()
        .map(|e| e.0.len())
        .ok_or_else(|| invalid("no examples"))?;
    let mut sums = DMatrix::zeros(classes, d_in);
    let mut counts = vec![0usize; classes];
    for (x, y) in examples {
        if *y >= classes {
            return Err(invalid(format!("label {y} out of range")));
        }
        let mut row = sums.row_mut(*y);
        row += x.transpose();
        counts[*y] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(invalid(format!("class {k} has no examples")));
    }
    for (k, &n) in counts.iter().enumerate() {
        let mut row = sums.row_mut(k);
        row /= n as f64;
    }
    let bias = DVector::from_iterator(classes, sums.row_iter().map(|r| -0.5 * r.norm_squared()));
    FrozenLinear::new(sums, bias)
}

/// 36-way keystroke classification on band features, with stage-specific
/// waveform noise freshly drawn for every epoch.
pub struct KeystrokeTask<'a> {
    ds: &'a KeystrokeDataset,
    items: Vec<usize>,
    extractor: MelExtractor,
    /// Noise factor per level, indexed Low, Medium, High.
    etas: [f64; 3],
    seed: u64,
}

impl<'a> KeystrokeTask<'a> {
    pub fn new(
        ds: &'a KeystrokeDataset,
        items: Vec<usize>,
        extractor: MelExtractor,
        etas: [f64; 3],
        seed: u64,
    ) -> Result<Self> {
        if items.is_empty() || items.iter().any(|&i| i >= ds.len()) {
            return Err(invalid("task items must be non-empty dataset indices"));
        }
        for &eta in &etas {
            NoiseSpec::new(eta, 0)?;
        }
        Ok(Self {
            ds,
            items,
            extractor,
            etas,
            seed,
        })
    }

    /// Features of every item at noise factor `eta`, seeds drawn from `stream`.
    pub fn features_at(&self, eta: f64, stream: u64) -> Result<Vec<Example>> {
        let base = derive_seed(self.seed, stream);
        self.items
            .par_iter()
            .map(|&i| {
                let noise = NoiseSpec::new(eta, derive_seed(base, i as u64))?;
                let w = add_gaussian_noise(self.ds.waveform(i), noise)?;
                Ok((band_features(&self.extractor.extract(&w)?), self.ds.label(i).index()))
            })
            .collect()
    }

    pub fn eta(&self, level: NoiseLevel) -> f64 {
        self.etas[level as usize]
    }
}

impl CurriculumTask for KeystrokeTask<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.extractor.config().n_mels, NUM_KEYS)
    }

    fn examples(&self, stage: usize, level: NoiseLevel, epoch: usize) -> Result<Vec<Example>> {
        self.features_at(self.eta(level), ((stage as u64) << 32) | epoch as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_base_is_nearest_centroid() {
        let ex: Vec<Example> = vec![
            (DVector::from_vec(vec![0.0, 0.0]), 0),
            (DVector::from_vec(vec![2.0, 0.0]), 0),
            (DVector::from_vec(vec![0.0, 4.0]), 1),
        ];
        let base = centroid_base(&ex, 2).unwrap();
        assert_eq!(base.w0().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);
        assert_eq!(base.bias().as_slice(), &[-0.5, -8.0]);
        let near_first = base.forward(&DVector::from_vec(vec![1.0, 1.0]));
        assert!(near_first[0] > near_first[1]);
        assert!(centroid_base(&ex, 3).is_err());
    }
}
