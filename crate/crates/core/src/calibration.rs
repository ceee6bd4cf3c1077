//! Noise-factor calibration.
//!
//! Finds the η at which the attack reaches a target character accuracy by
//! bisection. Every probe reuses the same sentences and the same seed ladder,
//! so the measured curve only changes through η and is monotone in practice.

use serde::{Deserialize, Serialize};

use crate::attack::{mean_accuracy, AudioAttack};
use crate::error::{invalid, Error, Result};
use crate::signal::NoiseLevel;

/// Anything whose mean character accuracy can be measured at a noise factor.
pub trait AccuracyProbe: Sync {
    fn measure(&self, eta: f64, sentences: &[String], seed: u64) -> Result<f64>;
}

impl AccuracyProbe for AudioAttack<'_> {
    fn measure(&self, eta: f64, sentences: &[String], seed: u64) -> Result<f64> {
        Ok(mean_accuracy(&self.run(sentences, NoiseLevel::Low, eta, seed)?))
    }
}

/// A closed-form accuracy curve, mainly for testing the search itself.
pub struct AnalyticProbe<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> AccuracyProbe for AnalyticProbe<F> {
    fn measure(&self, eta: f64, _sentences: &[String], _seed: u64) -> Result<f64> {
        Ok((self.0)(eta))
    }
}

/// Mean character accuracy of the attack at `eta` over `sentences`.
pub fn measure_accuracy(
    probe: &dyn AccuracyProbe,
    eta: f64,
    sentences: &[String],
    seed: u64,
) -> Result<f64> {
    if sentences.is_empty() {
        return Err(invalid("probe corpus is empty"));
    }
    probe.measure(eta, sentences, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    pub target: f64,
    pub tolerance: f64,
    pub eta_low: f64,
    pub eta_high: f64,
    pub max_iterations: usize,
}

impl CalibrationSpec {
    pub fn new(target: f64) -> Self {
        Self {
            target,
            tolerance: 0.02,
            eta_low: 0.0,
            eta_high: 1.0,
            max_iterations: 30,
        }
    }

    pub fn for_level(level: NoiseLevel) -> Self {
        Self::new(level.target_accuracy())
    }

    fn validate(&self) -> Result<()> {
        if !(self.target > 0.0 && self.target <= 1.0) {
            return Err(invalid(format!("target accuracy {} outside (0, 1]", self.target)));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        if !(self.eta_low >= 0.0 && self.eta_high > self.eta_low && self.eta_high.is_finite()) {
            return Err(invalid(format!(
                "bad eta bounds [{}, {}]",
                self.eta_low, self.eta_high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationResult {
    pub eta: f64,
    pub achieved_accuracy: f64,
    pub target: f64,
    /// Bisection steps taken, not counting the two bracket probes.
    pub iterations: usize,
    pub samples_per_probe: usize,
    pub seed: u64,
}

/// Bisects η until the measured accuracy is within tolerance of the target.
pub fn calibrate_eta(
    probe: &dyn AccuracyProbe,
    spec: &CalibrationSpec,
    sentences: &[String],
    seed: u64,
) -> Result<CalibrationResult> {
    spec.validate()?;
    let result = |eta, acc, iterations| CalibrationResult {
        eta,
        achieved_accuracy: acc,
        target: spec.target,
        iterations,
        samples_per_probe: sentences.len(),
        seed,
    };

    let (mut lo, mut hi) = (spec.eta_low, spec.eta_high);
    let acc_lo = measure_accuracy(probe, lo, sentences, seed)?;
    let acc_hi = measure_accuracy(probe, hi, sentences, seed)?;
    if !(acc_lo >= spec.target && spec.target >= acc_hi) {
        return Err(Error::Bracket {
            target: spec.target,
            low_eta: lo,
            high_eta: hi,
            low_accuracy: acc_lo,
            high_accuracy: acc_hi,
        });
    }
    let mut best = if (acc_lo - spec.target).abs() <= (acc_hi - spec.target).abs() {
        result(lo, acc_lo, 0)
    } else {
        result(hi, acc_hi, 0)
    };
    if (best.achieved_accuracy - spec.target).abs() <= spec.tolerance {
        return Ok(best);
    }

    for it in 1..=spec.max_iterations {
        let mid = 0.5 * (lo + hi);
        let acc = measure_accuracy(probe, mid, sentences, seed)?;
        if (acc - spec.target).abs() < (best.achieved_accuracy - spec.target).abs() {
            best = result(mid, acc, it);
        }
        best.iterations = it;
        if (acc - spec.target).abs() <= spec.tolerance {
            return Ok(result(mid, acc, it));
        }
        if acc > spec.target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence(Box::new(best)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe_corpus() -> Vec<String> {
        vec!["unused".into()]
    }

    #[test]
    fn analytic_inverse() {
        let probe = AnalyticProbe(|eta: f64| (-eta).exp());
        let spec = CalibrationSpec {
            tolerance: 1e-6,
            eta_high: 5.0,
            ..CalibrationSpec::new(0.5)
        };
        let r = calibrate_eta(&probe, &spec, &probe_corpus(), 0).unwrap();
        assert!((r.achieved_accuracy - 0.5).abs() <= 1e-6);
        assert!((r.eta - std::f64::consts::LN_2).abs() < 1e-5);
        assert!(r.iterations <= 30);
        assert_eq!(probe.measure(r.eta, &[], 0).unwrap(), r.achieved_accuracy);
    }

    #[test]
    fn bracket_and_convergence_errors() {
        let probe = AnalyticProbe(|eta: f64| (-eta).exp());
        let spec = CalibrationSpec {
            eta_high: 0.1,
            ..CalibrationSpec::new(0.5)
        };
        assert!(matches!(
            calibrate_eta(&probe, &spec, &probe_corpus(), 0),
            Err(Error::Bracket { .. })
        ));
        let step = AnalyticProbe(|eta: f64| if eta < 1.0 { 0.9 } else { 0.1 });
        let spec = CalibrationSpec {
            eta_high: 2.0,
            max_iterations: 8,
            ..CalibrationSpec::new(0.5)
        };
        match calibrate_eta(&step, &spec, &probe_corpus(), 0) {
            Err(Error::NonConvergence(best)) => {
                assert_eq!(best.iterations, 8);
                assert!(((best.achieved_accuracy - 0.5).abs() - 0.4).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(measure_accuracy(&step, 0.0, &[], 0).is_err());
    }
}
