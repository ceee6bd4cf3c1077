//! Row-stochastic confusion matrices and the substitution channel they define.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{KeyLabel, NUM_KEYS, NUM_SYMBOLS};
use crate::error::{invalid, Error, Result};
use crate::rng;

const ROW_TOLERANCE: f64 = 1e-9;

/// `P(predicted | true)`, rows indexed by true label in alphabet order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ConfusionMatrix {
    rows: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n != NUM_KEYS && n != NUM_SYMBOLS {
            return Err(invalid(format!("confusion matrix must be 36x36 or 37x37, got {n} rows")));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(invalid(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(invalid(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self { rows })
    }

    /// Normalises each row of a count matrix. Every row needs a positive total.
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let rows = counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    return Err(invalid(format!(
                        "class {} has no observations",
                        KeyLabel::from_index(i).map(|k| k.to_string()).unwrap_or_default()
                    )));
                }
                Ok(row.iter().map(|&c| c as f64 / total as f64).collect())
            })
            .collect::<Result<_>>()?;
        Self::from_rows(rows)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_rows(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_rows(vec![vec![1.0 / n as f64; n]; n])
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, truth: usize, predicted: usize) -> f64 {
        self.rows[truth][predicted]
    }

    pub fn mean_diagonal(&self) -> f64 {
        (0..self.size()).map(|i| self.rows[i][i]).sum::<f64>() / self.size() as f64
    }

    /// Expected fraction of characters reproduced correctly for `text`.
    pub fn expected_accuracy(&self, text: &str) -> Result<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for c in text.chars() {
            let k = KeyLabel::from_char(c)?.index();
            if k >= self.size() {
                return Err(Error::Alphabet(c));
            }
            total += self.rows[k][k];
            n += 1;
        }
        Ok(if n == 0 { 1.0 } else { total / n as f64 })
    }
}

impl TryFrom<Vec<Vec<f64>>> for ConfusionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<ConfusionMatrix> for Vec<Vec<f64>> {
    fn from(cm: ConfusionMatrix) -> Self {
        cm.rows
    }
}

/// How the space row is synthesised when no space audio exists.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceMode {
    /// Space is recognised with the mean per-key accuracy; the remaining mass
    /// is spread uniformly over the 36 keys.
    #[default]
    MeanAccuracy,
    /// Space is always recognised.
    Exact,
}

/// Grows a 36×36 key confusion matrix to the 37-symbol channel. Keys are
/// never predicted as space, since the key classifier has no space class.
pub fn extend_with_space(cm36: &ConfusionMatrix, mode: SpaceMode) -> Result<ConfusionMatrix> {
    if cm36.size() != NUM_KEYS {
        return Err(invalid(format!("expected a 36x36 matrix, got {}", cm36.size())));
    }
    let mut rows: Vec<Vec<f64>> = cm36
        .rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.push(0.0);
            r
        })
        .collect();
    let hit = match mode {
        SpaceMode::MeanAccuracy => cm36.mean_diagonal(),
        SpaceMode::Exact => 1.0,
    };
    let mut space = vec![(1.0 - hit) / NUM_KEYS as f64; NUM_KEYS];
    space.push(hit);
    rows.push(space);
    ConfusionMatrix::from_rows(rows)
}

fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding left `u` above the cumulative sum: take the last non-zero entry.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Replaces each character by a draw from its confusion row.
pub fn simulate_channel(cm: &ConfusionMatrix, text: &str, seed: u64) -> Result<String> {
    if cm.size() != NUM_SYMBOLS {
        return Err(invalid("the channel needs a 37x37 matrix"));
    }
    let mut rng = rng::rng(seed);
    text.chars()
        .map(|c| {
            let k = KeyLabel::from_char(c)?;
            let j = sample_row(&cm.rows[k.index()], rng.random::<f64>());
            Ok(KeyLabel::from_index(j).expect("row index in range").as_char())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_extends_to_identity() {
        let cm = extend_with_space(&ConfusionMatrix::identity(36).unwrap(), SpaceMode::MeanAccuracy)
            .unwrap();
        assert_eq!(cm, ConfusionMatrix::identity(37).unwrap());
    }

    #[test]
    fn uniform_space_row() {
        let cm = extend_with_space(&ConfusionMatrix::uniform(36).unwrap(), SpaceMode::MeanAccuracy)
            .unwrap();
        let space = &cm.rows()[36];
        assert!((space[36] - 1.0 / 36.0).abs() < 1e-15);
        let off = (35.0 / 36.0) / 36.0;
        assert!(space[..36].iter().all(|&p| (p - off).abs() < 1e-15));
        assert!(cm.rows()[..36].iter().all(|r| r[36] == 0.0));
    }

    #[test]
    fn mean_diagonal_point_nine() {
        let rows: Vec<Vec<f64>> = (0..36)
            .map(|i| (0..36).map(|j| if i == j { 0.9 } else { 0.1 / 35.0 }).collect())
            .collect();
        let cm = ConfusionMatrix::from_rows(rows).unwrap();
        let ext = extend_with_space(&cm, SpaceMode::MeanAccuracy).unwrap();
        let space = &ext.rows()[36];
        assert!((space[36] - 0.9).abs() < 1e-12);
        assert!(space[..36].iter().all(|&p| (p - 0.1 / 36.0).abs() < 1e-12));
        for row in ext.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_stochastic() {
        let mut rows = vec![vec![0.0; 36]; 36];
        rows[0][0] = 1.0;
        assert!(ConfusionMatrix::from_rows(rows).is_err());
        assert!(ConfusionMatrix::from_rows(vec![vec![1.0]]).is_err());
        assert!(serde_json::from_str::<ConfusionMatrix>("[[1.0]]").is_err());
    }

    #[test]
    fn identity_channel_is_lossless() {
        let cm = ConfusionMatrix::identity(37).unwrap();
        assert_eq!(simulate_channel(&cm, "the cat 42", 1).unwrap(), "the cat 42");
        assert!(matches!(simulate_channel(&cm, "Tab", 1), Err(Error::Alphabet('T'))));
    }

    #[test]
    fn deterministic_substitution() {
        let mut cm = ConfusionMatrix::identity(37).unwrap();
        let t = KeyLabel::from_char('t').unwrap().index();
        let f = KeyLabel::from_char('f').unwrap().index();
        cm.rows[t][t] = 0.0;
        cm.rows[t][f] = 1.0;
        assert_eq!(simulate_channel(&cm, "the cat", 3).unwrap(), "fhe caf");
    }

    #[test]
    fn sampling_edge() {
        assert_eq!(sample_row(&[0.5, 0.5, 0.0], 0.999_999_999_999), 1);
        assert_eq!(sample_row(&[0.0, 1.0], 0.0), 1);
    }
}
