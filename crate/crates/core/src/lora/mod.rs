//! Low-rank adaptation of a frozen linear softmax layer.
//!
//! The effective weight is `W = W0 + A·B` with `A` of shape `d_out × c` and
//! `B` of shape `c × d_in`. Only `A` and `B` are trained, with AdamW on
//! cross-entropy, through a curriculum of noise stages.

mod task;

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matfile;
use crate::rng::{self, derive_seed};
use crate::signal::NoiseLevel;

pub use task::{band_features, centroid_base, KeystrokeTask};

/// A labelled feature vector.
pub type Example = (DVector<f64>, usize);

/// The frozen base layer `logits = W0·x + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenLinear {
    w0: DMatrix<f64>,
    bias: DVector<f64>,
}

impl FrozenLinear {
    pub fn new(w0: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if bias.len() != w0.nrows() {
            return Err(Error::DimensionMismatch {
                expected: w0.nrows().to_string(),
                found: bias.len().to_string(),
            });
        }
        if w0.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("base weights must be finite"));
        }
        Ok(Self { w0, bias })
    }

    pub fn w0(&self) -> &DMatrix<f64> {
        &self.w0
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn d_out(&self) -> usize {
        self.w0.nrows()
    }

    pub fn d_in(&self) -> usize {
        self.w0.ncols()
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w0 * x + &self.bias
    }

    /// `W0` then `bias` in the f64 matrix file layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = matfile::encode_f64(self.d_out(), self.d_in(), &row_major(&self.w0));
        out.extend(matfile::encode_f64(1, self.bias.len(), self.bias.as_slice()));
        out
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// The trainable factors `A` (`d_out × c`) and `B` (`c × d_in`).
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LoraAdapter {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let c = a.ncols();
        if b.nrows() != c {
            return Err(Error::DimensionMismatch {
                expected: format!("B with {c} rows"),
                found: format!("{} rows", b.nrows()),
            });
        }
        if c == 0 || c >= a.nrows().min(b.ncols()) {
            return Err(invalid(format!(
                "rank {c} must be positive and below min(d_out, d_in) = {}",
                a.nrows().min(b.ncols())
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("adapter factors must be finite"));
        }
        Ok(Self { a, b })
    }

    /// `A = 0`, `B ~ N(0, b_std²)`, so the initial update is exactly zero.
    pub fn init(d_out: usize, d_in: usize, rank: usize, b_std: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, b_std).map_err(|e| invalid(e.to_string()))?;
        let mut rng = rng::rng(seed);
        let b = DMatrix::from_fn(rank, d_in, |_, _| normal.sample(&mut rng));
        Self::new(DMatrix::zeros(d_out, rank), b)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn delta(&self) -> DMatrix<f64> {
        &self.a * &self.b
    }

    fn check(&self, base: &FrozenLinear) -> Result<()> {
        if self.a.nrows() != base.d_out() || self.b.ncols() != base.d_in() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", base.d_out(), base.d_in()),
                found: format!("{}x{}", self.a.nrows(), self.b.ncols()),
            });
        }
        Ok(())
    }

    /// Writes `lora_a.asmd`, `lora_b.asmd` and `adapter.json`.
    pub fn save(&self, dir: impl AsRef<Path>, meta: &AdapterMeta) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        matfile::write_f64(dir.join("lora_a.asmd"), self.a.nrows(), self.a.ncols(), &row_major(&self.a))?;
        matfile::write_f64(dir.join("lora_b.asmd"), self.b.nrows(), self.b.ncols(), &row_major(&self.b))?;
        fs::write(dir.join("adapter.json"), serde_json::to_string_pretty(meta)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, AdapterMeta)> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            matfile::read_f64(dir.join(name)).map(|(r, c, v)| DMatrix::from_row_slice(r, c, &v))
        };
        let adapter = Self::new(read("lora_a.asmd")?, read("lora_b.asmd")?)?;
        let meta: AdapterMeta = serde_json::from_str(&fs::read_to_string(dir.join("adapter.json"))?)?;
        if meta.rank != adapter.rank() {
            return Err(Error::Format {
                path: dir.join("adapter.json"),
                reason: format!("rank {} does not match the stored factors", meta.rank),
            });
        }
        Ok((adapter, meta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterMeta {
    pub rank: usize,
    pub curriculum: CurriculumSpec,
    pub log: Vec<StageLog>,
}

/// `W0 + A·B`; the base is untouched.
pub fn merge(base: &FrozenLinear, ad: &LoraAdapter) -> Result<DMatrix<f64>> {
    ad.check(base)?;
    Ok(&base.w0 + ad.delta())
}

/// `(W0 + A·B)·x + bias`, evaluated as `W0·x + A·(B·x)`.
pub fn lora_forward(base: &FrozenLinear, ad: &LoraAdapter, x: &DVector<f64>) -> Result<DVector<f64>> {
    ad.check(base)?;
    if x.len() != base.d_in() {
        return Err(Error::DimensionMismatch {
            expected: base.d_in().to_string(),
            found: x.len().to_string(),
        });
    }
    Ok(&base.w0 * x + &ad.a * (&ad.b * x) + &base.bias)
}

fn log_softmax(z: &DVector<f64>) -> DVector<f64> {
    let max = z.max();
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.map(|v| v - lse)
}

/// Gradients of the mean loss with respect to `A` and `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Mean cross-entropy over `batch`.
pub fn loss(base: &FrozenLinear, ad: &LoraAdapter, batch: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in batch {
        total -= log_softmax(&lora_forward(base, ad, x)?)[*y];
    }
    Ok(total / batch.len().max(1) as f64)
}

/// Mean cross-entropy and its analytic gradients:
/// `dA = g·(B·x)ᵀ`, `dB = (Aᵀ·g)·xᵀ` with `g = softmax(z) − onehot(y)`.
pub fn loss_and_gradients(
    base: &FrozenLinear,
    ad: &LoraAdapter,
    batch: &[Example],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let mut ga = DMatrix::zeros(ad.a.nrows(), ad.a.ncols());
    let mut gb = DMatrix::zeros(ad.b.nrows(), ad.b.ncols());
    let mut total = 0.0;
    for (x, y) in batch {
        if *y >= base.d_out() {
            return Err(invalid(format!("label {y} out of range")));
        }
        let ls = log_softmax(&lora_forward(base, ad, x)?);
        total -= ls[*y];
        let mut g = ls.map(f64::exp);
        g[*y] -= 1.0;
        let h = &ad.b * x;
        ga += &g * h.transpose();
        gb += (ad.a.transpose() * &g) * x.transpose();
    }
    let n = batch.len() as f64;
    Ok((total / n, Gradients { a: ga / n, b: gb / n }))
}

/// Decoupled-weight-decay Adam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

struct Moments {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl Moments {
    fn zeros_like(p: &DMatrix<f64>) -> Self {
        Self {
            m: DMatrix::zeros(p.nrows(), p.ncols()),
            v: DMatrix::zeros(p.nrows(), p.ncols()),
        }
    }

    fn step(&mut self, opt: &AdamW, t: i32, p: &mut DMatrix<f64>, g: &DMatrix<f64>) {
        let (c1, c2) = (1.0 - opt.beta1.powi(t), 1.0 - opt.beta2.powi(t));
        for i in 0..p.len() {
            self.m[i] = opt.beta1 * self.m[i] + (1.0 - opt.beta1) * g[i];
            self.v[i] = opt.beta2 * self.v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            let update = (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + opt.epsilon);
            p[i] -= opt.learning_rate * (update + opt.weight_decay * p[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub level: NoiseLevel,
    pub epochs: usize,
}

/// Ordered noise stages and optimiser settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumSpec {
    pub stages: Vec<Stage>,
    pub optimizer: AdamW,
    pub batch_size: usize,
    /// Standard deviation of the initial `B`.
    pub init_std: f64,
    pub seed: u64,
}

impl CurriculumSpec {
    /// One epoch each at Low, Medium and High, learning rate 0.0002.
    pub fn standard(seed: u64) -> Self {
        Self {
            stages: NoiseLevel::ALL
                .iter()
                .map(|&level| Stage { level, epochs: 1 })
                .collect(),
            optimizer: AdamW::new(2e-4),
            batch_size: 16,
            init_std: 0.01,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(invalid("curriculum has no stages"));
        }
        if self.stages.windows(2).any(|w| w[1].level < w[0].level) {
            return Err(invalid("curriculum noise levels must be non-decreasing"));
        }
        if self.stages.iter().any(|s| s.epochs == 0) {
            return Err(invalid("every stage needs at least one epoch"));
        }
        if !(self.optimizer.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(invalid("learning rate and batch size must be positive"));
        }
        if !(self.init_std > 0.0) {
            return Err(invalid("init_std must be positive"));
        }
        Ok(())
    }
}

/// Supplies training examples for each curriculum stage.
pub trait CurriculumTask {
    /// `(d_in, d_out)`.
    fn dims(&self) -> (usize, usize);

    fn examples(&self, stage: usize, level: NoiseLevel, epoch: usize) -> Result<Vec<Example>>;
}

/// Fixed examples for every stage; useful for toy problems.
pub struct StaticTask {
    pub examples: Vec<Example>,
    pub d_out: usize,
}

impl CurriculumTask for StaticTask {
    fn dims(&self) -> (usize, usize) {
        (self.examples.first().map_or(0, |e| e.0.len()), self.d_out)
    }

    fn examples(&self, _stage: usize, _level: NoiseLevel, _epoch: usize) -> Result<Vec<Example>> {
        Ok(self.examples.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageLog {
    pub level: NoiseLevel,
    pub epochs: usize,
    pub steps: usize,
    /// Mean loss over the stage's first-epoch data before and after the stage.
    pub loss_before: f64,
    pub loss_after: f64,
}

/// Trains a rank-`rank` adapter on top of `base`, stage by stage.
pub fn train_lora(
    base: &FrozenLinear,
    rank: usize,
    task: &dyn CurriculumTask,
    spec: &CurriculumSpec,
) -> Result<(LoraAdapter, Vec<StageLog>)> {
    spec.validate()?;
    let (d_in, d_out) = task.dims();
    if (d_in, d_out) != (base.d_in(), base.d_out()) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", base.d_out(), base.d_in()),
            found: format!("{d_out}x{d_in}"),
        });
    }
    let mut ad = LoraAdapter::init(d_out, d_in, rank, spec.init_std, derive_seed(spec.seed, 0))?;
    let (mut ma, mut mb) = (Moments::zeros_like(&ad.a), Moments::zeros_like(&ad.b));
    let mut t = 0i32;
    let mut logs = Vec::with_capacity(spec.stages.len());

    for (s, stage) in spec.stages.iter().enumerate() {
        let mut first = None;
        let mut loss_before = f64::NAN;
        let mut steps = 0usize;
        for epoch in 0..stage.epochs {
            let data = task.examples(s, stage.level, epoch)?;
            if data.is_empty() {
                return Err(invalid(format!("stage {s} has no examples")));
            }
            if epoch == 0 {
                loss_before = loss(base, &ad, &data)?;
            }
            let mut order: Vec<usize> = (0..data.len()).collect();
            let stream = derive_seed(derive_seed(spec.seed, 1 + s as u64), epoch as u64);
            order.shuffle(&mut rng::rng(stream));
            for chunk in order.chunks(spec.batch_size) {
                let batch: Vec<Example> = chunk.iter().map(|&i| data[i].clone()).collect();
                let (l, g) = loss_and_gradients(base, &ad, &batch)?;
                if !l.is_finite() || g.a.iter().chain(g.b.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { stage: s, step: steps });
                }
                t += 1;
                ma.step(&spec.optimizer, t, &mut ad.a, &g.a);
                mb.step(&spec.optimizer, t, &mut ad.b, &g.b);
                steps += 1;
            }
            if epoch == 0 {
                first = Some(data);
            }
        }
        let loss_after = loss(base, &ad, first.as_deref().unwrap_or_default())?;
        if !loss_after.is_finite() {
            return Err(Error::Divergence { stage: s, step: steps });
        }
        logs.push(StageLog {
            level: stage.level,
            epochs: stage.epochs,
            steps,
            loss_before,
            loss_after,
        });
    }
    Ok((ad, logs))
}

/// Fraction of examples whose arg-max logit is the label.
pub fn accuracy(base: &FrozenLinear, ad: &LoraAdapter, data: &[Example]) -> Result<f64> {
    let mut hits = 0usize;
    for (x, y) in data {
        if lora_forward(base, ad, x)?.argmax().0 == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len().max(1) as f64)
}
