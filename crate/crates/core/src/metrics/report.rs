use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bleu, char_accuracy_with, meteor_lite, rouge_l, rouge_n, CharAlignment};
use crate::attack::AttackTranscript;
use crate::error::{invalid, Result};
use crate::signal::NoiseLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricName {
    Bleu,
    Meteor,
    Rouge1,
    Rouge2,
    RougeL,
    CharAccuracy,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::Bleu,
        MetricName::Meteor,
        MetricName::Rouge1,
        MetricName::Rouge2,
        MetricName::RougeL,
        MetricName::CharAccuracy,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MetricName::Bleu => "BLEU",
            MetricName::Meteor => "METEOR",
            MetricName::Rouge1 => "ROUGE-1",
            MetricName::Rouge2 => "ROUGE-2",
            MetricName::RougeL => "ROUGE-L",
            MetricName::CharAccuracy => "Accuracy",
        }
    }

    pub fn score(self, reference: &str, hypothesis: &str) -> f64 {
        self.score_with(reference, hypothesis, CharAlignment::Lcs)
    }

    /// As [`MetricName::score`], with the character alignment chosen.
    pub fn score_with(self, reference: &str, hypothesis: &str, alignment: CharAlignment) -> f64 {
        match self {
            MetricName::Bleu => bleu(reference, hypothesis),
            MetricName::Meteor => meteor_lite(reference, hypothesis),
            MetricName::Rouge1 => rouge_n(reference, hypothesis, 1),
            MetricName::Rouge2 => rouge_n(reference, hypothesis, 2),
            MetricName::RougeL => rouge_l(reference, hypothesis),
            MetricName::CharAccuracy => char_accuracy_with(reference, hypothesis, alignment),
        }
    }
}

/// Which transcript field is compared against the truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreTarget {
    #[default]
    Corrected,
    /// The uncorrected classifier output (baseline column).
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceScores {
    pub index: usize,
    pub scores: BTreeMap<MetricName, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MetricSummary {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub noise_level: NoiseLevel,
    pub eta: f64,
    /// Column label, e.g. a backend name or `uncorrected`.
    pub backend: String,
    pub target: ScoreTarget,
    /// Per-sentence seeds in transcript order.
    pub seeds: Vec<u64>,
    pub sentences: Vec<SentenceScores>,
    pub summary: BTreeMap<MetricName, MetricSummary>,
}

impl MetricReport {
    pub fn mean(&self, metric: MetricName) -> f64 {
        self.summary[&metric].mean
    }
}

/// Scores one batch of transcripts sharing a noise level.
pub fn score_transcripts(
    transcripts: &[AttackTranscript],
    target: ScoreTarget,
    backend: &str,
) -> Result<MetricReport> {
    score_transcripts_with(transcripts, target, backend, CharAlignment::Lcs)
}

pub fn score_transcripts_with(
    transcripts: &[AttackTranscript],
    target: ScoreTarget,
    backend: &str,
    alignment: CharAlignment,
) -> Result<MetricReport> {
    let first = transcripts
        .first()
        .ok_or_else(|| invalid("no transcripts to score"))?;
    if let Some(t) = transcripts.iter().find(|t| t.noise_level != first.noise_level) {
        return Err(invalid(format!(
            "mixed noise levels in one report: {} and {}",
            first.noise_level, t.noise_level
        )));
    }
    let hyps = transcripts
        .iter()
        .map(|t| match target {
            ScoreTarget::Predicted => Ok(t.predicted.as_str()),
            ScoreTarget::Corrected => t.corrected.as_deref().ok_or_else(|| {
                invalid(format!("sentence {} has no corrected text", t.index))
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    let sentences: Vec<SentenceScores> = transcripts
        .par_iter()
        .zip(hyps.par_iter())
        .map(|(t, hyp)| SentenceScores {
            index: t.index,
            scores: MetricName::ALL
                .iter()
                .map(|&m| (m, m.score_with(&t.truth, hyp, alignment)))
                .collect(),
        })
        .collect();
    let summary = MetricName::ALL
        .iter()
        .map(|&m| {
            let v: Vec<f64> = sentences.iter().map(|s| s.scores[&m]).collect();
            (m, MetricSummary::of(&v))
        })
        .collect();
    Ok(MetricReport {
        noise_level: first.noise_level,
        eta: first.eta,
        backend: backend.to_string(),
        target,
        seeds: transcripts.iter().map(|t| t.seed).collect(),
        sentences,
        summary,
    })
}

/// Aligned text table: one row per metric and noise level, one column per
/// backend, cells `mean ± std`.
pub fn render_table(reports: &[MetricReport]) -> String {
    let mut backends: Vec<&str> = Vec::new();
    for r in reports {
        if !backends.contains(&r.backend.as_str()) {
            backends.push(&r.backend);
        }
    }
    let mut levels: Vec<NoiseLevel> = reports.iter().map(|r| r.noise_level).collect();
    levels.sort();
    levels.dedup();

    let mut rows = vec![{
        let mut h = vec!["Metric".to_string(), "Noise".to_string()];
        h.extend(backends.iter().map(|b| b.to_string()));
        h
    }];
    for m in MetricName::ALL {
        for &level in &levels {
            let mut row = vec![m.label().to_string(), level.to_string()];
            for b in &backends {
                let cell = reports
                    .iter()
                    .find(|r| r.backend == *b && r.noise_level == level)
                    .map(|r| {
                        let s = r.summary[&m];
                        format!("{:.3} ± {:.3}", s.mean, s.std)
                    })
                    .unwrap_or_else(|| "-".into());
                row.push(cell);
            }
            rows.push(row);
        }
    }

    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            let _ = writeln!(out, "{}", rule.join("  "));
        }
    }
    out
}
