use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scoring::AnomalyScoreSeries;

/// Per-frame scores aligned with binary labels (1 = anomalous).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Invalid(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Invalid(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self { scores, labels })
    }

    /// Pairs a series with per-frame video labels, indexed by source frame.
    /// Frames before the series' first scored frame are dropped.
    pub fn from_series(series: &AnomalyScoreSeries, labels: &[u8], normalized: bool) -> Result<Self> {
        let scores = if normalized { &series.normalized_scores } else { &series.raw_scores };
        let mut picked = Vec::with_capacity(scores.len());
        for &idx in &series.frame_indices {
            let l = *labels.get(idx).ok_or_else(|| {
                Error::Invalid(format!(
                    "video {} has {} labels, frame {idx} scored",
                    series.video_id,
                    labels.len()
                ))
            })?;
            picked.push(l);
        }
        Self::new(scores.clone(), picked)
    }

    pub fn extend(&mut self, other: &LabeledScores) {
        self.scores.extend_from_slice(&other.scores);
        self.labels.extend_from_slice(&other.labels);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Mean score of frames carrying `label`, if any.
    pub fn class_mean(&self, label: u8) -> Option<f64> {
        let v: Vec<f64> = self
            .scores
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .map(|(s, _)| *s)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Area under the ROC curve via the Mann-Whitney U statistic with average
/// ranks for ties, i.e. `P(anomaly > normal) + P(tie) / 2`.
pub fn frame_auc(data: &LabeledScores) -> Result<f64> {
    let n = data.scores.len();
    let pos = data.labels.iter().filter(|&&l| l == 1).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::AucUndefined);
    }
    if data.scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.scores[a].total_cmp(&data.scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && data.scores[order[j]] == data.scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their average
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * order[i..j].iter().filter(|&&o| data.labels[o] == 1).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    pub n_runs: usize,
    pub ci95_halfwidth: f64,
}

impl AucResult {
    pub fn single(auc: f64) -> Self {
        Self {
            auc,
            n_runs: 1,
            ci95_halfwidth: 0.0,
        }
    }
}

/// Mean of per-run AUCs with a Student-t 95% half-width `t(0.975, n-1)·sd/√n`.
pub fn multi_run_auc(run_aucs: &[f64]) -> Result<AucResult> {
    let n = run_aucs.len();
    if n == 0 {
        return Err(Error::Invalid("no runs".into()));
    }
    let mean = run_aucs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(AucResult::single(mean));
    }
    let var = run_aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::Invalid(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(AucResult {
        auc: mean,
        n_runs: n,
        ci95_halfwidth: t * var.sqrt() / (n as f64).sqrt(),
    })
}
