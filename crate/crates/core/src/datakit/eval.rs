use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Label};

/// Area under the ROC curve for detecting anomalies by LOW score.
///
/// Computed as the Mann-Whitney statistic: the fraction of (normal, anomaly)
/// pairs where the normal row scores higher, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[Label]) -> Result<f64, DataError> {
    if scores.len() != labels.len() {
        return Err(DataError::Length {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(DataError::NonFiniteScore(i));
    }
    let n_normal = labels.iter().filter(|&&l| l == Label::Normal).count();
    let n_anomaly = labels.len() - n_normal;
    if n_normal == 0 {
        return Err(DataError::MissingClass(Label::Normal));
    }
    if n_anomaly == 0 {
        return Err(DataError::MissingClass(Label::Anomaly));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (1-based, tie-averaged) ranks of the normal rows
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == Label::Normal {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let nn = n_normal as f64;
    let u = rank_sum - nn * (nn + 1.0) / 2.0;
    Ok(u / (nn * n_anomaly as f64))
}

/// Scores of one evaluation together with the AUROC they produce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub seed: u64,
    pub config_digest: String,
    pub row_ids: Vec<usize>,
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

impl EvalReport {
    pub fn new(
        scores: Vec<f64>,
        labels: Vec<Label>,
        row_ids: Vec<usize>,
        seed: u64,
        config_digest: impl Into<String>,
    ) -> Result<Self, DataError> {
        Ok(Self {
            auroc: auroc(&scores, &labels)?,
            seed,
            config_digest: config_digest.into(),
            row_ids,
            scores,
            labels,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    row_id: usize,
    score: f64,
    label: Option<&'a Label>,
}

/// Writes `row_id,score,label`; the label column is empty when unknown.
pub fn write_scores_csv(
    path: &Path,
    row_ids: &[usize],
    scores: &[f64],
    labels: Option<&[Label]>,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, (&row_id, &score)) in row_ids.iter().zip(scores).enumerate() {
        w.serialize(ScoreRow {
            row_id,
            score,
            label: labels.map(|l| &l[i]),
        })?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}
