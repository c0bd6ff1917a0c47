//! Soft-label cross-entropy risk of model predictions on augmented samples.
//!
//! The model is trained and evaluated elsewhere; this module joins its logits
//! with the soft labels written next to an augmented manifest and averages
//! `−Σ_c y_c · log softmax(z)_c` over rows.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::raster::SoftLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub sample_id: String,
    pub logits: Vec<f64>,
    pub label: SoftLabel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub rows: Vec<PredictionRow>,
}

impl PredictionSet {
    /// Pairs logits with labels by id. Both sides must cover exactly the same ids.
    pub fn join(logits: Vec<(String, Vec<f64>)>, labels: Vec<(String, SoftLabel)>) -> Result<Self> {
        let mut by_id: HashMap<String, SoftLabel> = HashMap::with_capacity(labels.len());
        for (id, label) in labels {
            if by_id.insert(id.clone(), label).is_some() {
                return Err(Error::data(format!("duplicate label id '{id}'")));
            }
        }
        let mut rows = Vec::with_capacity(logits.len());
        for (id, z) in logits {
            let label = by_id
                .remove(&id)
                .ok_or_else(|| Error::data(format!("prediction '{id}' has no label (or is duplicated)")))?;
            rows.push(PredictionRow {
                sample_id: id,
                logits: z,
                label,
            });
        }
        if let Some(id) = by_id.keys().min() {
            return Err(Error::data(format!(
                "{} labelled samples have no prediction, e.g. '{id}'",
                by_id.len()
            )));
        }
        Ok(Self { rows })
    }
}

/// `log Σ exp(z)`, shifted by the maximum.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Cross entropy of one row against a soft label.
pub fn soft_cross_entropy(logits: &[f64], label: &SoftLabel) -> f64 {
    let lse = log_sum_exp(logits);
    logits
        .iter()
        .zip(label.probs())
        .filter(|(_, &y)| y > 0.0)
        .map(|(z, y)| y * (lse - z))
        .sum()
}

/// Mean soft-label cross entropy over all rows.
pub fn cross_entropy_risk(preds: &PredictionSet) -> Result<f64> {
    if preds.rows.is_empty() {
        return Err(Error::data("no predictions to score"));
    }
    let mut total = 0.0;
    for (i, row) in preds.rows.iter().enumerate() {
        if let Some(c) = row.logits.iter().position(|z| !z.is_finite()) {
            return Err(Error::data(format!(
                "row {i} ('{}'): logit {} at class {c} is not finite",
                row.sample_id, row.logits[c]
            )));
        }
        if row.logits.len() != row.label.num_classes() {
            return Err(Error::data(format!(
                "row {i} ('{}'): {} logits for {} classes",
                row.sample_id,
                row.logits.len(),
                row.label.num_classes()
            )));
        }
        total += soft_cross_entropy(&row.logits, &row.label);
    }
    Ok(total / preds.rows.len() as f64)
}

/// Reads logits from JSONL (`{"sample_id": .., "logits": [..]}`) or CSV
/// (`sample_id,z0,z1,...`, header optional), chosen by extension.
pub fn read_logits(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let jsonl = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json"));
    if jsonl {
        #[derive(Deserialize)]
        struct Row {
            #[serde(alias = "id")]
            sample_id: serde_json::Value,
            logits: Vec<f64>,
        }
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, line)| {
                let row: Row = serde_json::from_str(line)
                    .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), n + 1)))?;
                Ok((id_string(&row.sample_id), row.logits))
            })
            .collect()
    } else {
        let mut out = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let id = fields.next().unwrap_or_default().to_string();
            let values: std::result::Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
            match values {
                Ok(z) => out.push((id, z)),
                Err(_) if n == 0 => continue,
                Err(e) => {
                    return Err(Error::data(format!("{}:{}: {e}", path.display(), n + 1)));
                }
            }
        }
        Ok(out)
    }
}

/// Reads a `labels.jsonl` sidecar (`{"id": .., "probs": [..]}` per line).
pub fn read_labels(path: &Path) -> Result<Vec<(String, SoftLabel)>> {
    #[derive(Deserialize)]
    struct Row {
        id: serde_json::Value,
        probs: Vec<f64>,
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let at = |e: String| Error::data(format!("{}:{}: {e}", path.display(), n + 1));
            let row: Row = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
            let label = SoftLabel::new(row.probs).map_err(|e| at(e.to_string()))?;
            Ok((id_string(&row.id), label))
        })
        .collect()
}

fn id_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
