//! Reconstruction-error thresholds, detection, and anomaly reports.

mod classify;
mod summary;

pub use classify::{classify_anomaly, AnomalyClass, ClassifierConfig, NonNotableReason};
pub use summary::{summarize, SummaryStats};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::autoencoder::Autoencoder;
use crate::error::{Error, Result};
use crate::features::FeatureSeries;
use crate::track::WeightClass;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ThresholdMethod {
    /// Largest training error: no training sample raises an alarm.
    #[default]
    MaxTrainMae,
    /// The `ceil(q * n)`-th smallest training error, `q` in (0, 1].
    Quantile { q: f64 },
}

impl ThresholdMethod {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdMethod::MaxTrainMae => Ok(()),
            ThresholdMethod::Quantile { q } if q > 0.0 && q <= 1.0 => Ok(()),
            ThresholdMethod::Quantile { q } => {
                Err(Error::invalid(format!("threshold quantile must lie in (0, 1], got {q}")))
            }
        }
    }
}

/// The method used to calibrate the alarm threshold, and its value once
/// calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub method: ThresholdMethod,
    pub value: Option<f64>,
}

impl ThresholdPolicy {
    pub fn calibrated(method: ThresholdMethod, value: f64) -> Self {
        Self { method, value: Some(value) }
    }

    pub fn delta(&self) -> Result<f64> {
        self.value.ok_or_else(|| Error::InvalidState("threshold uncalibrated".into()))
    }
}

/// Threshold from a multiset of training errors.
pub fn threshold_from_errors(errors: &[f64], method: ThresholdMethod) -> Result<f64> {
    method.validate()?;
    if errors.is_empty() {
        return Err(Error::invalid("cannot calibrate a threshold on an empty set"));
    }
    if let Some(bad) = errors.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(Error::invalid(format!("reconstruction error {bad} is not a finite non-negative value")));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(match method {
        ThresholdMethod::MaxTrainMae => *sorted.last().unwrap(),
        ThresholdMethod::Quantile { q } => {
            let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
            sorted[rank - 1]
        }
    })
}

/// Calibrates on the normalized training set the model was trained on.
pub fn calibrate_threshold(model: &Autoencoder, train_set: &[FeatureSeries], method: ThresholdMethod) -> Result<ThresholdPolicy> {
    let errors = score_all(model, train_set)?;
    Ok(ThresholdPolicy::calibrated(method, threshold_from_errors(&errors, method)?))
}

/// Eval-mode reconstruction MAE of one normalized series.
pub fn score(model: &Autoencoder, x: &FeatureSeries) -> Result<f64> {
    Ok(score_all(model, std::slice::from_ref(x))?[0])
}

pub fn score_all(model: &Autoencoder, xs: &[FeatureSeries]) -> Result<Vec<f64>> {
    if let Some(bad) = xs.iter().find(|s| s.len() != model.config.input_length) {
        return Err(Error::invalid(format!(
            "series {} has length {}, model expects {}",
            bad.flight_id,
            bad.len(),
            model.config.input_length
        )));
    }
    crate::autoencoder::reconstruction_errors(model, xs)
}

/// Strictly above the threshold.
pub fn is_alarm(mae: f64, policy: &ThresholdPolicy) -> Result<bool> {
    Ok(mae > policy.delta()?)
}

pub fn detect(model: &Autoencoder, policy: &ThresholdPolicy, x: &FeatureSeries) -> Result<bool> {
    let delta = policy.delta()?;
    Ok(score(model, x)? > delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub flight_id: String,
    pub mae: f64,
    pub is_anomaly: bool,
    /// Set only for anomalies, once classified.
    pub taxonomy: Option<AnomalyClass>,
    pub weight_class: WeightClass,
    pub is_helicopter: bool,
}

pub const REPORT_CSV_HEADER: [&str; 6] = ["flight_id", "mae", "is_anomaly", "category", "weight_class", "is_helicopter"];

pub fn write_reports<W: Write>(sink: W, reports: &[AnomalyReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.flight_id.clone(),
            r.mae.to_string(),
            (r.is_anomaly as u8).to_string(),
            r.taxonomy.map(|c| c.code()).unwrap_or_default(),
            r.weight_class.to_string(),
            (r.is_helicopter as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports<R: Read>(source: R) -> Result<Vec<AnomalyReport>> {
    let mut r = csv::Reader::from_reader(source);
    if r.headers()?.iter().ne(REPORT_CSV_HEADER) {
        return Err(Error::Parse { line: 1, msg: format!("expected header `{}`", REPORT_CSV_HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Parse { line, msg: format!("bad {what}") };
        let flag = |i: usize, what: &str| match rec.get(i) {
            Some("0") => Ok(false),
            Some("1") => Ok(true),
            _ => Err(bad(what)),
        };
        let category = rec.get(3).unwrap_or("");
        let taxonomy = if category.is_empty() {
            None
        } else {
            Some(category.parse::<AnomalyClass>().map_err(|_| bad("category"))?)
        };
        out.push(AnomalyReport {
            flight_id: rec.get(0).unwrap_or("").to_string(),
            mae: rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("mae"))?,
            is_anomaly: flag(2, "is_anomaly")?,
            taxonomy,
            weight_class: rec.get(4).unwrap_or("").parse().map_err(|_| bad("weight_class"))?,
            is_helicopter: flag(5, "is_helicopter")?,
        });
    }
    Ok(out)
}
