//! Per-track glue between ingestion, filtering, feature extraction, and
//! detection.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::airport::AirportConfig;
use crate::anomaly::{classify_anomaly, score_all, AnomalyReport, ClassifierConfig, ThresholdPolicy};
use crate::autoencoder::Autoencoder;
use crate::error::Result;
use crate::features::{apply_norm, label_preliminary_normal, resample, FeatureSeries, FilterRuleSet, Verdict};
use crate::track::{clip_terminal, parse_tracks, Reject, Track};

/// One ingested flight: the raw track, its terminal segment, the filter
/// verdict, and the resampled features in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub track: Track,
    pub segment: Track,
    pub verdict: Verdict,
    pub series: FeatureSeries,
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub processed: Vec<Processed>,
    pub rejects: Vec<Reject>,
    /// Files that could not be read or parsed at all, with the reason.
    pub file_errors: Vec<(PathBuf, String)>,
}

impl Ingested {
    /// Features of the tracks no filter rule fired on.
    pub fn normal_series(&self) -> Vec<FeatureSeries> {
        self.processed.iter().filter(|p| p.verdict.is_normal()).map(|p| p.series.clone()).collect()
    }
}

/// Clips, filters, and resamples one track. Tracks that never enter the
/// terminal area or cannot be resampled are rejected.
pub fn process_track(
    track: Track,
    airport: &AirportConfig,
    rules: &FilterRuleSet,
    len: usize,
) -> std::result::Result<Processed, Reject> {
    let reject = |track: &Track, reason: String| Reject { flight_id: track.flight_id.clone(), line: None, reason };
    let Some(segment) = clip_terminal(&track, airport) else {
        return Err(reject(&track, format!("never within {} NM of a threshold", airport.terminal_radius)));
    };
    let verdict = label_preliminary_normal(&segment, rules, airport);
    match resample(&segment, len, airport) {
        Ok(series) => Ok(Processed { track, segment, verdict, series }),
        Err(e) => Err(reject(&track, e.to_string())),
    }
}

pub fn process_tracks(tracks: Vec<Track>, airport: &AirportConfig, rules: &FilterRuleSet, len: usize) -> Ingested {
    let mut out = Ingested::default();
    for t in tracks {
        match process_track(t, airport, rules, len) {
            Ok(p) => out.processed.push(p),
            Err(r) => out.rejects.push(r),
        }
    }
    out
}

/// Ingests track CSV files one at a time in lexicographic path order. A
/// file that fails to open or parse is recorded and skipped.
pub fn ingest_files(paths: &[PathBuf], airport: &AirportConfig, rules: &FilterRuleSet, len: usize) -> Ingested {
    let mut paths = paths.to_vec();
    paths.sort();
    let mut out = Ingested::default();
    for path in paths {
        match File::open(&path).map_err(Into::into).and_then(parse_tracks) {
            Ok(parsed) => {
                out.rejects.extend(parsed.rejects);
                let batch = process_tracks(parsed.tracks, airport, rules, len);
                out.processed.extend(batch.processed);
                out.rejects.extend(batch.rejects);
            }
            Err(e) => out.file_errors.push((path, e.to_string())),
        }
    }
    out
}

/// The `.csv` files directly inside `dir`, sorted.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    Ok(files)
}

/// Scores every processed track and classifies the anomalies.
///
/// A track is anomalous when a filter rule fired on it or its
/// reconstruction error exceeds the threshold.
pub fn detect_and_classify(
    model: &Autoencoder,
    policy: &ThresholdPolicy,
    processed: &[Processed],
    airport: &AirportConfig,
    classifier: &ClassifierConfig,
) -> Result<Vec<AnomalyReport>> {
    let delta = policy.delta()?;
    let normed: Vec<FeatureSeries> = processed.iter().map(|p| apply_norm(&p.series, &model.norm_stats)).collect();
    let maes = score_all(model, &normed)?;
    Ok(processed
        .iter()
        .zip(maes)
        .map(|(p, mae)| {
            let is_anomaly = !p.verdict.is_normal() || mae > delta;
            AnomalyReport {
                flight_id: p.track.flight_id.clone(),
                mae,
                is_anomaly,
                taxonomy: is_anomaly.then(|| classify_anomaly(&p.track, &p.segment, airport, classifier)),
                weight_class: p.track.weight_class,
                is_helicopter: p.track.is_helicopter,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::{AnomalyClass, ThresholdMethod};
    use crate::autoencoder::{init_model, LayerSpec, ModelConfig};
    use crate::synth::{gen_nominal, inject, AirportProfile, InjectionSpec};
    use crate::track::write_tracks;

    #[test]
    fn files_are_ingested_in_order_and_bad_files_recorded() {
        let p = AirportProfile::default();
        let airport = p.airport_config();
        let dir = tempfile::tempdir().unwrap();
        let tracks = gen_nominal(&p, 4, 1).unwrap();
        write_tracks(File::create(dir.path().join("b.csv")).unwrap(), &tracks[2..]).unwrap();
        write_tracks(File::create(dir.path().join("a.csv")).unwrap(), &tracks[..2]).unwrap();
        std::fs::write(dir.path().join("c.csv"), "not,a,header\n").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let files = csv_files(dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let got = ingest_files(&files, &airport, &FilterRuleSet::default(), 64);
        let ids: Vec<_> = got.processed.iter().map(|p| p.track.flight_id.clone()).collect();
        let want: Vec<_> = tracks.iter().map(|t| t.flight_id.clone()).collect();
        assert_eq!(ids, want);
        assert_eq!(got.file_errors.len(), 1);
        assert_eq!(got.normal_series().len(), 4);
    }

    #[test]
    fn far_away_tracks_are_rejected() {
        let p = AirportProfile::default();
        let far = AirportProfile { threshold_lat: 10.0, ..p.clone() };
        let t = gen_nominal(&far, 1, 1).unwrap();
        let got = process_tracks(t, &p.airport_config(), &FilterRuleSet::default(), 64);
        assert!(got.processed.is_empty());
        assert_eq!(got.rejects.len(), 1);
    }

    #[test]
    fn filter_flags_count_as_anomalies() {
        let p = AirportProfile::default();
        let airport = p.airport_config();
        let base = gen_nominal(&p, 2, 3).unwrap();
        let gap = inject(&base[0], &InjectionSpec::for_profile(AnomalyClass::LargeTimeGap, 0, &p)).unwrap();
        let got = process_tracks(vec![base[1].clone(), gap], &airport, &FilterRuleSet::default(), 32);
        let cfg = ModelConfig {
            input_length: 32,
            encoder_layers: vec![LayerSpec::new(4, 3, 2), LayerSpec::new(2, 3, 2)],
            decoder_layers: vec![LayerSpec::new(2, 3, 2), LayerSpec::new(4, 3, 2)],
            output_kernel: 3,
            ..ModelConfig::default()
        };
        let model = init_model(cfg).unwrap();
        let policy = ThresholdPolicy::calibrated(ThresholdMethod::MaxTrainMae, f64::MAX);
        let reports = detect_and_classify(&model, &policy, &got.processed, &airport, &ClassifierConfig::default()).unwrap();
        assert!(!reports[0].is_anomaly && reports[0].taxonomy.is_none());
        assert!(reports[1].is_anomaly);
        assert_eq!(reports[1].taxonomy, Some(AnomalyClass::LargeTimeGap));
        assert!(detect_and_classify(&model, &ThresholdPolicy::default(), &got.processed, &airport, &ClassifierConfig::default()).is_err());
    }
}
