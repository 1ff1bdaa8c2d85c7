//! Preliminary-normal filtering and the fixed-length altitude/speed features
//! fed to the autoencoder.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::airport::AirportConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::track::{max_time_gap, Track};

pub const DEFAULT_SERIES_LEN: usize = 256;
pub const CHANNELS: usize = 2;
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["alt", "gs"];
pub const STD_FLOOR: f64 = 1e-6;

/// Rules that mark a track as a potential anomaly before training.
///
/// The rate and missing-data rules are data-quality bounds; set them to
/// `None` to disable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRuleSet {
    pub exclude_helicopters: bool,
    pub exclude_military_uas: bool,
    pub exclude_missed_approach: bool,
    pub max_gap_s: f64,
    pub min_points: usize,
    pub max_alt_ft: f64,
    pub max_gs_kts: f64,
    pub exclude_internal_origin: bool,
    /// A track appearing this far inside the terminal radius...
    pub internal_origin_margin_nm: f64,
    /// ...at most this high above the field is taken to have departed a
    /// nearby airport.
    pub internal_origin_max_agl_ft: f64,
    pub max_vertical_rate_fpm: Option<f64>,
    pub max_accel_kts_s: Option<f64>,
    pub max_missing_alt_fraction: Option<f64>,
    /// Terminal segments shorter than this also count as too short.
    pub min_duration_s: Option<f64>,
}

impl Default for FilterRuleSet {
    fn default() -> Self {
        Self {
            exclude_helicopters: true,
            exclude_military_uas: true,
            exclude_missed_approach: true,
            max_gap_s: 12.0,
            min_points: 30,
            max_alt_ft: 60_000.0,
            max_gs_kts: 700.0,
            exclude_internal_origin: true,
            internal_origin_margin_nm: 2.0,
            internal_origin_max_agl_ft: 500.0,
            max_vertical_rate_fpm: Some(20_000.0),
            max_accel_kts_s: Some(20.0),
            max_missing_alt_fraction: Some(0.2),
            min_duration_s: Some(300.0),
        }
    }
}

impl FilterRuleSet {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::config(format!("filter rule {name} must be positive, got {v}")))
            }
        };
        positive("max_gap_s", self.max_gap_s)?;
        positive("max_alt_ft", self.max_alt_ft)?;
        positive("max_gs_kts", self.max_gs_kts)?;
        if self.min_points < 2 {
            return Err(Error::config("filter rule min_points must be at least 2"));
        }
        if let Some(v) = self.max_vertical_rate_fpm {
            positive("max_vertical_rate_fpm", v)?;
        }
        if let Some(v) = self.max_accel_kts_s {
            positive("max_accel_kts_s", v)?;
        }
        if let Some(v) = self.max_missing_alt_fraction {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config("max_missing_alt_fraction must lie in [0, 1]"));
            }
        }
        if let Some(v) = self.min_duration_s {
            positive("min_duration_s", v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlagReason {
    Helicopter,
    MilitaryUas,
    MissedApproach,
    LargeGap,
    TooShort,
    AltBound,
    SpeedBound,
    InternalOrigin,
    AltRate,
    SpeedRate,
    MissingAlt,
}

impl FlagReason {
    pub fn code(&self) -> &'static str {
        match self {
            FlagReason::Helicopter => "helicopter",
            FlagReason::MilitaryUas => "military_uas",
            FlagReason::MissedApproach => "missed_approach",
            FlagReason::LargeGap => "large_gap",
            FlagReason::TooShort => "too_short",
            FlagReason::AltBound => "alt_bound",
            FlagReason::SpeedBound => "speed_bound",
            FlagReason::InternalOrigin => "internal_origin",
            FlagReason::AltRate => "alt_rate",
            FlagReason::SpeedRate => "speed_rate",
            FlagReason::MissingAlt => "missing_alt",
        }
    }
}

impl fmt::Display for FlagReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Normal,
    Flagged(Vec<FlagReason>),
}

impl Verdict {
    pub fn is_normal(&self) -> bool {
        matches!(self, Verdict::Normal)
    }

    pub fn reasons(&self) -> &[FlagReason] {
        match self {
            Verdict::Normal => &[],
            Verdict::Flagged(r) => r,
        }
    }
}

/// Largest |d value / d t| between consecutive points where the value is
/// present, in value units per second.
pub(crate) fn max_rate(points: impl Iterator<Item = (f64, Option<f64>)>) -> f64 {
    let mut prev: Option<(f64, f64)> = None;
    let mut best = 0.0f64;
    for (t, v) in points {
        let Some(v) = v else { continue };
        if let Some((pt, pv)) = prev {
            if t > pt {
                best = best.max(((v - pv) / (t - pt)).abs());
            }
        }
        prev = Some((t, v));
    }
    best
}

/// Whether a clipped track appeared well inside the terminal area close to
/// the ground, i.e. departed from an airport within the terminal airspace.
pub fn internal_origin(track: &Track, airport: &AirportConfig, margin_nm: f64, max_agl_ft: f64) -> bool {
    let Some(first) = track.points.first() else { return false };
    let (dist, thr) = airport.nearest_threshold(first.position());
    match first.alt {
        Some(alt) => dist < airport.terminal_radius - margin_nm && alt - thr.elev < max_agl_ft,
        None => false,
    }
}

/// Applies every rule in `rules` to a clipped track and reports all that fire.
pub fn label_preliminary_normal(track: &Track, rules: &FilterRuleSet, airport: &AirportConfig) -> Verdict {
    let mut reasons = Vec::new();
    let pts = &track.points;
    if rules.exclude_helicopters && track.is_helicopter {
        reasons.push(FlagReason::Helicopter);
    }
    if rules.exclude_military_uas && track.is_military_or_uas {
        reasons.push(FlagReason::MilitaryUas);
    }
    if rules.exclude_missed_approach && track.missed_approach {
        reasons.push(FlagReason::MissedApproach);
    }
    if max_time_gap(track) > rules.max_gap_s {
        reasons.push(FlagReason::LargeGap);
    }
    if pts.len() < rules.min_points || rules.min_duration_s.is_some_and(|d| track.duration_s() < d) {
        reasons.push(FlagReason::TooShort);
    }
    if pts.iter().filter_map(|p| p.alt).any(|a| a > rules.max_alt_ft) {
        reasons.push(FlagReason::AltBound);
    }
    if pts.iter().filter_map(|p| p.gs).any(|v| v > rules.max_gs_kts || v < 0.0) {
        reasons.push(FlagReason::SpeedBound);
    }
    if rules.exclude_internal_origin
        && internal_origin(track, airport, rules.internal_origin_margin_nm, rules.internal_origin_max_agl_ft)
    {
        reasons.push(FlagReason::InternalOrigin);
    }
    if let Some(limit) = rules.max_vertical_rate_fpm {
        if max_rate(pts.iter().map(|p| (p.t, p.alt))) * 60.0 > limit {
            reasons.push(FlagReason::AltRate);
        }
    }
    if let Some(limit) = rules.max_accel_kts_s {
        if max_rate(pts.iter().map(|p| (p.t, p.gs))) > limit {
            reasons.push(FlagReason::SpeedRate);
        }
    }
    if let Some(limit) = rules.max_missing_alt_fraction {
        let missing = pts.iter().filter(|p| p.alt.is_none()).count();
        if !pts.is_empty() && missing as f64 / pts.len() as f64 > limit {
            reasons.push(FlagReason::MissingAlt);
        }
    }
    if reasons.is_empty() {
        Verdict::Normal
    } else {
        Verdict::Flagged(reasons)
    }
}

/// Fixed-length altitude (ft) and ground speed (kts) series for one flight.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub flight_id: String,
    pub alt: Vec<f64>,
    pub gs: Vec<f64>,
}

impl FeatureSeries {
    pub fn new(flight_id: impl Into<String>, alt: Vec<f64>, gs: Vec<f64>) -> Result<Self> {
        let s = Self { flight_id: flight_id.into(), alt, gs };
        if s.alt.len() != s.gs.len() {
            return Err(Error::invalid(format!(
                "series {}: channel lengths differ ({} vs {})",
                s.flight_id,
                s.alt.len(),
                s.gs.len()
            )));
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.alt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alt.is_empty()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        match c {
            0 => &self.alt,
            1 => &self.gs,
            _ => panic!("feature channel {c} out of range"),
        }
    }

    fn channel_mut(&mut self, c: usize) -> &mut Vec<f64> {
        match c {
            0 => &mut self.alt,
            1 => &mut self.gs,
            _ => panic!("feature channel {c} out of range"),
        }
    }

    /// `[2, L]` tensor, channels ordered altitude then speed.
    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::with_capacity(2 * self.len());
        data.extend_from_slice(&self.alt);
        data.extend_from_slice(&self.gs);
        Tensor::new(vec![CHANNELS, self.len()], data).expect("non-empty series")
    }

    pub fn from_tensor(flight_id: impl Into<String>, t: &Tensor) -> Result<Self> {
        let len = match t.shape() {
            [2, l] => *l,
            [1, 2, l] => *l,
            s => return Err(Error::invalid(format!("expected a [2, L] tensor, got {s:?}"))),
        };
        let (alt, gs) = t.data().split_at(len);
        Self::new(flight_id, alt.to_vec(), gs.to_vec())
    }
}

/// Stacks series into a `[B, 2, L]` batch.
pub fn batch_tensor(series: &[&FeatureSeries]) -> Result<Tensor> {
    let items: Vec<Tensor> = series.iter().map(|s| s.to_tensor()).collect();
    Tensor::stack(&items)
}

/// Linear interpolation of the present values onto every index, using `t`
/// as abscissa; values before the first / after the last present sample are
/// held constant.
fn impute(t: &[f64], values: &[Option<f64>], channel: &'static str) -> Result<Vec<f64>> {
    let present: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (&first, &last) = match (present.first(), present.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Unresamplable { channel }),
    };
    let mut out = vec![0.0; values.len()];
    let mut next = 0usize;
    for i in 0..values.len() {
        out[i] = match values[i] {
            Some(v) => v,
            None if i < first => values[first].unwrap(),
            None if i > last => values[last].unwrap(),
            None => {
                while present[next] < i {
                    next += 1;
                }
                let (a, b) = (present[next - 1], present[next]);
                let (va, vb) = (values[a].unwrap(), values[b].unwrap());
                let w = (t[i] - t[a]) / (t[b] - t[a]);
                va + w * (vb - va)
            }
        };
    }
    Ok(out)
}

/// Samples altitude and speed at `len` points equally spaced in distance to
/// the runway threshold, from the segment's first point down to its closest
/// approach.
///
/// Distance is made monotone with a running minimum, so excursions away
/// from the field collapse onto the point where the track first reached
/// each distance. A segment with no net progress toward the field is
/// sampled uniformly in time instead.
pub fn resample(segment: &Track, len: usize, airport: &AirportConfig) -> Result<FeatureSeries> {
    if len < 2 {
        return Err(Error::invalid(format!("resample length must be at least 2, got {len}")));
    }
    let pts = &segment.points;
    if pts.is_empty() {
        return Err(Error::invalid(format!("track {} has no points", segment.flight_id)));
    }
    let t: Vec<f64> = pts.iter().map(|p| p.t).collect();
    let alt = impute(&t, &pts.iter().map(|p| p.alt).collect::<Vec<_>>(), "alt")?;
    let gs = impute(&t, &pts.iter().map(|p| p.gs).collect::<Vec<_>>(), "gs")?;

    let mut progress: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        let d = airport.distance_to_threshold(p.position());
        progress.push(progress.last().map_or(d, |&m: &f64| m.min(d)));
    }
    let start = progress[0];
    let end = *progress.last().unwrap();

    let (axis, descending) = if start - end > 1e-9 { (progress, true) } else { (t, false) };
    let (a0, a1) = (axis[0], *axis.last().unwrap());

    let mut out_alt = Vec::with_capacity(len);
    let mut out_gs = Vec::with_capacity(len);
    let mut i = 0usize;
    for k in 0..len {
        let frac = k as f64 / (len - 1) as f64;
        let target = if k == len - 1 { a1 } else { a0 + (a1 - a0) * frac };
        // first index at or past the target along the axis
        let past = |v: f64| if descending { v <= target } else { v >= target };
        while i < axis.len() - 1 && !past(axis[i]) {
            i += 1;
        }
        if i == 0 || axis[i] == target || axis.len() == 1 {
            out_alt.push(alt[i]);
            out_gs.push(gs[i]);
        } else {
            let w = (axis[i - 1] - target) / (axis[i - 1] - axis[i]);
            out_alt.push(alt[i - 1] + w * (alt[i] - alt[i - 1]));
            out_gs.push(gs[i - 1] + w * (gs[i] - gs[i - 1]));
        }
    }
    FeatureSeries::new(segment.flight_id.clone(), out_alt, out_gs)
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl NormStats {
    pub fn identity() -> Self {
        Self { mean: [0.0; CHANNELS], std: [1.0; CHANNELS] }
    }

    pub fn apply(&self, series: &FeatureSeries) -> FeatureSeries {
        let mut out = series.clone();
        for c in 0..CHANNELS {
            let (m, s) = (self.mean[c], self.std[c]);
            for v in out.channel_mut(c).iter_mut() {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn invert(&self, series: &FeatureSeries) -> FeatureSeries {
        let mut out = series.clone();
        for c in 0..CHANNELS {
            let (m, s) = (self.mean[c], self.std[c]);
            for v in out.channel_mut(c).iter_mut() {
                *v = *v * s + m;
            }
        }
        out
    }
}

/// Pooled statistics over every sample and position, std floored at
/// [`STD_FLOOR`].
pub fn fit_norm_stats(train: &[FeatureSeries]) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::invalid("cannot fit normalization on an empty training set"));
    }
    let mut stats = NormStats::identity();
    for c in 0..CHANNELS {
        let n: usize = train.iter().map(|s| s.len()).sum();
        if n == 0 {
            return Err(Error::invalid("training series are empty"));
        }
        let mean = train.iter().flat_map(|s| s.channel(c)).sum::<f64>() / n as f64;
        let var = train.iter().flat_map(|s| s.channel(c)).map(|v| (v - mean).powi(2)).sum::<f64>()
            / n as f64;
        stats.mean[c] = mean;
        stats.std[c] = var.sqrt().max(STD_FLOOR);
    }
    Ok(stats)
}

pub fn apply_norm(series: &FeatureSeries, stats: &NormStats) -> FeatureSeries {
    stats.apply(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must lie strictly between 0 and 1, got {train_fraction}"
            )));
        }
        Ok(Self { train_fraction, seed })
    }
}

fn split_key(flight_id: &str, seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(flight_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Seeded partition keyed on flight_id: items are ranked by a hash of
/// `(seed, flight_id)` and the first `round(train_fraction * n)` go to train.
/// Both halves keep the input order.
pub fn split_train_test(dataset: &[FeatureSeries], spec: &SplitSpec) -> (Vec<FeatureSeries>, Vec<FeatureSeries>) {
    let n_train = (spec.train_fraction * dataset.len() as f64).round() as usize;
    let mut ranked: Vec<(u64, &str)> =
        dataset.iter().map(|s| (split_key(&s.flight_id, spec.seed), s.flight_id.as_str())).collect();
    ranked.sort_unstable();
    let train_ids: std::collections::HashSet<&str> =
        ranked.iter().take(n_train).map(|(_, id)| *id).collect();
    dataset.iter().cloned().partition(|s| train_ids.contains(s.flight_id.as_str()))
}

pub const FEATURE_CSV_HEADER: [&str; 4] = ["flight_id", "idx", "alt", "gs"];

pub fn write_features<W: Write>(sink: W, series: &[FeatureSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(FEATURE_CSV_HEADER)?;
    for s in series {
        for i in 0..s.len() {
            w.write_record([s.flight_id.as_str(), &i.to_string(), &s.alt[i].to_string(), &s.gs[i].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the feature CSV; flights keep their first-appearance order and
/// rows must list indices 0, 1, 2, ... per flight.
pub fn read_features<R: Read>(source: R) -> Result<Vec<FeatureSeries>> {
    let mut r = csv::Reader::from_reader(source);
    let header = r.headers()?.clone();
    if header.iter().ne(FEATURE_CSV_HEADER) {
        return Err(Error::Parse { line: 1, msg: format!("expected header `{}`", FEATURE_CSV_HEADER.join(",")) });
    }
    let mut order: Vec<FeatureSeries> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |msg: String| Error::Parse { line, msg };
        let id = rec.get(0).unwrap_or("").to_string();
        let idx: usize = rec.get(1).unwrap_or("").parse().map_err(|_| bad("bad idx".into()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad {} value", FEATURE_CSV_HEADER[i])))
        };
        let (alt, gs) = (num(2)?, num(3)?);
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            order.push(FeatureSeries { flight_id: id.clone(), alt: Vec::new(), gs: Vec::new() });
            order.len() - 1
        });
        let s = &mut order[slot];
        if idx != s.len() {
            return Err(bad(format!("flight {id}: expected idx {}, got {idx}", s.len())));
        }
        s.alt.push(alt);
        s.gs.push(gs);
    }
    Ok(order)
}
