use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::airport::AirportConfig;
use crate::features::internal_origin;
use crate::geo::{horizontal_extent_nm, LatLon};
use crate::track::{max_time_gap, Track};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NonNotableReason {
    Helicopter,
    InternalOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnomalyClass {
    NonNotable(NonNotableReason),
    GroundTrack,
    PointAltitude,
    PointSpeed,
    MissingAltitude,
    NonStandardOperation,
    RiskyOperation,
    LargeTimeGap,
    Unclassified,
}

impl AnomalyClass {
    /// The six notable types plus the data-assembly gap, in injector order.
    pub const INJECTABLE: [AnomalyClass; 7] = [
        AnomalyClass::GroundTrack,
        AnomalyClass::PointAltitude,
        AnomalyClass::PointSpeed,
        AnomalyClass::MissingAltitude,
        AnomalyClass::NonStandardOperation,
        AnomalyClass::RiskyOperation,
        AnomalyClass::LargeTimeGap,
    ];

    pub fn code(&self) -> String {
        match self {
            AnomalyClass::NonNotable(NonNotableReason::Helicopter) => "non_notable:helicopter",
            AnomalyClass::NonNotable(NonNotableReason::InternalOrigin) => "non_notable:internal_origin",
            AnomalyClass::GroundTrack => "ground_track",
            AnomalyClass::PointAltitude => "point_altitude",
            AnomalyClass::PointSpeed => "point_speed",
            AnomalyClass::MissingAltitude => "missing_altitude",
            AnomalyClass::NonStandardOperation => "non_standard_operation",
            AnomalyClass::RiskyOperation => "risky_operation",
            AnomalyClass::LargeTimeGap => "large_time_gap",
            AnomalyClass::Unclassified => "unclassified",
        }
        .to_string()
    }

    pub fn is_notable(&self) -> bool {
        !matches!(self, AnomalyClass::NonNotable(_))
    }
}

impl fmt::Display for AnomalyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for AnomalyClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let all = [
            AnomalyClass::NonNotable(NonNotableReason::Helicopter),
            AnomalyClass::NonNotable(NonNotableReason::InternalOrigin),
            AnomalyClass::Unclassified,
        ];
        all.into_iter()
            .chain(AnomalyClass::INJECTABLE)
            .find(|c| c.code() == s)
            .ok_or_else(|| format!("unknown anomaly category `{s}`"))
    }
}

/// Rule constants. None of them come from measured data; they are set to
/// separate the synthetic injectors and need re-tuning for real tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub helicopters_non_notable: bool,
    pub internal_origin_margin_nm: f64,
    pub internal_origin_max_agl_ft: f64,
    pub gap_notable_s: f64,
    pub missing_run_fraction: f64,
    pub ground_max_agl_ft: f64,
    pub point_alt_rate_fpm: f64,
    pub point_speed_rate_kts_s: f64,
    /// An excursion must return within this many samples to count as a
    /// point anomaly.
    pub point_max_samples: usize,
    pub risky_max_extent_nm: f64,
    pub risky_min_agl_ft: f64,
    pub min_airborne_s: f64,
    /// A landing is a final point this close to a threshold...
    pub landing_radius_nm: f64,
    /// ...and this low above it.
    pub landing_max_agl_ft: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            helicopters_non_notable: true,
            internal_origin_margin_nm: 2.0,
            internal_origin_max_agl_ft: 500.0,
            gap_notable_s: 300.0,
            missing_run_fraction: 0.25,
            ground_max_agl_ft: 200.0,
            point_alt_rate_fpm: 10_000.0,
            point_speed_rate_kts_s: 50.0,
            point_max_samples: 2,
            risky_max_extent_nm: 5.0,
            risky_min_agl_ft: 20_000.0,
            min_airborne_s: 300.0,
            landing_radius_nm: 1.0,
            landing_max_agl_ft: 500.0,
        }
    }
}

/// Assigns one category to a flagged track; the first matching rule wins.
///
/// `track` carries the flight metadata; the rules look at `segment`, the
/// clipped terminal portion, in physical units.
pub fn classify_anomaly(track: &Track, segment: &Track, airport: &AirportConfig, cfg: &ClassifierConfig) -> AnomalyClass {
    if cfg.helicopters_non_notable && track.is_helicopter {
        return AnomalyClass::NonNotable(NonNotableReason::Helicopter);
    }
    let pts = &segment.points;
    if pts.is_empty() {
        return AnomalyClass::Unclassified;
    }
    let last = pts.last().unwrap();
    let field = airport.field_elev_near(last.position());
    let max_agl = pts.iter().filter_map(|p| p.alt).map(|a| a - field).fold(f64::NEG_INFINITY, f64::max);
    // a departure from a nearby airport has to climb out; a track that
    // starts low and stays low is left to the ground-track rule
    if internal_origin(segment, airport, cfg.internal_origin_margin_nm, cfg.internal_origin_max_agl_ft)
        && max_agl > cfg.internal_origin_max_agl_ft
    {
        return AnomalyClass::NonNotable(NonNotableReason::InternalOrigin);
    }
    if max_time_gap(segment) > cfg.gap_notable_s {
        return AnomalyClass::LargeTimeGap;
    }
    if longest_missing_run(segment) as f64 >= cfg.missing_run_fraction * pts.len() as f64 {
        return AnomalyClass::MissingAltitude;
    }

    if max_agl.is_finite() && max_agl < cfg.ground_max_agl_ft {
        return AnomalyClass::GroundTrack;
    }
    let alt: Vec<(f64, f64)> = pts.iter().filter_map(|p| p.alt.map(|a| (p.t, a))).collect();
    if has_point_excursion(&alt, cfg.point_alt_rate_fpm / 60.0, cfg.point_max_samples) {
        return AnomalyClass::PointAltitude;
    }
    let gs: Vec<(f64, f64)> = pts.iter().filter_map(|p| p.gs.map(|v| (p.t, v))).collect();
    if has_point_excursion(&gs, cfg.point_speed_rate_kts_s, cfg.point_max_samples) {
        return AnomalyClass::PointSpeed;
    }
    let extent = horizontal_extent_nm(pts.iter().map(|p| LatLon::new(p.lat, p.lon)));
    if extent < cfg.risky_max_extent_nm && max_agl > cfg.risky_min_agl_ft {
        return AnomalyClass::RiskyOperation;
    }
    let landed = airport.distance_to_threshold(last.position()) <= cfg.landing_radius_nm
        && last.alt.is_some_and(|a| a - field <= cfg.landing_max_agl_ft);
    if segment.duration_s() < cfg.min_airborne_s || !landed {
        return AnomalyClass::NonStandardOperation;
    }
    AnomalyClass::Unclassified
}

fn longest_missing_run(track: &Track) -> usize {
    let mut best = 0;
    let mut run = 0;
    for p in &track.points {
        run = if p.alt.is_none() { run + 1 } else { 0 };
        best = best.max(run);
    }
    best
}

/// A jump faster than `limit` (units per second) followed within
/// `max_samples` steps by an opposite jump faster than `limit`.
fn has_point_excursion(series: &[(f64, f64)], limit: f64, max_samples: usize) -> bool {
    let rates: Vec<f64> =
        series.windows(2).map(|w| if w[1].0 > w[0].0 { (w[1].1 - w[0].1) / (w[1].0 - w[0].0) } else { 0.0 }).collect();
    rates.iter().enumerate().any(|(i, &r)| {
        r.abs() > limit
            && rates[i + 1..].iter().take(max_samples).any(|&s| s.abs() > limit && s.signum() != r.signum())
    })
}
