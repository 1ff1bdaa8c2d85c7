//! Flight tracks, the track CSV format, and terminal-area clipping.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::airport::AirportConfig;
use crate::error::{Error, Result};
use crate::geo::LatLon;

pub const TRACK_CSV_HEADER: [&str; 12] = [
    "flight_id",
    "t",
    "lat",
    "lon",
    "alt_ft",
    "gs_kts",
    "course_deg",
    "aircraft_type",
    "is_helicopter",
    "is_military_or_uas",
    "weight_class",
    "missed_approach",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    /// Epoch seconds.
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
    /// Feet MSL.
    pub alt: Option<f64>,
    /// Ground speed, knots.
    pub gs: Option<f64>,
    pub course: Option<f64>,
}

impl TrackPoint {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightClass {
    Small,
    Large,
    Heavy,
    #[default]
    Unknown,
}

impl WeightClass {
    pub const ALL: [WeightClass; 4] =
        [WeightClass::Small, WeightClass::Large, WeightClass::Heavy, WeightClass::Unknown];

    pub fn as_str(&self) -> &'static str {
        match self {
            WeightClass::Small => "small",
            WeightClass::Large => "large",
            WeightClass::Heavy => "heavy",
            WeightClass::Unknown => "unknown",
        }
    }
}

impl fmt::Display for WeightClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(WeightClass::Small),
            "large" => Ok(WeightClass::Large),
            "heavy" => Ok(WeightClass::Heavy),
            "unknown" | "" => Ok(WeightClass::Unknown),
            other => Err(Error::invalid(format!("unknown weight class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub flight_id: String,
    pub aircraft_type: String,
    pub is_helicopter: bool,
    pub is_military_or_uas: bool,
    pub weight_class: WeightClass,
    pub missed_approach: bool,
    pub points: Vec<TrackPoint>,
}

impl Track {
    /// Checks the structural invariants: non-empty id and points, valid
    /// coordinates, strictly increasing time.
    pub fn validate(&self) -> Result<()> {
        if self.flight_id.is_empty() {
            return Err(Error::invalid("flight_id is empty"));
        }
        if self.points.is_empty() {
            return Err(Error::invalid(format!("track {} has no points", self.flight_id)));
        }
        for p in &self.points {
            if !p.position().is_valid() {
                return Err(Error::invalid(format!(
                    "track {}: position ({}, {}) out of range",
                    self.flight_id, p.lat, p.lon
                )));
            }
        }
        if self.points.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::invalid(format!(
                "track {}: non-monotonic time",
                self.flight_id
            )));
        }
        Ok(())
    }

    /// Copy of this track's metadata with a different point list.
    pub fn with_points(&self, points: Vec<TrackPoint>) -> Track {
        Track { points, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> Track {
        Track {
            flight_id: self.flight_id.clone(),
            aircraft_type: self.aircraft_type.clone(),
            is_helicopter: self.is_helicopter,
            is_military_or_uas: self.is_military_or_uas,
            weight_class: self.weight_class,
            missed_approach: self.missed_approach,
            points: Vec::new(),
        }
    }

    pub fn duration_s(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// A row or flight that could not be ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub flight_id: String,
    /// 1-based line in the source, when the reject concerns a single row.
    pub line: Option<u64>,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedTracks {
    pub tracks: Vec<Track>,
    pub rejects: Vec<Reject>,
}

struct Pending {
    meta: Track,
    first_line: u64,
}

/// Reads the track CSV format.
///
/// Tracks come back ordered by flight_id. Bad rows are dropped into
/// `rejects` individually; a flight with repeated timestamps is rejected as a
/// whole with reason "non-monotonic time".
pub fn parse_tracks<R: Read>(source: R) -> Result<ParsedTracks> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let header = reader.headers()?.clone();
    if header.len() != TRACK_CSV_HEADER.len()
        || header.iter().zip(TRACK_CSV_HEADER).any(|(got, want)| got != want)
    {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "malformed header `{}`, expected `{}`",
                header.iter().collect::<Vec<_>>().join(","),
                TRACK_CSV_HEADER.join(",")
            ),
        });
    }

    let mut flights: BTreeMap<String, Pending> = BTreeMap::new();
    let mut out = ParsedTracks::default();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let flight_id = record.get(0).unwrap_or("").to_string();
        match parse_row(&record) {
            Ok((meta, point)) => {
                let entry = flights
                    .entry(flight_id)
                    .or_insert_with(|| Pending { meta, first_line: line });
                entry.meta.points.push(point);
            }
            Err(reason) => out.rejects.push(Reject { flight_id, line: Some(line), reason }),
        }
    }

    for (_, pending) in flights {
        let mut track = pending.meta;
        track.points.sort_by(|a, b| a.t.total_cmp(&b.t));
        if track.points.windows(2).any(|w| w[1].t <= w[0].t) {
            out.rejects.push(Reject {
                flight_id: track.flight_id,
                line: Some(pending.first_line),
                reason: "non-monotonic time".into(),
            });
        } else {
            out.tracks.push(track);
        }
    }
    Ok(out)
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<(Track, TrackPoint), String> {
    if record.len() != TRACK_CSV_HEADER.len() {
        return Err(format!("expected {} fields, got {}", TRACK_CSV_HEADER.len(), record.len()));
    }
    let field = |i: usize| record.get(i).unwrap_or("");
    let flight_id = field(0);
    if flight_id.is_empty() {
        return Err("empty flight_id".into());
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        let s = field(i);
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("unparsable {} `{s}`", TRACK_CSV_HEADER[i]))
    };
    let opt = |i: usize| -> std::result::Result<Option<f64>, String> {
        if field(i).is_empty() {
            Ok(None)
        } else {
            num(i).map(Some)
        }
    };
    let flag = |i: usize| -> std::result::Result<bool, String> {
        match field(i) {
            "0" => Ok(false),
            "1" => Ok(true),
            s => Err(format!("{} must be 0 or 1, got `{s}`", TRACK_CSV_HEADER[i])),
        }
    };
    let point = TrackPoint {
        t: num(1)?,
        lat: num(2)?,
        lon: num(3)?,
        alt: opt(4)?,
        gs: opt(5)?,
        course: opt(6)?,
    };
    if !point.position().is_valid() {
        return Err(format!("position ({}, {}) out of range", point.lat, point.lon));
    }
    let meta = Track {
        flight_id: flight_id.to_string(),
        aircraft_type: field(7).to_string(),
        is_helicopter: flag(8)?,
        is_military_or_uas: flag(9)?,
        weight_class: field(10).parse().map_err(|e: Error| e.to_string())?,
        missed_approach: flag(11)?,
        points: Vec::new(),
    };
    Ok((meta, point))
}

/// Writes tracks in the CSV format read by [`parse_tracks`].
pub fn write_tracks<W: Write>(sink: W, tracks: &[Track]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(TRACK_CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let flag = |b: bool| if b { "1" } else { "0" };
    for track in tracks {
        for p in &track.points {
            w.write_record([
                track.flight_id.as_str(),
                &p.t.to_string(),
                &p.lat.to_string(),
                &p.lon.to_string(),
                &opt(p.alt),
                &opt(p.gs),
                &opt(p.course),
                track.aircraft_type.as_str(),
                flag(track.is_helicopter),
                flag(track.is_military_or_uas),
                track.weight_class.as_str(),
                flag(track.missed_approach),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Keeps the final contiguous run of points inside the terminal radius.
///
/// Returns `None` when the last point is outside the radius, i.e. the flight
/// did not end in the terminal area.
pub fn clip_terminal(track: &Track, airport: &AirportConfig) -> Option<Track> {
    let inside =
        |p: &TrackPoint| airport.distance_to_threshold(p.position()) <= airport.terminal_radius;
    if !inside(track.points.last()?) {
        return None;
    }
    let start = track
        .points
        .iter()
        .rposition(|p| !inside(p))
        .map_or(0, |i| i + 1);
    Some(track.with_points(track.points[start..].to_vec()))
}

/// Sampling gaps as `(index, t[index + 1] - t[index])`.
pub fn time_gaps(track: &Track) -> Vec<(usize, f64)> {
    track.points.windows(2).enumerate().map(|(i, w)| (i, w[1].t - w[0].t)).collect()
}

pub fn max_time_gap(track: &Track) -> f64 {
    time_gaps(track).into_iter().map(|(_, g)| g).fold(0.0, f64::max)
}
