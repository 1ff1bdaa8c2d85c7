//! Airport configuration: runway thresholds and terminal radius.
//!
//! The text format is line oriented:
//!
//! ```text
//! # comment
//! airport_code = "LAS"
//! terminal_radius_nm = 40
//! threshold = { runway_id = "26L", lat = 36.0822, lon = -115.1250, elev_ft = 2135 }
//! threshold = { runway_id = "19R", lat = 36.0950, lon = -115.1520, elev_ft = 2150 }
//! ```
//!
//! `threshold` may repeat; every value is parsed as a TOML value.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geo::{haversine_nm, LatLon};

pub const DEFAULT_TERMINAL_RADIUS_NM: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RunwayThreshold {
    #[serde(default)]
    pub airport_code: String,
    pub runway_id: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(rename = "elev_ft")]
    pub elev: f64,
}

impl RunwayThreshold {
    pub fn new(runway_id: impl Into<String>, lat: f64, lon: f64, elev: f64) -> Self {
        Self { airport_code: String::new(), runway_id: runway_id.into(), lat, lon, elev }
    }

    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AirportConfig {
    pub airport_code: String,
    pub thresholds: Vec<RunwayThreshold>,
    pub terminal_radius: f64,
}

impl AirportConfig {
    pub fn new(
        airport_code: impl Into<String>,
        thresholds: Vec<RunwayThreshold>,
        terminal_radius: f64,
    ) -> Result<Self> {
        let cfg = Self { airport_code: airport_code.into(), thresholds, terminal_radius };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.terminal_radius > 0.0 && self.terminal_radius.is_finite()) {
            return Err(Error::config(format!(
                "terminal_radius_nm must be positive, got {}",
                self.terminal_radius
            )));
        }
        if self.thresholds.is_empty() {
            return Err(Error::config("airport needs at least one runway threshold"));
        }
        for t in &self.thresholds {
            if !t.position().is_valid() {
                return Err(Error::config(format!(
                    "threshold {} has out-of-range position ({}, {})",
                    t.runway_id, t.lat, t.lon
                )));
            }
            if !t.elev.is_finite() {
                return Err(Error::config(format!("threshold {} elevation not finite", t.runway_id)));
            }
        }
        Ok(())
    }

    /// Distance to the closest configured threshold and that threshold.
    pub fn nearest_threshold(&self, p: LatLon) -> (f64, &RunwayThreshold) {
        self.thresholds
            .iter()
            .map(|t| (haversine_nm(p, t.position()), t))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("validated config has thresholds")
    }

    pub fn distance_to_threshold(&self, p: LatLon) -> f64 {
        self.nearest_threshold(p).0
    }

    /// Field elevation as seen from `p`: the elevation of the nearest threshold.
    pub fn field_elev_near(&self, p: LatLon) -> f64 {
        self.nearest_threshold(p).1.elev
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut code = None;
        let mut radius = None;
        let mut thresholds = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let doc = format!("v = {}", value.trim());
            let parsed: toml::Table = toml::from_str(&doc)
                .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
            let v = parsed.get("v").cloned().expect("key present");
            let bad = |msg: String| Error::Parse { line: line_no, msg };
            match key {
                "airport_code" => {
                    code = Some(
                        v.as_str()
                            .ok_or_else(|| bad("airport_code must be a string".into()))?
                            .to_string(),
                    )
                }
                "terminal_radius_nm" => {
                    radius = Some(
                        v.as_float()
                            .or_else(|| v.as_integer().map(|i| i as f64))
                            .ok_or_else(|| bad("terminal_radius_nm must be a number".into()))?,
                    )
                }
                "threshold" => {
                    let mut table = v
                        .as_table()
                        .cloned()
                        .ok_or_else(|| bad("threshold must be an inline table".into()))?;
                    for k in ["lat", "lon", "elev_ft"] {
                        if let Some(toml::Value::Integer(n)) = table.get(k) {
                            let n = *n as f64;
                            table.insert(k.to_string(), toml::Value::Float(n));
                        }
                    }
                    let t: RunwayThreshold = toml::Value::Table(table)
                        .try_into()
                        .map_err(|e: toml::de::Error| bad(e.to_string()))?;
                    thresholds.push(t);
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let airport_code =
            code.ok_or_else(|| Error::config("airport config is missing `airport_code`"))?;
        for t in &mut thresholds {
            if t.airport_code.is_empty() {
                t.airport_code = airport_code.clone();
            }
        }
        Self::new(airport_code, thresholds, radius.unwrap_or(DEFAULT_TERMINAL_RADIUS_NM))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "airport_code = {:?}", self.airport_code);
        let _ = writeln!(s, "terminal_radius_nm = {:?}", self.terminal_radius);
        for t in &self.thresholds {
            let _ = writeln!(
                s,
                "threshold = {{ runway_id = {:?}, lat = {:?}, lon = {:?}, elev_ft = {:?} }}",
                t.runway_id, t.lat, t.lon, t.elev
            );
        }
        s
    }
}

fn strip_comment(line: &str) -> &str {
    // `#` inside quoted strings is kept.
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}
