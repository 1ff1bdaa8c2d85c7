//! Synthetic straight-in arrivals and labeled anomaly injectors.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::airport::{AirportConfig, RunwayThreshold};
use crate::anomaly::AnomalyClass;
use crate::error::{Error, Result};
use crate::geo::{bearing_deg, destination, haversine_nm, LatLon};
use crate::rng;
use crate::track::{Track, TrackPoint, WeightClass};

/// Epoch time of the first generated flight.
const T0: f64 = 1_700_000_000.0;

const FLEET: [(&str, WeightClass); 8] = [
    ("B738", WeightClass::Large),
    ("A320", WeightClass::Large),
    ("A321", WeightClass::Large),
    ("E175", WeightClass::Large),
    ("B77W", WeightClass::Heavy),
    ("A333", WeightClass::Heavy),
    ("C56X", WeightClass::Small),
    ("PC12", WeightClass::Small),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AirportProfile {
    pub airport_code: String,
    pub threshold_lat: f64,
    pub threshold_lon: f64,
    /// Final approach course, degrees true.
    pub runway_heading: f64,
    pub field_elev: f64,
    pub entry_alt: f64,
    pub entry_alt_jitter: f64,
    pub entry_speed: f64,
    pub entry_speed_jitter: f64,
    pub final_speed: f64,
    pub final_speed_jitter: f64,
    /// Standard deviations of the along-track noise.
    pub noise_alt: f64,
    pub noise_speed: f64,
    /// Upper bound of the sample interval; each step is drawn from
    /// `[1, sample_interval]` seconds.
    pub sample_interval: f64,
}

impl Default for AirportProfile {
    fn default() -> Self {
        Self {
            airport_code: "SYN".into(),
            threshold_lat: 36.08,
            threshold_lon: -115.15,
            runway_heading: 260.0,
            field_elev: 2000.0,
            entry_alt: 11_000.0,
            entry_alt_jitter: 1500.0,
            entry_speed: 250.0,
            entry_speed_jitter: 20.0,
            final_speed: 135.0,
            final_speed_jitter: 10.0,
            noise_alt: 150.0,
            noise_speed: 4.0,
            sample_interval: 4.0,
        }
    }
}

impl AirportProfile {
    pub fn threshold(&self) -> LatLon {
        LatLon::new(self.threshold_lat, self.threshold_lon)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(format!("airport profile {}: {msg}", self.airport_code)));
        if !self.threshold().is_valid() {
            return fail("threshold position is not a valid lat/lon".into());
        }
        let lowest_entry = self.entry_alt - self.entry_alt_jitter.abs();
        if !(lowest_entry > self.field_elev) {
            return fail(format!("entry altitude {lowest_entry} must exceed field elevation {}", self.field_elev));
        }
        let lowest_final = self.final_speed - self.final_speed_jitter.abs();
        let highest_final = self.final_speed + self.final_speed_jitter.abs();
        if !(lowest_final > 0.0) || !(self.entry_speed - self.entry_speed_jitter.abs() > highest_final) {
            return fail("speeds must satisfy entry_speed > final_speed > 0 over the jitter range".into());
        }
        if !(self.noise_alt >= 0.0 && self.noise_speed >= 0.0) {
            return fail("noise levels must be non-negative".into());
        }
        if !(self.sample_interval >= 1.0 && self.sample_interval.is_finite()) {
            return fail(format!("sample_interval must be at least 1 s, got {}", self.sample_interval));
        }
        Ok(())
    }

    /// The one-runway airport the profile's tracks arrive at.
    pub fn airport_config(&self) -> AirportConfig {
        let mut thr = RunwayThreshold::new(runway_id(self.runway_heading), self.threshold_lat, self.threshold_lon, self.field_elev);
        thr.airport_code = self.airport_code.clone();
        AirportConfig { airport_code: self.airport_code.clone(), thresholds: vec![thr], terminal_radius: 40.0 }
    }
}

fn runway_id(heading: f64) -> String {
    let n = ((heading / 10.0).round() as i64).rem_euclid(36);
    format!("{:02}", if n == 0 { 36 } else { n })
}

/// A smooth random perturbation in along-track distance with standard
/// deviation about `sigma`, fading to zero at the threshold.
struct SmoothNoise {
    waves: [(f64, f64, f64); 3],
}

impl SmoothNoise {
    fn new(rng: &mut ChaCha8Rng, sigma: f64) -> Self {
        let amp = sigma * (2.0f64 / 3.0).sqrt();
        let mut wave = || (amp, 2.0 * PI / rng.random_range(4.0..15.0), rng.random_range(0.0..2.0 * PI));
        Self { waves: [wave(), wave(), wave()] }
    }

    fn at(&self, dist_nm: f64, from_end_nm: f64) -> f64 {
        let taper = 1.0 - (-from_end_nm / 2.0).exp();
        taper * self.waves.iter().map(|(a, k, phase)| a * (k * dist_nm + phase).sin()).sum::<f64>()
    }
}

/// `n` nominal arrivals, a pure function of `(profile, n, seed)`.
pub fn gen_nominal(profile: &AirportProfile, n: usize, seed: u64) -> Result<Vec<Track>> {
    profile.validate()?;
    if n == 0 {
        return Err(Error::invalid("number of tracks must be at least 1"));
    }
    Ok((0..n).map(|k| gen_one(profile, seed, k)).collect())
}

fn jitter(rng: &mut ChaCha8Rng, center: f64, spread: f64) -> f64 {
    if spread == 0.0 {
        center
    } else {
        center + rng.random_range(-spread.abs()..=spread.abs())
    }
}

fn gen_one(profile: &AirportProfile, seed: u64, k: usize) -> Track {
    let mut rng = rng::stream(&[seed, 0x5717, k as u64]);
    let entry_alt = jitter(&mut rng, profile.entry_alt, profile.entry_alt_jitter);
    let entry_speed = jitter(&mut rng, profile.entry_speed, profile.entry_speed_jitter);
    let final_speed = jitter(&mut rng, profile.final_speed, profile.final_speed_jitter);
    let d_start = rng.random_range(39.0..39.9);
    let d_end = rng.random_range(0.0..0.3);
    let alt_shape = rng.random_range(0.85..1.25);
    let speed_shape = rng.random_range(0.6..1.0);
    let alt_noise = SmoothNoise::new(&mut rng, profile.noise_alt);
    let speed_noise = SmoothNoise::new(&mut rng, profile.noise_speed);
    let (aircraft_type, weight_class) = FLEET[rng.random_range(0..FLEET.len())];

    let thr = profile.threshold();
    let inbound_from = (profile.runway_heading + 180.0).rem_euclid(360.0);
    let field = profile.field_elev;
    let speed_at = |d: f64| {
        let u = (d - d_end) / (d_start - d_end);
        final_speed + (entry_speed - final_speed) * u.powf(speed_shape)
    };
    let point_at = |t: f64, d: f64| {
        let u = (d - d_end) / (d_start - d_end);
        let pos = destination(thr, inbound_from, d);
        TrackPoint {
            t,
            lat: pos.lat,
            lon: pos.lon,
            alt: Some(field + (entry_alt - field) * u.powf(alt_shape) + alt_noise.at(d, d - d_end)),
            gs: Some(speed_at(d) + speed_noise.at(d, d - d_end)),
            course: Some(profile.runway_heading),
        }
    };

    let mut t = T0 + 600.0 * k as f64;
    let mut d = d_start;
    let mut points = Vec::new();
    loop {
        points.push(point_at(t, d));
        let dt = rng.random_range(1.0..=profile.sample_interval);
        let step = speed_at(d) * dt / 3600.0;
        if d - step <= d_end {
            points.push(point_at(t + dt, d_end));
            break;
        }
        t += dt;
        d -= step;
    }

    Track {
        flight_id: format!("{}-{seed:x}-{k:05}", profile.airport_code),
        aircraft_type: aircraft_type.into(),
        is_helicopter: false,
        is_military_or_uas: false,
        weight_class,
        missed_approach: false,
        points,
    }
}

/// Magnitude ranges of the injectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionParams {
    pub ground_max_agl_ft: f64,
    pub alt_spike_ft: (f64, f64),
    pub speed_spike_kts: (f64, f64),
    pub missing_fraction: (f64, f64),
    pub short_duration_s: (f64, f64),
    pub risky_extent_nm: (f64, f64),
    pub risky_peak_ft: f64,
    pub gap_s: f64,
}

impl Default for InjectionParams {
    fn default() -> Self {
        Self {
            ground_max_agl_ft: 100.0,
            alt_spike_ft: (5000.0, 15_000.0),
            speed_spike_kts: (200.0, 400.0),
            missing_fraction: (0.25, 0.5),
            short_duration_s: (120.0, 280.0),
            risky_extent_nm: (2.0, 4.0),
            risky_peak_ft: 51_000.0,
            gap_s: 3600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSpec {
    pub kind: AnomalyClass,
    pub seed: u64,
    pub params: InjectionParams,
    /// Runway threshold the base track arrives at, and its elevation.
    pub threshold: LatLon,
    pub field_elev: f64,
}

impl InjectionSpec {
    pub fn for_profile(kind: AnomalyClass, seed: u64, profile: &AirportProfile) -> Self {
        Self { kind, seed, params: InjectionParams::default(), threshold: profile.threshold(), field_elev: profile.field_elev }
    }
}

/// Returns a labeled anomalous copy of a nominal track.
pub fn inject(track: &Track, spec: &InjectionSpec) -> Result<Track> {
    if !AnomalyClass::INJECTABLE.contains(&spec.kind) {
        return Err(Error::invalid(format!("no injector for category `{}`", spec.kind)));
    }
    let n = track.points.len();
    if n < 10 {
        return Err(Error::invalid(format!("track {} has {n} points; injectors need at least 10", track.flight_id)));
    }
    let mut rng = rng::stream(&[spec.seed, 0x1a7e, AnomalyClass::INJECTABLE.iter().position(|k| *k == spec.kind).unwrap() as u64]);
    let p = &spec.params;
    let field = spec.field_elev;
    let mut pts = track.points.clone();
    let interior = |rng: &mut ChaCha8Rng| rng.random_range(n / 10..n - n / 10);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..hi) } else { lo };

    match spec.kind {
        AnomalyClass::GroundTrack => {
            for q in &mut pts {
                q.alt = Some(field + rng.random_range(0.0..=p.ground_max_agl_ft));
            }
        }
        AnomalyClass::PointAltitude | AnomalyClass::PointSpeed => {
            let altitude = spec.kind == AnomalyClass::PointAltitude;
            let count = rng.random_range(1..=2);
            let mut at = vec![interior(&mut rng)];
            while at.len() < count {
                let i = interior(&mut rng);
                if !at.contains(&i) {
                    at.push(i);
                }
            }
            let negative = rng.random_bool(0.5);
            for i in at {
                let (slot, range, floor) = if altitude {
                    (&mut pts[i].alt, p.alt_spike_ft, field + 500.0)
                } else {
                    (&mut pts[i].gs, p.speed_spike_kts, 20.0)
                };
                let m = draw(&mut rng, range);
                let base = slot.unwrap_or(floor);
                *slot = Some(if negative && base - m >= floor { base - m } else { base + m });
            }
        }
        AnomalyClass::MissingAltitude => {
            let width = ((draw(&mut rng, p.missing_fraction) * n as f64).ceil() as usize).min(n - 2);
            let start = rng.random_range(1..=n - width - 1);
            pts[start..start + width].iter_mut().for_each(|q| q.alt = None);
        }
        AnomalyClass::NonStandardOperation => {
            let keep = draw(&mut rng, p.short_duration_s);
            let end = pts[n - 1].t;
            pts.retain(|q| end - q.t <= keep);
        }
        AnomalyClass::RiskyOperation => {
            let thr = spec.threshold;
            let far = pts.iter().map(|q| haversine_nm(thr, q.position())).fold(0.0, f64::max);
            let scale = if far > 0.0 { draw(&mut rng, p.risky_extent_nm) / far } else { 1.0 };
            let (t0, t1) = (pts[0].t, pts[n - 1].t);
            let peak = pts
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1.t - (t0 + t1) / 2.0).abs().total_cmp(&(b.1.t - (t0 + t1) / 2.0).abs()))
                .map(|(i, _)| i)
                .unwrap();
            for (i, q) in pts.iter_mut().enumerate() {
                let d = haversine_nm(thr, q.position());
                if d > 0.0 {
                    let moved = destination(thr, bearing_deg(thr, q.position()), d * scale);
                    q.lat = moved.lat;
                    q.lon = moved.lon;
                }
                // a convex mix of the base altitude and the peak never
                // exceeds the peak
                let w = (PI * (q.t - t0) / (t1 - t0)).sin().max(0.0);
                let base = q.alt.unwrap_or(field);
                q.alt = Some(if i == peak { p.risky_peak_ft } else { base + (p.risky_peak_ft - base) * w });
            }
        }
        AnomalyClass::LargeTimeGap => {
            let k = rng.random_range(n / 5..n - n / 5);
            pts[k..].iter_mut().for_each(|q| q.t += p.gap_s);
        }
        _ => unreachable!("checked above"),
    }

    let mut out = track.with_points(pts);
    out.flight_id = format!("{}-inj-{}", track.flight_id, spec.kind.code());
    Ok(out)
}

/// Writes `flight_id,injected_type`; nominal tracks are labeled `none`.
pub fn write_labels<W: Write>(sink: W, labels: &[(String, Option<AnomalyClass>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["flight_id", "injected_type"])?;
    for (id, kind) in labels {
        w.write_record([id.clone(), kind.map_or_else(|| "none".to_string(), |k| k.code())])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::{classify_anomaly, ClassifierConfig};
    use crate::features::{label_preliminary_normal, FilterRuleSet};
    use crate::track::{clip_terminal, max_time_gap, write_tracks};

    fn quiet() -> AirportProfile {
        AirportProfile { noise_alt: 0.0, noise_speed: 0.0, ..AirportProfile::default() }
    }

    #[test]
    fn zero_noise_descends_monotonically_and_passes_the_filter() {
        let p = quiet();
        let cfg = p.airport_config();
        for t in gen_nominal(&p, 20, 3).unwrap() {
            t.validate().unwrap();
            let alts: Vec<f64> = t.points.iter().map(|q| q.alt.unwrap()).collect();
            assert!(alts.windows(2).all(|w| w[1] < w[0]), "{}", t.flight_id);
            assert!(label_preliminary_normal(&t, &FilterRuleSet::default(), &cfg).is_normal(), "{}", t.flight_id);
        }
    }

    #[test]
    fn geometry_and_sampling() {
        let p = AirportProfile::default();
        let thr = p.threshold();
        for t in gen_nominal(&p, 20, 8).unwrap() {
            assert!(t.points.iter().all(|q| haversine_nm(thr, q.position()) <= 40.0));
            assert!(haversine_nm(thr, t.points.last().unwrap().position()) <= 1.0);
            assert!(t.points.windows(2).all(|w| (1.0..=4.0).contains(&(w[1].t - w[0].t))));
            assert_eq!(clip_terminal(&t, &p.airport_config()).unwrap().points.len(), t.points.len());
        }
    }

    #[test]
    fn deterministic_and_distinct() {
        let p = AirportProfile::default();
        let a = gen_nominal(&p, 100, 42).unwrap();
        let ids: std::collections::BTreeSet<_> = a.iter().map(|t| t.flight_id.clone()).collect();
        assert_eq!(ids.len(), 100);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_tracks(&mut x, &a).unwrap();
        write_tracks(&mut y, &gen_nominal(&p, 100, 42).unwrap()).unwrap();
        assert_eq!(x, y);
        assert!(gen_nominal(&p, 0, 1).is_err());
        assert!(gen_nominal(&AirportProfile { entry_alt: 1000.0, ..p }, 1, 1).is_err());
    }

    #[test]
    fn paper_anchors() {
        let p = AirportProfile::default();
        let base = &gen_nominal(&p, 1, 1).unwrap()[0];
        let gap = inject(base, &InjectionSpec::for_profile(AnomalyClass::LargeTimeGap, 1, &p)).unwrap();
        assert!(max_time_gap(&gap) >= 3600.0);
        let risky = inject(base, &InjectionSpec::for_profile(AnomalyClass::RiskyOperation, 1, &p)).unwrap();
        let top = risky.points.iter().filter_map(|q| q.alt).fold(f64::MIN, f64::max);
        assert_eq!(top, 51_000.0);
    }

    #[test]
    fn injectors_change_the_track_and_round_trip() {
        let p = AirportProfile::default();
        let airport = p.airport_config();
        let cfg = ClassifierConfig::default();
        let bases = gen_nominal(&p, 10, 77).unwrap();
        for kind in AnomalyClass::INJECTABLE {
            for (s, base) in bases.iter().enumerate() {
                let out = inject(base, &InjectionSpec::for_profile(kind, s as u64, &p)).unwrap();
                assert_ne!(out.points, base.points);
                out.validate().unwrap();
                assert_eq!(classify_anomaly(&out, &out, &airport, &cfg), kind, "{}", out.flight_id);
            }
        }
        let unclassified = inject(&bases[0], &InjectionSpec::for_profile(AnomalyClass::Unclassified, 0, &p));
        assert!(unclassified.is_err());
    }

    #[test]
    fn nominal_is_unclassified() {
        let p = AirportProfile::default();
        let airport = p.airport_config();
        for t in gen_nominal(&p, 30, 5).unwrap() {
            assert_eq!(classify_anomaly(&t, &t, &airport, &ClassifierConfig::default()), AnomalyClass::Unclassified);
        }
    }

    #[test]
    fn labels_csv() {
        let mut buf = Vec::new();
        write_labels(&mut buf, &[("a".into(), None), ("b".into(), Some(AnomalyClass::PointSpeed))]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "flight_id,injected_type\na,none\nb,point_speed\n");
    }
}
