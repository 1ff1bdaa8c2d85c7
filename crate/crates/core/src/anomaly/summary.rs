use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use super::AnomalyReport;
use crate::error::Result;

/// Anomalies not yet run through the classifier.
const UNLABELED: &str = "unlabeled";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryStats {
    pub total: usize,
    pub anomalies: usize,
    pub pct_anomalous: f64,
    /// Anomaly counts per group. Each map sums to `anomalies`.
    pub by_taxonomy: BTreeMap<String, usize>,
    pub by_helicopter: BTreeMap<String, usize>,
    pub by_weight_class: BTreeMap<String, usize>,
}

pub fn summarize(reports: &[AnomalyReport]) -> SummaryStats {
    let mut s = SummaryStats { total: reports.len(), ..Default::default() };
    for r in reports.iter().filter(|r| r.is_anomaly) {
        s.anomalies += 1;
        let category = r.taxonomy.map_or_else(|| UNLABELED.to_string(), |c| c.code());
        *s.by_taxonomy.entry(category).or_default() += 1;
        let kind = if r.is_helicopter { "helicopter" } else { "fixed_wing" };
        *s.by_helicopter.entry(kind.to_string()).or_default() += 1;
        *s.by_weight_class.entry(r.weight_class.to_string()).or_default() += 1;
    }
    if s.total > 0 {
        s.pct_anomalous = 100.0 * s.anomalies as f64 / s.total as f64;
    }
    s
}

impl SummaryStats {
    /// Share of anomalies in `group` of a breakdown, 0 when there are none.
    pub fn fraction(&self, counts: &BTreeMap<String, usize>, group: &str) -> f64 {
        match (self.anomalies, counts.get(group)) {
            (0, _) | (_, None) => 0.0,
            (n, Some(&c)) => c as f64 / n as f64,
        }
    }

    fn views(&self) -> [(&'static str, &BTreeMap<String, usize>); 3] {
        [("taxonomy", &self.by_taxonomy), ("helicopter", &self.by_helicopter), ("weight_class", &self.by_weight_class)]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tracks: {}", self.total);
        let _ = writeln!(out, "anomalous: {} ({:.2}%)", self.anomalies, self.pct_anomalous);
        for (name, counts) in self.views() {
            let _ = writeln!(out, "by {name}:");
            for (group, &n) in counts {
                let _ = writeln!(out, "  {group}: {n} ({:.1}%)", 100.0 * self.fraction(counts, group));
            }
        }
        out
    }

    /// `view,group,count,fraction` rows; the `overall` view gives the
    /// anomalous and normal shares of all tracks.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["view", "group", "count", "fraction"])?;
        let share = |n: usize| if self.total == 0 { 0.0 } else { n as f64 / self.total as f64 };
        let normal = self.total - self.anomalies;
        for (group, n) in [("anomalous", self.anomalies), ("normal", normal)] {
            w.write_record(["overall", group, &n.to_string(), &share(n).to_string()])?;
        }
        for (name, counts) in self.views() {
            for (group, &n) in counts {
                w.write_record([name, group, &n.to_string(), &self.fraction(counts, group).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::{AnomalyClass, NonNotableReason};
    use crate::track::WeightClass;

    fn report(anomaly: bool, heli: bool, class: Option<AnomalyClass>) -> AnomalyReport {
        AnomalyReport {
            flight_id: "x".into(),
            mae: 0.0,
            is_anomaly: anomaly,
            taxonomy: class,
            weight_class: if heli { WeightClass::Small } else { WeightClass::Large },
            is_helicopter: heli,
        }
    }

    #[test]
    fn nineteen_of_two_hundred() {
        let mut rs: Vec<_> = (0..181).map(|_| report(false, false, None)).collect();
        rs.extend((0..19).map(|i| report(true, i % 2 == 0, Some(AnomalyClass::GroundTrack))));
        let s = summarize(&rs);
        assert!((s.pct_anomalous - 9.5).abs() < 1e-12);
        for (_, counts) in s.views() {
            let sum: f64 = counts.keys().map(|g| s.fraction(counts, g)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert_eq!(s.by_helicopter["helicopter"], 10);
    }

    #[test]
    fn empty_and_degenerate() {
        let s = summarize(&[]);
        assert_eq!(s.pct_anomalous, 0.0);
        assert!(s.by_taxonomy.is_empty() && s.by_helicopter.is_empty() && s.by_weight_class.is_empty());

        let heli = Some(AnomalyClass::NonNotable(NonNotableReason::Helicopter));
        let s = summarize(&[report(true, true, heli), report(true, true, None), report(false, false, None)]);
        assert_eq!(s.fraction(&s.by_helicopter, "helicopter"), 1.0);
        assert_eq!(s.by_taxonomy[UNLABELED], 1);
    }

    #[test]
    fn csv_and_text() {
        let s = summarize(&[report(true, false, Some(AnomalyClass::PointSpeed)), report(false, false, None)]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("view,group,count,fraction\noverall,anomalous,1,0.5\noverall,normal,1,0.5\n"));
        assert!(text.contains("taxonomy,point_speed,1,1\n"));
        assert!(s.to_text().contains("anomalous: 1 (50.00%)"));
    }
}
