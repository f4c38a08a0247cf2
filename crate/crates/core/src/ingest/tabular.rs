use std::collections::{HashMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{read_to_string, write_string, IngestError, RowIssue};
use crate::geo::GeoPoint;
use crate::propagation::{Environment, SiteRecord};

const SITE_COLUMNS: [&str; 8] = [
    "site_id",
    "lat",
    "lon",
    "tx_power_dbm",
    "antenna_height_m",
    "center_freq_mhz",
    "bandwidth_mhz",
    "environment",
];
const TRAFFIC_COLUMNS: [&str; 4] = ["site_id", "date", "hour", "dl_throughput_mbps"];
const MEASUREMENT_COLUMNS: [&str; 3] = ["lat", "lon", "samples"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficRecord {
    pub site_id: String,
    pub date: NaiveDate,
    pub hour: u8,
    pub dl_throughput_mbps: f64,
    /// Present only when the file carries an optional `band` column.
    pub band: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub location: GeoPoint,
    pub samples: u64,
}

struct Table {
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(text: &str, required: &[&str]) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| IngestError::parse(1, "header", e.to_string()))?
            .clone();
        let columns: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        for name in required {
            if !columns.contains_key(*name) {
                return Err(IngestError::parse(1, *name, "missing column in header"));
            }
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                IngestError::parse(line, "-", e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, record));
        }
        Ok(Table { columns, rows })
    }

    fn field<'r>(&self, record: &'r csv::StringRecord, name: &str) -> Option<&'r str> {
        self.columns.get(name).and_then(|&i| record.get(i))
    }
}

struct Row<'a> {
    table: &'a Table,
    line: u64,
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    fn text(&self, name: &str) -> Result<&str, IngestError> {
        self.table
            .field(self.record, name)
            .ok_or_else(|| IngestError::parse(self.line, name, "missing field"))
    }

    fn number(&self, name: &str) -> Result<f64, IngestError> {
        let raw = self.text(name)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(IngestError::parse(self.line, name, format!("'{raw}' is not a finite number"))),
        }
    }

    fn integer(&self, name: &str) -> Result<i64, IngestError> {
        let raw = self.text(name)?;
        raw.parse::<i64>()
            .map_err(|_| IngestError::parse(self.line, name, format!("'{raw}' is not an integer")))
    }

    fn issue(&self, column: &str, reason: impl Into<String>) -> RowIssue {
        RowIssue {
            line: self.line,
            column: Some(column.to_string()),
            reason: reason.into(),
        }
    }
}

fn finish<T>(items: Vec<T>, issues: Vec<RowIssue>) -> Result<Vec<T>, IngestError> {
    if issues.is_empty() {
        Ok(items)
    } else {
        Err(IngestError::Validation { issues })
    }
}

pub fn parse_sites(path: impl AsRef<Path>) -> Result<Vec<SiteRecord>, IngestError> {
    parse_sites_str(&read_to_string(path.as_ref())?)
}

pub fn parse_sites_str(text: &str) -> Result<Vec<SiteRecord>, IngestError> {
    let table = Table::read(text, &SITE_COLUMNS)?;
    let mut sites = Vec::with_capacity(table.rows.len());
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (line, record) in &table.rows {
        let row = Row { table: &table, line: *line, record };
        let site_id = row.text("site_id")?.to_string();
        let lat = row.number("lat")?;
        let lon = row.number("lon")?;
        let tx_power_dbm = row.number("tx_power_dbm")?;
        let antenna_height_m = row.number("antenna_height_m")?;
        let center_freq_mhz = row.number("center_freq_mhz")?;
        let bandwidth_mhz = row.number("bandwidth_mhz")?;
        let environment: Environment = row
            .text("environment")?
            .parse()
            .map_err(|e: String| IngestError::parse(*line, "environment", e))?;

        let before = issues.len();
        if site_id.is_empty() {
            issues.push(row.issue("site_id", "empty site id"));
        } else if !seen.insert(site_id.clone()) {
            issues.push(row.issue("site_id", format!("duplicate site id '{site_id}'")));
        }
        let location = GeoPoint::new(lat, lon);
        if location.is_err() {
            issues.push(row.issue("lat", format!("coordinate ({lat}, {lon}) out of range")));
        }
        if !(1.0..=300.0).contains(&antenna_height_m) {
            issues.push(row.issue("antenna_height_m", format!("{antenna_height_m} outside 1-300 m")));
        }
        if !(150.0..=3000.0).contains(&center_freq_mhz) {
            issues.push(row.issue(
                "center_freq_mhz",
                format!("{center_freq_mhz} outside model validity range 150-3000 MHz"),
            ));
        }
        if bandwidth_mhz <= 0.0 {
            issues.push(row.issue("bandwidth_mhz", format!("{bandwidth_mhz} must be > 0")));
        }
        if issues.len() == before {
            sites.push(SiteRecord {
                site_id,
                location: location.expect("checked above"),
                tx_power_dbm,
                antenna_height_m,
                center_freq_mhz,
                bandwidth_mhz,
                environment,
            });
        }
    }
    finish(sites, issues)
}

pub fn parse_traffic(path: impl AsRef<Path>) -> Result<Vec<TrafficRecord>, IngestError> {
    parse_traffic_str(&read_to_string(path.as_ref())?)
}

pub fn parse_traffic_str(text: &str) -> Result<Vec<TrafficRecord>, IngestError> {
    let table = Table::read(text, &TRAFFIC_COLUMNS)?;
    let has_band = table.columns.contains_key("band");
    let mut out = Vec::with_capacity(table.rows.len());
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (line, record) in &table.rows {
        let row = Row { table: &table, line: *line, record };
        let site_id = row.text("site_id")?.to_string();
        let raw_date = row.text("date")?;
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| IngestError::parse(*line, "date", format!("'{raw_date}' is not an ISO-8601 date")))?;
        let hour = row.integer("hour")?;
        let dl = row.number("dl_throughput_mbps")?;
        let band = if has_band { Some(row.text("band")?.to_string()) } else { None };

        let before = issues.len();
        if site_id.is_empty() {
            issues.push(row.issue("site_id", "empty site id"));
        }
        if !(0..=23).contains(&hour) {
            issues.push(row.issue("hour", format!("{hour} outside 0-23")));
        }
        if dl < 0.0 {
            issues.push(row.issue("dl_throughput_mbps", format!("{dl} must be >= 0")));
        }
        if !seen.insert((site_id.clone(), date, hour, band.clone())) {
            issues.push(row.issue("site_id", format!("duplicate (site_id, date, hour) = ({site_id}, {date}, {hour})")));
        }
        if issues.len() == before {
            out.push(TrafficRecord {
                site_id,
                date,
                hour: hour as u8,
                dl_throughput_mbps: dl,
                band,
            });
        }
    }
    finish(out, issues)
}

pub fn parse_measurements(path: impl AsRef<Path>) -> Result<Vec<MeasurementRecord>, IngestError> {
    parse_measurements_str(&read_to_string(path.as_ref())?)
}

pub fn parse_measurements_str(text: &str) -> Result<Vec<MeasurementRecord>, IngestError> {
    let table = Table::read(text, &MEASUREMENT_COLUMNS)?;
    let mut out = Vec::with_capacity(table.rows.len());
    let mut issues = Vec::new();
    for (line, record) in &table.rows {
        let row = Row { table: &table, line: *line, record };
        let lat = row.number("lat")?;
        let lon = row.number("lon")?;
        let samples = row.integer("samples")?;
        let before = issues.len();
        let location = GeoPoint::new(lat, lon);
        if location.is_err() {
            issues.push(row.issue("lat", format!("coordinate ({lat}, {lon}) out of range")));
        }
        if samples < 1 {
            issues.push(row.issue("samples", format!("{samples} must be >= 1")));
        }
        if issues.len() == before {
            out.push(MeasurementRecord {
                location: location.expect("checked above"),
                samples: samples as u64,
            });
        }
    }
    finish(out, issues)
}

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn sites_to_csv(sites: &[SiteRecord]) -> String {
    csv_text(
        &SITE_COLUMNS,
        sites.iter().map(|s| {
            vec![
                s.site_id.clone(),
                s.location.lat.to_string(),
                s.location.lon.to_string(),
                s.tx_power_dbm.to_string(),
                s.antenna_height_m.to_string(),
                s.center_freq_mhz.to_string(),
                s.bandwidth_mhz.to_string(),
                s.environment.to_string(),
            ]
        }),
    )
}

pub fn write_sites(path: impl AsRef<Path>, sites: &[SiteRecord]) -> Result<(), IngestError> {
    write_string(path.as_ref(), &sites_to_csv(sites))
}

pub fn traffic_to_csv(records: &[TrafficRecord]) -> String {
    let with_band = records.iter().any(|r| r.band.is_some());
    let mut header = TRAFFIC_COLUMNS.to_vec();
    if with_band {
        header.push("band");
    }
    csv_text(
        &header,
        records.iter().map(|r| {
            let mut row = vec![
                r.site_id.clone(),
                r.date.format("%Y-%m-%d").to_string(),
                r.hour.to_string(),
                r.dl_throughput_mbps.to_string(),
            ];
            if with_band {
                row.push(r.band.clone().unwrap_or_default());
            }
            row
        }),
    )
}

pub fn write_traffic(path: impl AsRef<Path>, records: &[TrafficRecord]) -> Result<(), IngestError> {
    write_string(path.as_ref(), &traffic_to_csv(records))
}

pub fn measurements_to_csv(records: &[MeasurementRecord]) -> String {
    csv_text(
        &MEASUREMENT_COLUMNS,
        records
            .iter()
            .map(|m| vec![m.location.lat.to_string(), m.location.lon.to_string(), m.samples.to_string()]),
    )
}

pub fn write_measurements(path: impl AsRef<Path>, records: &[MeasurementRecord]) -> Result<(), IngestError> {
    write_string(path.as_ref(), &measurements_to_csv(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SITE_HEADER: &str = "site_id,lat,lon,tx_power_dbm,antenna_height_m,center_freq_mhz,bandwidth_mhz,environment\n";

    #[test]
    fn header_only_is_empty() {
        assert!(parse_sites_str(SITE_HEADER).unwrap().is_empty());
    }

    #[test]
    fn one_site_row() {
        let text = format!("{SITE_HEADER}# comment\r\nA1,45.4,-75.7,43,35,1900,20,urban\r\n");
        let sites = parse_sites_str(&text).unwrap();
        assert_eq!(sites.len(), 1);
        let s = &sites[0];
        assert_eq!(s.site_id, "A1");
        assert_eq!((s.location.lat, s.location.lon), (45.4, -75.7));
        assert_eq!((s.tx_power_dbm, s.antenna_height_m, s.center_freq_mhz, s.bandwidth_mhz), (43.0, 35.0, 1900.0, 20.0));
        assert_eq!(s.environment, Environment::Urban);
    }

    #[test]
    fn out_of_range_frequency_is_validation_error() {
        let text = format!("{SITE_HEADER}A1,45.4,-75.7,43,35,5000,20,urban\nA2,45.4,-75.7,43,35,900,0,open\n");
        match parse_sites_str(&text) {
            Err(IngestError::Validation { issues }) => {
                assert_eq!(issues.len(), 2);
                assert!(issues[0].reason.contains("150-3000"));
                assert_eq!(issues[0].line, 2);
                assert_eq!(issues[1].line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_number_is_parse_error() {
        let text = format!("{SITE_HEADER}A1,abc,-75.7,43,35,900,20,urban\n");
        match parse_sites_str(&text) {
            Err(IngestError::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, "lat");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column() {
        assert!(matches!(parse_sites_str("site_id,lat\n"), Err(IngestError::Parse { line: 1, .. })));
    }

    const TRAFFIC_HEADER: &str = "site_id,date,hour,dl_throughput_mbps\n";

    #[test]
    fn traffic_rows() {
        let text = format!("{TRAFFIC_HEADER}A,2024-03-01,0,10\nA,2024-03-01,1,12.5\nB,2024-03-01,0,0\n");
        let t = parse_traffic_str(&text).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[1].hour, 1);
        assert_eq!(t[1].dl_throughput_mbps, 12.5);
        assert!(t[0].band.is_none());
    }

    #[test]
    fn traffic_duplicates_and_bad_hour() {
        let dup = format!("{TRAFFIC_HEADER}A,2024-03-01,0,10\nA,2024-03-01,0,11\n");
        assert!(matches!(parse_traffic_str(&dup), Err(IngestError::Validation { .. })));
        let hour = format!("{TRAFFIC_HEADER}A,2024-03-01,24,10\n");
        match parse_traffic_str(&hour) {
            Err(IngestError::Validation { issues }) => assert_eq!(issues[0].column.as_deref(), Some("hour")),
            other => panic!("unexpected {other:?}"),
        }
        let date = format!("{TRAFFIC_HEADER}A,2024-02-30,1,10\n");
        assert!(matches!(parse_traffic_str(&date), Err(IngestError::Parse { .. })));
    }

    #[test]
    fn traffic_band_column_extends_key() {
        let text = "site_id,date,hour,dl_throughput_mbps,band\nA,2024-03-01,0,10,b7\nA,2024-03-01,0,5,b66\n";
        let t = parse_traffic_str(text).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].band.as_deref(), Some("b66"));
        assert_eq!(parse_traffic_str(&traffic_to_csv(&t)).unwrap(), t);
    }

    #[test]
    fn measurements() {
        let m = parse_measurements_str("lat,lon,samples\n45,-75,3\n").unwrap();
        assert_eq!(m[0].samples, 3);
        assert!(matches!(
            parse_measurements_str("lat,lon,samples\n45,-75,0\n"),
            Err(IngestError::Validation { .. })
        ));
    }

    fn arb_site() -> impl Strategy<Value = SiteRecord> {
        (
            "[a-zA-Z0-9_,\" ]{1,8}",
            -89.0..89.0f64,
            -179.0..179.0f64,
            0.0..60.0f64,
            1.0..300.0f64,
            150.0..3000.0f64,
            0.1..100.0f64,
            0..3usize,
        )
            .prop_map(|(id, lat, lon, p, h, f, b, e)| SiteRecord {
                site_id: format!("s{id}"),
                location: GeoPoint::new(lat, lon).unwrap(),
                tx_power_dbm: p,
                antenna_height_m: h,
                center_freq_mhz: f,
                bandwidth_mhz: b,
                environment: [Environment::Urban, Environment::Suburban, Environment::Open][e],
            })
    }

    proptest! {
        #[test]
        fn sites_round_trip(mut sites in proptest::collection::vec(arb_site(), 0..20)) {
            for (i, s) in sites.iter_mut().enumerate() {
                s.site_id = format!("{}-{i}", s.site_id.trim());
            }
            let back = parse_sites_str(&sites_to_csv(&sites)).unwrap();
            prop_assert_eq!(back, sites);
        }

        #[test]
        fn traffic_round_trip(values in proptest::collection::vec((0u8..24, 0.0..1e4f64), 0..30)) {
            let date = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
            let records: Vec<TrafficRecord> = values.iter().enumerate().map(|(i, (h, v))| TrafficRecord {
                site_id: format!("s{i}"), date, hour: *h, dl_throughput_mbps: *v, band: None,
            }).collect();
            prop_assert_eq!(parse_traffic_str(&traffic_to_csv(&records)).unwrap(), records);
        }
    }
}
