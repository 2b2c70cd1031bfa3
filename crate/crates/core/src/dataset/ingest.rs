//! CSV readers and writers for readings, labels and feature tables.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};

use super::{
    Dataset, DatasetError, Occupancy, Result, SensorKind, SensorReading, SlotId, SlotSample,
};

pub type Labels = BTreeMap<SlotId, Occupancy>;

const READINGS_HEADER: [&str; 4] = ["timestamp", "sensor_id", "kind", "value"];
const LABELS_HEADER: [&str; 3] = ["day_index", "slot_index", "occupied"];
const FEATURES_HEADER: [&str; 6] = [
    "day_index",
    "slot_index",
    "temperature",
    "co2",
    "reverberation_time",
    "occupied",
];

/// A row that failed to parse. `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    /// Accepted readings in timestamp order (stable for equal timestamps).
    pub readings: Vec<SensorReading>,
    pub rejects: Vec<Reject>,
    pub total_rows: usize,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_err(source_name: &str, e: csv::Error) -> DatasetError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => DatasetError::Io {
                path: source_name.to_string(),
                source,
            },
            _ => unreachable!(),
        }
    } else {
        DatasetError::Csv(e)
    }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str], what: &str) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_err(what, e))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(DatasetError::Schema(format!(
            "{what}: expected header `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn reader(src: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(src)
}

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
        .map(|n| n.and_utc())
        .map_err(|_| format!("bad timestamp `{s}`"))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Parses the four fields of one readings row.
pub fn parse_reading_record<'a, I>(fields: I) -> std::result::Result<SensorReading, String>
where
    I: IntoIterator<Item = &'a str>,
{
    let fields: Vec<&str> = fields.into_iter().map(str::trim).collect();
    if fields.len() != READINGS_HEADER.len() {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let timestamp = parse_timestamp(fields[0])?;
    let kind: SensorKind = fields[2].parse()?;
    let value: f64 = fields[3]
        .parse()
        .map_err(|_| format!("bad value `{}`", fields[3]))?;
    SensorReading::new(timestamp, fields[1], kind, value)
}

/// Reads a readings CSV. Malformed rows go to `rejects`; accepted plus
/// rejected always equals the number of data rows.
pub fn ingest_readings(src: impl Read) -> Result<IngestReport> {
    ingest_named(src, "<readings>")
}

pub fn ingest_file(path: impl AsRef<Path>) -> Result<IngestReport> {
    let path = path.as_ref();
    ingest_named(open(path)?, &path.display().to_string())
}

fn ingest_named(src: impl Read, name: &str) -> Result<IngestReport> {
    let mut rdr = reader(src);
    check_header(&mut rdr, &READINGS_HEADER, name)?;
    let mut report = IngestReport::default();
    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                report.total_rows += 1;
                let line = record.position().map_or(line, |p| p.line());
                match parse_reading_record(record.iter()) {
                    Ok(r) => report.readings.push(r),
                    Err(reason) => report.rejects.push(Reject { line, reason }),
                }
            }
            Err(e) if e.is_io_error() => return Err(csv_err(name, e)),
            Err(e) => {
                report.total_rows += 1;
                report.rejects.push(Reject {
                    line,
                    reason: e.to_string(),
                });
            }
        }
    }
    report.readings.sort_by_key(|r| r.timestamp);
    Ok(report)
}

pub fn write_readings(mut out: impl Write, readings: &[SensorReading]) -> std::io::Result<()> {
    writeln!(out, "{}", READINGS_HEADER.join(","))?;
    for r in readings {
        writeln!(
            out,
            "{},{},{},{}",
            format_timestamp(&r.timestamp),
            r.sensor_id,
            r.kind,
            r.value
        )?;
    }
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, name: &str, line: u64) -> Result<&'a str> {
    rec.get(i)
        .ok_or_else(|| DatasetError::Schema(format!("line {line}: missing field `{name}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str, name: &str, line: u64) -> Result<T> {
    s.parse()
        .map_err(|_| DatasetError::Schema(format!("line {line}: bad {name} `{s}`")))
}

fn parse_label(s: &str, line: u64) -> Result<Occupancy> {
    match s {
        "0" => Ok(Occupancy::Unoccupied),
        "1" => Ok(Occupancy::Occupied),
        _ => Err(DatasetError::Schema(format!(
            "line {line}: occupied must be 0 or 1, got `{s}`"
        ))),
    }
}

/// Reads a labels CSV (`day_index,slot_index,occupied`).
pub fn read_labels(src: impl Read) -> Result<Labels> {
    let mut rdr = reader(src);
    check_header(&mut rdr, &LABELS_HEADER, "labels")?;
    let mut labels = Labels::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err("labels", e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let day = parse_num(field(&rec, 0, "day_index", line)?, "day_index", line)?;
        let slot = parse_num(field(&rec, 1, "slot_index", line)?, "slot_index", line)?;
        let label = parse_label(field(&rec, 2, "occupied", line)?, line)?;
        if labels.insert(SlotId::new(day, slot), label).is_some() {
            return Err(DatasetError::Schema(format!(
                "line {line}: duplicate label for (day {day}, slot {slot})"
            )));
        }
    }
    Ok(labels)
}

pub fn read_labels_file(path: impl AsRef<Path>) -> Result<Labels> {
    read_labels(open(path.as_ref())?)
}

pub fn write_labels(mut out: impl Write, labels: &Labels) -> std::io::Result<()> {
    writeln!(out, "{}", LABELS_HEADER.join(","))?;
    for (id, l) in labels {
        writeln!(out, "{},{},{}", id.day, id.slot, l)?;
    }
    Ok(())
}

/// Reads a features CSV. The `occupied` column may be empty for every row.
pub fn read_features(src: impl Read) -> Result<Dataset> {
    let mut rdr = reader(src);
    check_header(&mut rdr, &FEATURES_HEADER, "features")?;
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err("features", e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let label = match rec.get(5).unwrap_or("") {
            "" => None,
            s => Some(parse_label(s, line)?),
        };
        samples.push(SlotSample {
            day_index: parse_num(field(&rec, 0, "day_index", line)?, "day_index", line)?,
            slot_index: parse_num(field(&rec, 1, "slot_index", line)?, "slot_index", line)?,
            temperature: parse_num(field(&rec, 2, "temperature", line)?, "temperature", line)?,
            co2: parse_num(field(&rec, 3, "co2", line)?, "co2", line)?,
            reverberation_time: parse_num(
                field(&rec, 4, "reverberation_time", line)?,
                "reverberation_time",
                line,
            )?,
            label,
        });
    }
    Dataset::new(samples)
}

pub fn read_features_file(path: impl AsRef<Path>) -> Result<Dataset> {
    read_features(open(path.as_ref())?)
}

/// Writes a features CSV with round-trippable float formatting.
pub fn write_features(mut out: impl Write, samples: &[SlotSample]) -> std::io::Result<()> {
    writeln!(out, "{}", FEATURES_HEADER.join(","))?;
    for s in samples {
        let label = s.label.map(|l| l.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.day_index, s.slot_index, s.temperature, s.co2, s.reverberation_time, label
        )?;
    }
    Ok(())
}
