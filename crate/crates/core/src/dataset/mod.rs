//! Sensor readings, lecture-slot feature vectors and labeled datasets.

mod ingest;
mod synthetic;
mod window;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::AcousticsError;

pub use ingest::{
    format_timestamp, ingest_file, ingest_readings, parse_reading_record, parse_timestamp,
    read_features, read_features_file, read_labels, read_labels_file, write_features, write_labels,
    write_readings, IngestReport, Labels, Reject,
};
pub use synthetic::{
    calibrated_room, default_start_date, generate_synthetic, simulate_corpus, ClassParams,
    Gaussian, GeneratorParams, SimulatedCorpus,
};
pub use window::{
    aggregate, windowize, Aggregation, Incomplete, Schedule, SlotAccumulator, SlotPosition,
    WindowOutput,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("label coverage error: missing labels for {} slot(s): {}", missing.len(), fmt_slots(missing))]
    LabelCoverage { missing: Vec<SlotId> },
    #[error("invalid generator params: {0}")]
    Param(String),
    #[error("invalid sample {slot}: {reason}")]
    InvalidSample { slot: SlotId, reason: String },
    #[error(transparent)]
    Acoustics(#[from] AcousticsError),
}

fn fmt_slots(slots: &[SlotId]) -> String {
    let shown: Vec<String> = slots.iter().take(8).map(ToString::to_string).collect();
    let mut s = shown.join(", ");
    if slots.len() > 8 {
        s.push_str(", ...");
    }
    s
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Binary occupancy label: 0 unoccupied, 1 occupied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Occupancy {
    Unoccupied,
    Occupied,
}

impl Occupancy {
    pub fn as_u8(self) -> u8 {
        match self {
            Occupancy::Unoccupied => 0,
            Occupancy::Occupied => 1,
        }
    }

    pub fn index(self) -> usize {
        self.as_u8() as usize
    }

    pub fn flipped(self) -> Self {
        match self {
            Occupancy::Unoccupied => Occupancy::Occupied,
            Occupancy::Occupied => Occupancy::Unoccupied,
        }
    }
}

impl From<Occupancy> for u8 {
    fn from(o: Occupancy) -> u8 {
        o.as_u8()
    }
}

impl TryFrom<u8> for Occupancy {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Occupancy::Unoccupied),
            1 => Ok(Occupancy::Occupied),
            other => Err(format!("occupancy label must be 0 or 1, got {other}")),
        }
    }
}

impl From<bool> for Occupancy {
    fn from(occupied: bool) -> Self {
        if occupied {
            Occupancy::Occupied
        } else {
            Occupancy::Unoccupied
        }
    }
}

impl fmt::Display for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// The three model features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Temperature,
    Co2,
    ReverberationTime,
}

impl Feature {
    /// Column order of a feature vector.
    pub const ALL: [Feature; 3] = [
        Feature::Temperature,
        Feature::Co2,
        Feature::ReverberationTime,
    ];

    /// Preference order when two splits are equally informative.
    pub const TIE_ORDER: [Feature; 3] = [
        Feature::ReverberationTime,
        Feature::Temperature,
        Feature::Co2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Temperature => "temperature",
            Feature::Co2 => "co2",
            Feature::ReverberationTime => "reverberation_time",
        }
    }

    fn bit(self) -> u8 {
        match self {
            Feature::Temperature => 1,
            Feature::Co2 => 2,
            Feature::ReverberationTime => 4,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "temperature" | "temp" => Ok(Feature::Temperature),
            "co2" => Ok(Feature::Co2),
            "reverberation_time" | "reverberation" | "rt" => Ok(Feature::ReverberationTime),
            other => Err(format!("unknown feature `{other}`")),
        }
    }
}

/// Subset of [`Feature`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSet(u8);

impl FeatureSet {
    pub const EMPTY: FeatureSet = FeatureSet(0);
    pub const ALL: FeatureSet = FeatureSet(7);

    pub fn only(f: Feature) -> Self {
        FeatureSet(f.bit())
    }

    pub fn with(self, f: Feature) -> Self {
        FeatureSet(self.0 | f.bit())
    }

    pub fn contains(self, f: Feature) -> bool {
        self.0 & f.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: FeatureSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Enabled features in tie-break order.
    pub fn iter(self) -> impl Iterator<Item = Feature> {
        Feature::TIE_ORDER
            .into_iter()
            .filter(move |f| self.contains(*f))
    }

    /// Enabled features in column order.
    pub fn columns(self) -> impl Iterator<Item = Feature> {
        Feature::ALL.into_iter().filter(move |f| self.contains(*f))
    }

    /// All seven non-empty subsets.
    pub fn non_empty_subsets() -> impl Iterator<Item = FeatureSet> {
        (1u8..8).map(FeatureSet)
    }
}

impl FromIterator<Feature> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = Feature>>(iter: I) -> Self {
        iter.into_iter().fold(FeatureSet::EMPTY, FeatureSet::with)
    }
}

impl FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let set = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Feature::from_str)
            .collect::<std::result::Result<FeatureSet, _>>()?;
        if set.is_empty() {
            return Err("feature list is empty".into());
        }
        Ok(set)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.columns().map(Feature::name).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Co2,
    Temperature,
    Frequency,
}

impl SensorKind {
    pub const ALL: [SensorKind; 3] = [
        SensorKind::Co2,
        SensorKind::Temperature,
        SensorKind::Frequency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SensorKind::Co2 => "co2",
            SensorKind::Temperature => "temperature",
            SensorKind::Frequency => "frequency",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "co2" => Ok(SensorKind::Co2),
            "temperature" => Ok(SensorKind::Temperature),
            "frequency" => Ok(SensorKind::Frequency),
            _ => Err("unknown kind".into()),
        }
    }
}

/// Operating range of the temperature probe in °C.
pub const TEMPERATURE_RANGE: (f64, f64) = (-40.0, 85.0);

/// One timestamped value from one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorReading {
    pub timestamp: DateTime<Utc>,
    pub sensor_id: String,
    pub kind: SensorKind,
    /// ppm for CO2, °C for temperature, Hz for frequency.
    pub value: f64,
}

impl SensorReading {
    pub fn new(
        timestamp: DateTime<Utc>,
        sensor_id: impl Into<String>,
        kind: SensorKind,
        value: f64,
    ) -> std::result::Result<Self, String> {
        let r = Self {
            timestamp,
            sensor_id: sensor_id.into(),
            kind,
            value,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.sensor_id.is_empty() {
            return Err("empty sensor_id".into());
        }
        let v = self.value;
        if !v.is_finite() {
            return Err(format!("non-finite {} value", self.kind));
        }
        match self.kind {
            SensorKind::Co2 | SensorKind::Frequency if v <= 0.0 => {
                Err(format!("{} value {v} must be > 0", self.kind))
            }
            SensorKind::Temperature
                if !(TEMPERATURE_RANGE.0..=TEMPERATURE_RANGE.1).contains(&v) =>
            {
                Err(format!("temperature {v} outside sensor range [-40, 85]"))
            }
            _ => Ok(()),
        }
    }
}

/// A (day, slot) coordinate; ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotId {
    pub day: u32,
    pub slot: u32,
}

impl SlotId {
    pub fn new(day: u32, slot: u32) -> Self {
        Self { day, slot }
    }
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(day {}, slot {})", self.day, self.slot)
    }
}

/// One feature vector for one lecture slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSample {
    pub day_index: u32,
    pub slot_index: u32,
    /// °C
    pub temperature: f64,
    /// ppm
    pub co2: f64,
    /// seconds
    pub reverberation_time: f64,
    pub label: Option<Occupancy>,
}

impl SlotSample {
    pub fn new(
        day_index: u32,
        slot_index: u32,
        temperature: f64,
        co2: f64,
        reverberation_time: f64,
        label: Option<Occupancy>,
    ) -> Self {
        Self {
            day_index,
            slot_index,
            temperature,
            co2,
            reverberation_time,
            label,
        }
    }

    pub fn slot_id(&self) -> SlotId {
        SlotId::new(self.day_index, self.slot_index)
    }

    pub fn feature(&self, f: Feature) -> f64 {
        match f {
            Feature::Temperature => self.temperature,
            Feature::Co2 => self.co2,
            Feature::ReverberationTime => self.reverberation_time,
        }
    }

    pub fn feature_mut(&mut self, f: Feature) -> &mut f64 {
        match f {
            Feature::Temperature => &mut self.temperature,
            Feature::Co2 => &mut self.co2,
            Feature::ReverberationTime => &mut self.reverberation_time,
        }
    }

    fn validate(&self) -> Result<()> {
        for f in Feature::ALL {
            if !self.feature(f).is_finite() {
                return Err(DatasetError::InvalidSample {
                    slot: self.slot_id(),
                    reason: format!("{f} is not finite"),
                });
            }
        }
        Ok(())
    }
}

/// Ordered, immutable collection of slot samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    samples: Vec<SlotSample>,
}

impl Dataset {
    pub const FEATURE_NAMES: [&'static str; 3] = ["temperature", "co2", "reverberation_time"];

    /// Validates that every feature is finite, (day, slot) pairs are unique
    /// and either every sample or no sample is labeled. Samples are kept in
    /// chronological order.
    pub fn new(mut samples: Vec<SlotSample>) -> Result<Self> {
        for s in &samples {
            s.validate()?;
        }
        samples.sort_by_key(SlotSample::slot_id);
        if let Some(w) = samples
            .windows(2)
            .find(|w| w[0].slot_id() == w[1].slot_id())
        {
            return Err(DatasetError::InvalidSample {
                slot: w[0].slot_id(),
                reason: "duplicate (day, slot)".into(),
            });
        }
        let labeled = samples.iter().filter(|s| s.label.is_some()).count();
        if labeled != 0 && labeled != samples.len() {
            let missing = samples
                .iter()
                .filter(|s| s.label.is_none())
                .map(SlotSample::slot_id)
                .collect();
            return Err(DatasetError::LabelCoverage { missing });
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[SlotSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.label.is_some())
    }

    /// Distinct day indices, ascending.
    pub fn days(&self) -> Vec<u32> {
        self.samples
            .iter()
            .map(|s| s.day_index)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn into_samples(self) -> Vec<SlotSample> {
        self.samples
    }
}

/// Attaches labels to windowed samples.
///
/// With `labels == None` the samples stay unlabeled (inference mode). With
/// labels, every sample must be covered; labels for slots that produced no
/// sample are ignored.
pub fn label_samples(samples: Vec<SlotSample>, labels: Option<&Labels>) -> Result<Dataset> {
    let Some(labels) = labels else {
        let samples = samples
            .into_iter()
            .map(|s| SlotSample { label: None, ..s })
            .collect();
        return Dataset::new(samples);
    };
    let missing: Vec<SlotId> = samples
        .iter()
        .map(SlotSample::slot_id)
        .filter(|id| !labels.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::LabelCoverage { missing });
    }
    let samples = samples
        .into_iter()
        .map(|s| {
            let label = labels.get(&s.slot_id()).copied();
            SlotSample { label, ..s }
        })
        .collect();
    Dataset::new(samples)
}

/// Convenience for building a label map.
pub fn labels_from<I: IntoIterator<Item = (SlotId, Occupancy)>>(iter: I) -> Labels {
    iter.into_iter().collect::<BTreeMap<_, _>>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unlabeled(n_days: u32, per_day: u32) -> Vec<SlotSample> {
        (0..n_days)
            .flat_map(|d| (0..per_day).map(move |s| SlotSample::new(d, s, 23.0, 700.0, 1.0, None)))
            .collect()
    }

    #[test]
    fn full_label_coverage() {
        let samples = unlabeled(7, 8);
        let labels = labels_from(samples.iter().map(|s| (s.slot_id(), Occupancy::Occupied)));
        let ds = label_samples(samples, Some(&labels)).unwrap();
        assert_eq!(ds.len(), 56);
        assert!(ds.is_labeled());
        assert_eq!(ds.days(), (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn partial_label_coverage_names_missing_slot() {
        let samples = unlabeled(7, 8);
        let mut labels = labels_from(samples.iter().map(|s| (s.slot_id(), Occupancy::Occupied)));
        labels.remove(&SlotId::new(3, 5));
        match label_samples(samples, Some(&labels)) {
            Err(DatasetError::LabelCoverage { missing }) => {
                assert_eq!(missing, vec![SlotId::new(3, 5)]);
            }
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn all_zero_labels_are_legal() {
        let samples = unlabeled(2, 8);
        let labels = labels_from(samples.iter().map(|s| (s.slot_id(), Occupancy::Unoccupied)));
        let ds = label_samples(samples, Some(&labels)).unwrap();
        assert!(ds
            .samples()
            .iter()
            .all(|s| s.label == Some(Occupancy::Unoccupied)));
    }

    #[test]
    fn inference_mode_strips_labels() {
        let ds = label_samples(unlabeled(1, 3), None).unwrap();
        assert!(!ds.is_labeled());
        assert_eq!(ds.len(), 3);
    }

    #[test]
    fn dataset_rejects_duplicates_and_nan() {
        let mut s = unlabeled(1, 2);
        s.push(s[0].clone());
        assert!(Dataset::new(s).is_err());
        let mut s = unlabeled(1, 1);
        s[0].co2 = f64::NAN;
        assert!(Dataset::new(s).is_err());
    }

    #[test]
    fn reading_invariants() {
        let ts = DateTime::<Utc>::from_timestamp(0, 0).unwrap();
        assert!(SensorReading::new(ts, "c1", SensorKind::Co2, 0.0).is_err());
        assert!(SensorReading::new(ts, "f1", SensorKind::Frequency, -5.0).is_err());
        assert!(SensorReading::new(ts, "t1", SensorKind::Temperature, 90.0).is_err());
        assert!(SensorReading::new(ts, "t1", SensorKind::Temperature, -40.0).is_ok());
        assert!(SensorReading::new(ts, "", SensorKind::Co2, 400.0).is_err());
    }

    #[test]
    fn feature_sets() {
        let s: FeatureSet = "temperature,reverberation_time".parse().unwrap();
        assert_eq!(s.len(), 2);
        assert!(!s.contains(Feature::Co2));
        assert_eq!(
            s.iter().collect::<Vec<_>>(),
            vec![Feature::ReverberationTime, Feature::Temperature]
        );
        assert_eq!(s.to_string(), "temperature,reverberation_time");
        assert_eq!(FeatureSet::non_empty_subsets().count(), 7);
        assert!("".parse::<FeatureSet>().is_err());
        assert!("humidity".parse::<FeatureSet>().is_err());
    }
}
