//! Streaming occupancy detector.
//!
//! Readings are folded into the current slot's opening window as they
//! arrive. Slot boundaries follow reading timestamps, never the host clock,
//! so replaying a file and running live go through the same code. When a
//! reading lands past the open window (or the stream ends) the window is
//! closed and exactly one [`StatusEvent`] is emitted for that slot.

mod server;

use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::{AcousticsError, RoomModel};
use crate::dataset::{
    windowize, DatasetError, Occupancy, Schedule, SensorKind, SensorReading, SlotAccumulator,
    SlotId, SlotPosition, SlotSample,
};
use crate::id3::{DecisionTree, Id3Error};

pub use server::{ingest_lines, router, serve, StatusBoard};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid reading: {0}")]
    InvalidReading(String),
    #[error("stale reading at {timestamp}: current slot started at {slot_start}")]
    StaleReading {
        timestamp: DateTime<Utc>,
        slot_start: DateTime<Utc>,
    },
    #[error("invalid feature: reverberation time {0} must be > 0")]
    InvalidFeature(f64),
    #[error("invalid threshold {0}: must be > 0")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Id3(#[from] Id3Error),
    #[error(transparent)]
    Acoustics(#[from] AcousticsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, DetectorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Occupied,
    Unoccupied,
    Unknown,
}

impl From<Occupancy> for Status {
    fn from(o: Occupancy) -> Self {
        match o {
            Occupancy::Occupied => Status::Occupied,
            Occupancy::Unoccupied => Status::Unoccupied,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Occupied => "occupied",
            Status::Unoccupied => "unoccupied",
            Status::Unknown => "unknown",
        })
    }
}

pub const DEFAULT_THETA: f64 = 0.45;

/// Occupied iff reverberation time ≤ `theta` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRule {
    theta: f64,
}

impl ThresholdRule {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(DetectorError::InvalidThreshold(theta));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl Default for ThresholdRule {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
        }
    }
}

pub fn threshold_detect(reverberation_time: f64, rule: &ThresholdRule) -> Result<Occupancy> {
    if !(reverberation_time.is_finite() && reverberation_time > 0.0) {
        return Err(DetectorError::InvalidFeature(reverberation_time));
    }
    Ok(Occupancy::from(reverberation_time <= rule.theta))
}

/// The tree decides when one is loaded; otherwise the threshold rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Tree(DecisionTree),
    Threshold(ThresholdRule),
}

impl Classifier {
    pub fn new(tree: Option<DecisionTree>, rule: ThresholdRule) -> Self {
        match tree {
            Some(t) => Classifier::Tree(t),
            None => Classifier::Threshold(rule),
        }
    }

    pub fn classify(&self, s: &SlotSample) -> Result<Occupancy> {
        match self {
            Classifier::Tree(t) => Ok(t.predict_sample(s)?),
            Classifier::Threshold(r) => threshold_detect(s.reverberation_time, r),
        }
    }
}

/// One classification, published when a slot's opening window closes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusEvent {
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reverberation_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub co2: Option<f64>,
    pub day_index: u32,
    pub slot_index: u32,
    pub updated_at: DateTime<Utc>,
}

impl StatusEvent {
    fn classified(s: &SlotSample, class: Occupancy, at: DateTime<Utc>) -> Self {
        Self {
            status: class.into(),
            reverberation_time: Some(s.reverberation_time),
            temperature: Some(s.temperature),
            co2: Some(s.co2),
            day_index: s.day_index,
            slot_index: s.slot_index,
            updated_at: at,
        }
    }

    fn unknown(id: SlotId, at: DateTime<Utc>) -> Self {
        Self {
            status: Status::Unknown,
            reverberation_time: None,
            temperature: None,
            co2: None,
            day_index: id.day,
            slot_index: id.slot,
            updated_at: at,
        }
    }

    pub fn slot_id(&self) -> SlotId {
        SlotId::new(self.day_index, self.slot_index)
    }

    /// One JSON line; the normalized form used to compare event streams.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

/// Fused value of one kind and the closed-window count when it was seen.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Held {
    value: f64,
    window: u64,
}

/// Mutable detector state; owned by the single ingestion loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorState {
    pub base_date: Option<NaiveDate>,
    pub current_slot: Option<SlotId>,
    window: SlotAccumulator,
    window_open: bool,
    closed_windows: u64,
    held: [Option<Held>; 3],
    pub last_status: Option<Status>,
    pub last_reverberation_time: Option<f64>,
    pub updated_at: Option<DateTime<Utc>>,
}

impl DetectorState {
    /// `Unknown` until the first complete slot has been classified.
    pub fn status(&self) -> Status {
        self.last_status.unwrap_or(Status::Unknown)
    }

    pub fn window_open(&self) -> bool {
        self.window_open
    }
}

fn kind_index(k: SensorKind) -> usize {
    match k {
        SensorKind::Co2 => 0,
        SensorKind::Temperature => 1,
        SensorKind::Frequency => 2,
    }
}

pub struct Detector {
    room: RoomModel,
    classifier: Classifier,
    schedule: Schedule,
    /// Reuse a kind's value from the immediately preceding window when it
    /// is missing from the current one.
    hold_last: bool,
    state: DetectorState,
}

impl Detector {
    pub fn new(room: RoomModel, classifier: Classifier, schedule: Schedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            room,
            classifier,
            schedule,
            hold_last: false,
            state: DetectorState::default(),
        })
    }

    pub fn with_hold_last(mut self, hold: bool) -> Self {
        self.hold_last = hold;
        self
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    /// Folds one reading. Returns the event of the window this reading
    /// closed, if any. Readings older than the current slot are rejected
    /// and leave the state untouched.
    pub fn step(&mut self, reading: &SensorReading) -> Result<Option<StatusEvent>> {
        reading.validate().map_err(DetectorError::InvalidReading)?;
        let ts = reading.timestamp;
        let base = *self
            .state
            .base_date
            .get_or_insert_with(|| self.schedule.start_date.unwrap_or(ts.date_naive()));
        let pos = self.schedule.position(ts, base);
        if let Some(cur) = self.state.current_slot {
            let slot_start = self.schedule.slot_start(cur, base);
            if ts < slot_start {
                return Err(DetectorError::StaleReading {
                    timestamp: ts,
                    slot_start,
                });
            }
        }
        if pos == SlotPosition::BeforeStart {
            return Err(DetectorError::StaleReading {
                timestamp: ts,
                slot_start: self.schedule.slot_start(SlotId::new(0, 0), base),
            });
        }

        let mut event = None;
        if let Some(cur) = self.state.current_slot {
            if self.state.window_open && ts >= self.schedule.window_end(cur, base) {
                event = Some(self.close_window()?);
            }
        }
        if let SlotPosition::Window(id) = pos {
            if self.state.current_slot != Some(id) {
                self.state.current_slot = Some(id);
                self.state.window = SlotAccumulator::default();
                self.state.window_open = true;
            }
            if self.state.window_open {
                self.state.window.push(reading);
            }
        }
        Ok(event)
    }

    /// Closes the open window at end of stream.
    pub fn finish(&mut self) -> Result<Option<StatusEvent>> {
        if self.state.window_open {
            return self.close_window().map(Some);
        }
        Ok(None)
    }

    fn close_window(&mut self) -> Result<StatusEvent> {
        let id = self.state.current_slot.expect("open window has a slot");
        let base = self
            .state
            .base_date
            .expect("base date set on first reading");
        let at = self.schedule.window_end(id, base);
        self.state.window_open = false;
        self.state.closed_windows += 1;
        let window = std::mem::take(&mut self.state.window);
        let how = self.schedule.aggregation;

        let finished = window.finish(id, &self.room, how)?;
        let sample = match finished {
            Ok(s) => Some(s),
            Err(_) if self.hold_last => self.fill_from_held(&window, id)?,
            Err(_) => None,
        };
        for k in SensorKind::ALL {
            if let Some(v) = window.value(k, how) {
                self.state.held[kind_index(k)] = Some(Held {
                    value: v,
                    window: self.state.closed_windows,
                });
            }
        }
        let event = match sample {
            Some(s) => {
                let class = self.classifier.classify(&s)?;
                StatusEvent::classified(&s, class, at)
            }
            None => StatusEvent::unknown(id, at),
        };
        self.state.last_status = Some(event.status);
        self.state.last_reverberation_time = event.reverberation_time;
        self.state.updated_at = Some(at);
        Ok(event)
    }

    fn fill_from_held(&self, window: &SlotAccumulator, id: SlotId) -> Result<Option<SlotSample>> {
        let how = self.schedule.aggregation;
        let previous = self.state.closed_windows - 1;
        let mut values = [0.0; 3];
        for k in SensorKind::ALL {
            let v = match window.value(k, how) {
                Some(v) => v,
                None => match self.state.held[kind_index(k)] {
                    Some(h) if h.window == previous && previous > 0 => h.value,
                    _ => return Ok(None),
                },
            };
            values[kind_index(k)] = v;
        }
        let [co2, temperature, frequency] = values;
        Ok(Some(SlotSample::new(
            id.day,
            id.slot,
            temperature,
            co2,
            self.room.reverberation(frequency)?,
            None,
        )))
    }
}

/// Batch path: windowize the whole file, then classify every slot that saw
/// readings. Produces the same events as streaming the readings through
/// [`Detector::step`] without value holding.
pub fn batch_events(
    readings: &[SensorReading],
    schedule: &Schedule,
    room: &RoomModel,
    classifier: &Classifier,
) -> Result<Vec<StatusEvent>> {
    let out = windowize(readings, schedule, room)?;
    let Some(base) = out.base_date else {
        return Ok(Vec::new());
    };
    let mut events = Vec::with_capacity(out.samples.len() + out.incompletes.len());
    for s in &out.samples {
        let at = schedule.window_end(s.slot_id(), base);
        events.push(StatusEvent::classified(s, classifier.classify(s)?, at));
    }
    for inc in &out.incompletes {
        events.push(StatusEvent::unknown(
            inc.slot,
            schedule.window_end(inc.slot, base),
        ));
    }
    events.sort_by_key(StatusEvent::slot_id);
    Ok(events)
}

/// Streams readings through a fresh detector, skipping (and logging)
/// rejected readings.
pub fn replay(detector: &mut Detector, readings: &[SensorReading]) -> Result<Vec<StatusEvent>> {
    let mut events = Vec::new();
    for r in readings {
        match detector.step(r) {
            Ok(Some(ev)) => events.push(ev),
            Ok(None) => {}
            Err(e @ (DetectorError::StaleReading { .. } | DetectorError::InvalidReading(_))) => {
                log::warn!("skipping reading from {}: {e}", r.sensor_id);
            }
            Err(e) => return Err(e),
        }
    }
    events.extend(detector.finish()?);
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Feature;
    use crate::dataset::FeatureSet;
    use crate::dataset::{calibrated_room, parse_timestamp};
    use crate::id3::TreeNode;

    fn r(t: &str, id: &str, kind: SensorKind, v: f64) -> SensorReading {
        SensorReading::new(parse_timestamp(t).unwrap(), id, kind, v).unwrap()
    }

    fn detector(room: RoomModel) -> Detector {
        Detector::new(
            room,
            Classifier::Threshold(ThresholdRule::new(1.0).unwrap()),
            Schedule::default(),
        )
        .unwrap()
    }

    #[test]
    fn threshold_examples() {
        let rule = ThresholdRule::new(1.0).unwrap();
        assert_eq!(
            threshold_detect(1.459188744, &rule).unwrap(),
            Occupancy::Unoccupied
        );
        assert_eq!(
            threshold_detect(0.46944317, &rule).unwrap(),
            Occupancy::Occupied
        );
        assert_eq!(threshold_detect(1.0, &rule).unwrap(), Occupancy::Occupied);
        assert!(matches!(
            threshold_detect(0.0, &rule),
            Err(DetectorError::InvalidFeature(_))
        ));
        assert!(ThresholdRule::new(0.0).is_err());
        assert_eq!(ThresholdRule::default().theta(), 0.45);
    }

    #[test]
    fn threshold_matches_single_node_tree() {
        let rule = ThresholdRule::default();
        let tree = DecisionTree {
            root: TreeNode::Internal {
                feature: Feature::ReverberationTime,
                threshold: rule.theta(),
                left: Box::new(TreeNode::Leaf {
                    class: Occupancy::Occupied,
                    support: 1,
                    purity: 1.0,
                }),
                right: Box::new(TreeNode::Leaf {
                    class: Occupancy::Unoccupied,
                    support: 1,
                    purity: 1.0,
                }),
            },
            k_min_points: 1,
            max_depth: None,
            features: FeatureSet::only(Feature::ReverberationTime),
        };
        for i in 1..2000 {
            let t = i as f64 * 0.001;
            let s = SlotSample::new(0, 0, 23.0, 700.0, t, None);
            assert_eq!(
                threshold_detect(t, &rule).unwrap(),
                tree.predict_sample(&s).unwrap(),
                "T = {t}"
            );
        }
    }

    #[test]
    fn event_only_at_window_close() {
        let (room, f) = calibrated_room(&[0.47]).unwrap();
        let mut d = detector(room);
        assert_eq!(d.state().status(), Status::Unknown);
        assert_eq!(
            d.step(&r("2024-01-08T09:01:00Z", "c", SensorKind::Co2, 690.0))
                .unwrap(),
            None
        );
        assert_eq!(
            d.step(&r(
                "2024-01-08T09:01:00Z",
                "t",
                SensorKind::Temperature,
                23.0
            ))
            .unwrap(),
            None
        );
        assert_eq!(
            d.step(&r("2024-01-08T09:02:00Z", "f", SensorKind::Frequency, f[0]))
                .unwrap(),
            None
        );
        assert_eq!(d.state().status(), Status::Unknown);
        let ev = d
            .step(&r("2024-01-08T09:20:00Z", "c", SensorKind::Co2, 690.0))
            .unwrap()
            .unwrap();
        assert_eq!(ev.status, Status::Occupied);
        assert_eq!(
            ev.updated_at,
            parse_timestamp("2024-01-08T09:05:00Z").unwrap()
        );
        assert!((ev.reverberation_time.unwrap() - 0.47).abs() < 1e-12);
        assert_eq!(d.state().status(), Status::Occupied);
        // nothing else pending
        assert_eq!(d.finish().unwrap(), None);
    }

    #[test]
    fn missing_frequency_gives_unknown() {
        let mut d = detector(RoomModel::default_hall());
        d.step(&r("2024-01-08T09:01:00Z", "c", SensorKind::Co2, 690.0))
            .unwrap();
        d.step(&r(
            "2024-01-08T09:01:00Z",
            "t",
            SensorKind::Temperature,
            23.0,
        ))
        .unwrap();
        let ev = d.finish().unwrap().unwrap();
        assert_eq!(ev.status, Status::Unknown);
        assert_eq!(ev.reverberation_time, None);
        let json = ev.to_json_line();
        assert!(!json.contains("reverberation_time") && !json.contains("co2"));
    }

    #[test]
    fn stale_readings_are_rejected() {
        let mut d = detector(RoomModel::default_hall());
        d.step(&r("2024-01-08T09:51:00Z", "c", SensorKind::Co2, 690.0))
            .unwrap();
        let before = d.state().clone();
        let err = d
            .step(&r("2024-01-08T09:49:00Z", "c", SensorKind::Co2, 690.0))
            .unwrap_err();
        assert!(matches!(err, DetectorError::StaleReading { .. }));
        assert_eq!(d.state(), &before);
        // earlier in the same slot is fine
        assert!(d
            .step(&r("2024-01-08T09:50:00Z", "c", SensorKind::Co2, 690.0))
            .is_ok());
    }

    #[test]
    fn one_event_per_slot() {
        let mut d = detector(RoomModel::default_hall());
        let mut events = Vec::new();
        for t in [
            "09:00", "09:01", "09:06", "09:30", "09:49", "09:50", "09:51", "10:39",
        ] {
            for (k, v) in [
                (SensorKind::Co2, 700.0),
                (SensorKind::Temperature, 23.0),
                (SensorKind::Frequency, 1003.0),
            ] {
                events.extend(
                    d.step(&r(&format!("2024-01-08T{t}:00Z"), "s", k, v))
                        .unwrap(),
                );
            }
        }
        events.extend(d.finish().unwrap());
        let slots: Vec<_> = events.iter().map(|e| e.slot_id()).collect();
        assert_eq!(slots, vec![SlotId::new(0, 0), SlotId::new(0, 1)]);
    }

    #[test]
    fn replaying_published_rows_matches_offline_predictions() {
        use crate::id3::{fit_samples, LearnerConfig};
        let rows = [
            (23.18, 721.25, 1.459188744, 0),
            (23.15, 714.0, 1.456123701, 0),
            (23.15, 713.5, 1.473628013, 0),
            (23.15, 708.25, 1.635583564, 0),
            (23.1, 704.5, 0.46944317, 1),
            (23.0, 681.5, 0.451661291, 1),
            (22.945, 685.0, 0.460310371, 1),
            (22.945, 685.0, 0.520755814, 1),
            (22.89, 689.0, 0.462277467, 0),
            (22.89, 689.5, 0.456447871, 1),
        ];
        let samples: Vec<SlotSample> = rows
            .iter()
            .enumerate()
            .map(|(i, &(t, c, r, y))| {
                SlotSample::new(
                    i as u32 / 8,
                    i as u32 % 8,
                    t,
                    c,
                    r,
                    Some(Occupancy::from(y == 1)),
                )
            })
            .collect();
        let tree = fit_samples(&samples, &LearnerConfig::default().with_k(1)).unwrap();
        let targets: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let (room, freqs) = calibrated_room(&targets).unwrap();
        let schedule = Schedule::default();
        let base = chrono::NaiveDate::from_ymd_opt(2024, 1, 8).unwrap();
        let mut readings = Vec::new();
        for (s, f) in samples.iter().zip(&freqs) {
            let at = schedule.slot_start(s.slot_id(), base) + chrono::TimeDelta::minutes(1);
            readings.push(SensorReading::new(at, "c", SensorKind::Co2, s.co2).unwrap());
            readings
                .push(SensorReading::new(at, "t", SensorKind::Temperature, s.temperature).unwrap());
            readings.push(SensorReading::new(at, "f", SensorKind::Frequency, *f).unwrap());
        }
        let mut d = Detector::new(room, Classifier::Tree(tree.clone()), schedule).unwrap();
        let events = replay(&mut d, &readings).unwrap();
        assert_eq!(events.len(), 10);
        for (ev, s) in events.iter().zip(&samples) {
            assert_eq!(ev.status, Status::from(tree.predict_sample(s).unwrap()));
            assert_eq!(ev.status, Status::from(s.label.unwrap()));
        }
    }

    #[test]
    fn hold_last_covers_one_slot_only() {
        let (room, f) = calibrated_room(&[1.5]).unwrap();
        let mut d = detector(room).with_hold_last(true);
        let full = |t: &str| {
            vec![
                r(t, "c", SensorKind::Co2, 700.0),
                r(t, "t", SensorKind::Temperature, 23.0),
                r(t, "f", SensorKind::Frequency, f[0]),
            ]
        };
        let no_freq = |t: &str| {
            vec![
                r(t, "c", SensorKind::Co2, 700.0),
                r(t, "t", SensorKind::Temperature, 23.0),
            ]
        };
        let mut readings = full("2024-01-08T09:00:00Z");
        readings.extend(no_freq("2024-01-08T09:50:00Z"));
        readings.extend(no_freq("2024-01-08T10:40:00Z"));
        let events = replay(&mut d, &readings).unwrap();
        let statuses: Vec<_> = events.iter().map(|e| e.status).collect();
        assert_eq!(
            statuses,
            vec![Status::Unoccupied, Status::Unoccupied, Status::Unknown]
        );

        let mut plain = detector(calibrated_room(&[1.5]).unwrap().0);
        let statuses: Vec<_> = replay(&mut plain, &readings)
            .unwrap()
            .iter()
            .map(|e| e.status)
            .collect();
        assert_eq!(
            statuses,
            vec![Status::Unoccupied, Status::Unknown, Status::Unknown]
        );
    }
}
