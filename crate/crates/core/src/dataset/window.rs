//! Lecture-slot windowing and duplicate-sensor fusion.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, NaiveTime, TimeDelta, Utc};

use super::{DatasetError, Result, SensorKind, SensorReading, SlotId, SlotSample};
use crate::acoustics::RoomModel;

/// How values from several sensors of one kind are fused.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

/// Daily lecture timetable. Slots are back to back starting at
/// `first_slot_start`; only readings in the first `window_minutes` of a slot
/// contribute to its features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub first_slot_start: NaiveTime,
    pub slot_minutes: u32,
    pub slots_per_day: u32,
    pub window_minutes: u32,
    pub aggregation: Aggregation,
    /// Calendar date of day 0. Defaults to the date of the earliest reading.
    pub start_date: Option<NaiveDate>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            first_slot_start: NaiveTime::from_hms_opt(9, 0, 0).unwrap(),
            slot_minutes: 50,
            slots_per_day: 8,
            window_minutes: 5,
            aggregation: Aggregation::Mean,
            start_date: None,
        }
    }
}

/// Where a timestamp falls relative to the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotPosition {
    /// Before day 0.
    BeforeStart,
    /// Inside the opening window of a slot.
    Window(SlotId),
    /// Inside a slot, after its opening window.
    AfterWindow(SlotId),
    /// Outside every slot of its day.
    Gap,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(DatasetError::Schedule(m.to_string()));
        if self.slots_per_day == 0 {
            return err("schedule has no slots");
        }
        if self.slot_minutes == 0 {
            return err("slot length must be at least one minute");
        }
        if self.window_minutes == 0 || self.window_minutes > self.slot_minutes {
            return err("window must be between 1 minute and the slot length");
        }
        let day_end =
            TimeDelta::minutes(i64::from(self.slots_per_day) * i64::from(self.slot_minutes));
        let start = self.first_slot_start.signed_duration_since(NaiveTime::MIN);
        if start + day_end > TimeDelta::days(1) {
            return err("slots run past midnight");
        }
        Ok(())
    }

    fn slot_len(&self) -> TimeDelta {
        TimeDelta::minutes(i64::from(self.slot_minutes))
    }

    fn window_len(&self) -> TimeDelta {
        TimeDelta::minutes(i64::from(self.window_minutes))
    }

    pub fn position(&self, ts: DateTime<Utc>, base: NaiveDate) -> SlotPosition {
        let day = (ts.date_naive() - base).num_days();
        if day < 0 {
            return SlotPosition::BeforeStart;
        }
        let offset = ts.time().signed_duration_since(self.first_slot_start);
        if offset < TimeDelta::zero() {
            return SlotPosition::Gap;
        }
        let slot_len = self.slot_len();
        let slot = offset.num_milliseconds() / slot_len.num_milliseconds();
        let slot = match u32::try_from(slot) {
            Ok(s) if s < self.slots_per_day => s,
            _ => return SlotPosition::Gap,
        };
        let id = SlotId::new(day as u32, slot);
        let into_slot = offset - slot_len * slot as i32;
        if into_slot < self.window_len() {
            SlotPosition::Window(id)
        } else {
            SlotPosition::AfterWindow(id)
        }
    }

    pub fn slot_start(&self, id: SlotId, base: NaiveDate) -> DateTime<Utc> {
        let date = base + TimeDelta::days(i64::from(id.day));
        date.and_time(self.first_slot_start).and_utc() + self.slot_len() * id.slot as i32
    }

    pub fn window_end(&self, id: SlotId, base: NaiveDate) -> DateTime<Utc> {
        self.slot_start(id, base) + self.window_len()
    }
}

/// Fuses values: mean or median.
pub fn aggregate(values: &[f64], how: Aggregation) -> f64 {
    debug_assert!(!values.is_empty());
    match how {
        Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregation::Median => {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / 2.0
            }
        }
    }
}

/// Readings collected in one slot's opening window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotAccumulator {
    per_kind: BTreeMap<SensorKind, BTreeMap<String, Vec<f64>>>,
}

impl SlotAccumulator {
    pub fn push(&mut self, r: &SensorReading) {
        self.per_kind
            .entry(r.kind)
            .or_default()
            .entry(r.sensor_id.clone())
            .or_default()
            .push(r.value);
    }

    pub fn is_empty(&self) -> bool {
        self.per_kind.is_empty()
    }

    pub fn missing(&self) -> Vec<SensorKind> {
        SensorKind::ALL
            .into_iter()
            .filter(|k| !self.per_kind.contains_key(k))
            .collect()
    }

    /// Each sensor is first averaged over its own readings, then sensors of
    /// the same kind are fused with `how`.
    pub fn value(&self, kind: SensorKind, how: Aggregation) -> Option<f64> {
        let sensors = self.per_kind.get(&kind)?;
        let per_sensor: Vec<f64> = sensors
            .values()
            .map(|v| aggregate(v, Aggregation::Mean))
            .collect();
        Some(aggregate(&per_sensor, how))
    }

    /// Turns the window into a sample, or reports which kinds are missing.
    pub fn finish(
        &self,
        id: SlotId,
        room: &RoomModel,
        how: Aggregation,
    ) -> Result<std::result::Result<SlotSample, Incomplete>> {
        let missing = self.missing();
        if !missing.is_empty() {
            return Ok(Err(Incomplete { slot: id, missing }));
        }
        let frequency = self.value(SensorKind::Frequency, how).unwrap();
        Ok(Ok(SlotSample {
            day_index: id.day,
            slot_index: id.slot,
            temperature: self.value(SensorKind::Temperature, how).unwrap(),
            co2: self.value(SensorKind::Co2, how).unwrap(),
            reverberation_time: room.reverberation(frequency)?,
            label: None,
        }))
    }
}

/// A slot that saw readings but not all three kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Incomplete {
    pub slot: SlotId,
    pub missing: Vec<SensorKind>,
}

#[derive(Debug, Clone, Default)]
pub struct WindowOutput {
    pub samples: Vec<SlotSample>,
    pub incompletes: Vec<Incomplete>,
    pub base_date: Option<NaiveDate>,
    /// Readings that fell outside every opening window.
    pub ignored: usize,
}

/// Groups readings into slot windows and builds one unlabeled sample per
/// complete slot. Readings are folded in the order given.
pub fn windowize(
    readings: &[SensorReading],
    schedule: &Schedule,
    room: &RoomModel,
) -> Result<WindowOutput> {
    schedule.validate()?;
    let Some(base) = schedule
        .start_date
        .or_else(|| readings.iter().map(|r| r.timestamp.date_naive()).min())
    else {
        return Ok(WindowOutput::default());
    };
    let mut slots: BTreeMap<SlotId, SlotAccumulator> = BTreeMap::new();
    let mut ignored = 0;
    for r in readings {
        match schedule.position(r.timestamp, base) {
            SlotPosition::Window(id) => slots.entry(id).or_default().push(r),
            _ => ignored += 1,
        }
    }
    let mut out = WindowOutput {
        base_date: Some(base),
        ignored,
        ..Default::default()
    };
    for (id, acc) in &slots {
        match acc.finish(*id, room, schedule.aggregation)? {
            Ok(s) => out.samples.push(s),
            Err(inc) => out.incompletes.push(inc),
        }
    }
    Ok(out)
}
