//! Seeded class-conditional Gaussian generator for desk-scale corpora.
//!
//! Defaults are fitted to the ten published slot rows (four unoccupied, six
//! occupied). [`simulate_corpus`] goes one step further and emits raw sensor
//! readings plus a calibrated room whose absorption table reproduces each
//! generated reverberation time exactly, so the whole pipeline can be
//! replayed from files.

use chrono::{NaiveDate, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    label_samples, windowize, Dataset, DatasetError, Labels, Occupancy, Result, Schedule,
    SensorKind, SensorReading, SlotId, SlotSample, TEMPERATURE_RANGE,
};
use crate::acoustics::{
    AbsorptionTable, Lookup, RoomGeometry, RoomModel, Surface, SABINE_CONSTANT,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub std_dev: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, std_dev: f64) -> Self {
        Self { mean, std_dev }
    }
}

/// Per-feature distributions of one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassParams {
    pub temperature: Gaussian,
    pub co2: Gaussian,
    pub reverberation_time: Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub unoccupied: ClassParams,
    pub occupied: ClassParams,
    /// Prior probability that a slot is truly occupied.
    pub occupied_prob: f64,
    /// Probability each label is flipped after features are drawn.
    pub label_noise_prob: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            unoccupied: ClassParams {
                temperature: Gaussian::new(23.16, 0.02),
                co2: Gaussian::new(714.2, 6.5),
                reverberation_time: Gaussian::new(1.506, 0.085),
            },
            occupied: ClassParams {
                temperature: Gaussian::new(22.97, 0.08),
                co2: Gaussian::new(686.0, 8.0),
                reverberation_time: Gaussian::new(0.470, 0.026),
            },
            occupied_prob: 0.5,
            label_noise_prob: 0.05,
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn with_noise(mut self, p: f64) -> Self {
        self.label_noise_prob = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(DatasetError::Param(m));
        for (class, p) in [
            ("unoccupied", &self.unoccupied),
            ("occupied", &self.occupied),
        ] {
            for (name, g) in [
                ("temperature", p.temperature),
                ("co2", p.co2),
                ("reverberation_time", p.reverberation_time),
            ] {
                if !g.mean.is_finite() || !g.std_dev.is_finite() || g.std_dev < 0.0 {
                    return err(format!("{class} {name}: mean {} sd {}", g.mean, g.std_dev));
                }
            }
            if p.reverberation_time.mean <= 0.0 || p.co2.mean <= 0.0 {
                return err(format!("{class}: co2 and reverberation means must be > 0"));
            }
        }
        if self.unoccupied.reverberation_time.mean == self.occupied.reverberation_time.mean {
            return err("class reverberation means must differ".into());
        }
        if !(0.0..1.0).contains(&self.label_noise_prob) {
            return err(format!(
                "label_noise_prob {} not in [0, 1)",
                self.label_noise_prob
            ));
        }
        if !(0.0..=1.0).contains(&self.occupied_prob) {
            return err(format!(
                "occupied_prob {} not in [0, 1]",
                self.occupied_prob
            ));
        }
        Ok(())
    }
}

const MAX_REDRAWS: usize = 10_000;

fn draw(rng: &mut ChaCha8Rng, g: Gaussian, name: &str, ok: impl Fn(f64) -> bool) -> Result<f64> {
    let normal =
        Normal::new(g.mean, g.std_dev).map_err(|e| DatasetError::Param(format!("{name}: {e}")))?;
    for _ in 0..MAX_REDRAWS {
        let v = normal.sample(rng);
        if ok(v) {
            return Ok(v);
        }
    }
    Err(DatasetError::Param(format!(
        "{name}: distribution N({}, {}) rarely yields physical values",
        g.mean, g.std_dev
    )))
}

/// Draws `days × slots_per_day` labeled samples. Deterministic in `seed`.
pub fn generate_synthetic(
    params: &GeneratorParams,
    days: u32,
    slots_per_day: u32,
) -> Result<Dataset> {
    params.validate()?;
    if days == 0 || slots_per_day == 0 {
        return Err(DatasetError::Param(
            "days and slots_per_day must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut samples = Vec::with_capacity((days * slots_per_day) as usize);
    for day in 0..days {
        for slot in 0..slots_per_day {
            let truth = Occupancy::from(rng.random_bool(params.occupied_prob));
            let class = match truth {
                Occupancy::Occupied => &params.occupied,
                Occupancy::Unoccupied => &params.unoccupied,
            };
            let temperature = draw(&mut rng, class.temperature, "temperature", |v| {
                (TEMPERATURE_RANGE.0..=TEMPERATURE_RANGE.1).contains(&v)
            })?;
            let co2 = draw(&mut rng, class.co2, "co2", |v| v > 0.0)?;
            let reverberation_time = draw(
                &mut rng,
                class.reverberation_time,
                "reverberation_time",
                |v| v > 0.0,
            )?;
            let flip = rng.random::<f64>() < params.label_noise_prob;
            let label = if flip { truth.flipped() } else { truth };
            samples.push(SlotSample::new(
                day,
                slot,
                temperature,
                co2,
                reverberation_time,
                Some(label),
            ));
        }
    }
    Dataset::new(samples)
}

/// Builds a single-material room over the standard hall geometry whose
/// absorption table maps one distinct frequency to each target
/// reverberation time. Returns the room and the frequency for each target.
pub fn calibrated_room(targets: &[f64]) -> Result<(RoomModel, Vec<f64>)> {
    let geometry = RoomGeometry::from_feet(70.0, 30.0, 12.0)?;
    let (v, s) = (geometry.volume(), geometry.boundary_area());
    let mut points = Vec::with_capacity(targets.len().max(1));
    for (i, &t) in targets.iter().enumerate() {
        let alpha = SABINE_CONSTANT * v / (s * t);
        if !(t.is_finite() && alpha > 0.0 && alpha <= 1.0) {
            return Err(DatasetError::Param(format!(
                "reverberation time {t} s is not reachable in a {v:.1} m³ room"
            )));
        }
        points.push((100.0 + 10.0 * i as f64, alpha));
    }
    if points.is_empty() {
        points.push((100.0, 0.5));
    }
    let frequencies = points.iter().map(|p| p.0).take(targets.len()).collect();
    let mut table = AbsorptionTable::new();
    table.insert("calibrated", points)?;
    let room = RoomModel::new(
        geometry,
        vec![Surface::new("boundary", s, "calibrated")?],
        table,
        Lookup::Nearest,
    )?;
    Ok((room, frequencies))
}

/// A generated corpus in raw form plus the windowed dataset it yields.
#[derive(Debug, Clone)]
pub struct SimulatedCorpus {
    pub readings: Vec<SensorReading>,
    pub labels: Labels,
    pub room: RoomModel,
    /// Features recomputed from `readings` through the normal pipeline.
    pub dataset: Dataset,
    /// Samples as drawn by the generator.
    pub generated: Dataset,
    pub start_date: NaiveDate,
}

/// Sensors per kind and readings per sensor in each slot window.
const SENSORS: [(SensorKind, [&str; 2]); 3] = [
    (SensorKind::Co2, ["co2-a", "co2-b"]),
    (SensorKind::Temperature, ["temp-a", "temp-b"]),
    (SensorKind::Frequency, ["freq-a", "freq-b"]),
];
const READINGS_PER_SENSOR: i64 = 3;

/// Default day 0 for simulated corpora (a Monday).
pub fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 8).unwrap()
}

/// Generates a corpus and renders it as raw readings: six sensors (two per
/// kind), three readings each per slot window, so a 7 × 8 corpus has 1008
/// raw values.
pub fn simulate_corpus(
    params: &GeneratorParams,
    days: u32,
    slots_per_day: u32,
    schedule: &Schedule,
) -> Result<SimulatedCorpus> {
    let schedule = Schedule {
        slots_per_day,
        start_date: Some(schedule.start_date.unwrap_or_else(default_start_date)),
        ..schedule.clone()
    };
    schedule.validate()?;
    let start_date = schedule.start_date.unwrap();
    let generated = generate_synthetic(params, days, slots_per_day)?;
    let targets: Vec<f64> = generated
        .samples()
        .iter()
        .map(|s| s.reverberation_time)
        .collect();
    let (room, frequencies) = calibrated_room(&targets)?;

    let window_ms = i64::from(schedule.window_minutes) * 60_000;
    let step = TimeDelta::milliseconds(window_ms / (READINGS_PER_SENSOR + 1));
    let mut readings = Vec::with_capacity(generated.len() * 18);
    let mut labels = Labels::new();
    for (s, &freq) in generated.samples().iter().zip(&frequencies) {
        let id = SlotId::new(s.day_index, s.slot_index);
        labels.insert(id, s.label.expect("generator labels every sample"));
        let start = schedule.slot_start(id, start_date);
        for k in 0..READINGS_PER_SENSOR {
            let at = start + step * k as i32;
            for (kind, sensors) in SENSORS {
                let value = match kind {
                    SensorKind::Co2 => s.co2,
                    SensorKind::Temperature => s.temperature,
                    SensorKind::Frequency => freq,
                };
                for sensor in sensors {
                    readings.push(
                        SensorReading::new(at, sensor, kind, value).map_err(DatasetError::Param)?,
                    );
                }
            }
        }
    }
    let windowed = windowize(&readings, &schedule, &room)?;
    let dataset = label_samples(windowed.samples, Some(&labels))?;
    Ok(SimulatedCorpus {
        readings,
        labels,
        room,
        dataset,
        generated,
        start_date,
    })
}
