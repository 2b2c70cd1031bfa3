//! Room acoustics: area-weighted mean absorption and Sabine reverberation time.
//!
//! Everything here is computed in SI units. Room configs may be written in
//! feet; they are converted once on load (lengths × 0.3048, areas × 0.09290304).
//!
//! The reverberation time of a room is
//!
//! ```text
//! T = 0.161 · V / (S · ᾱ)        ᾱ = Σ Aᵢ·αᵢ(f) / Σ Aᵢ
//! ```
//!
//! where `V` is the room volume, `S` its boundary area and `ᾱ` the mean
//! absorption coefficient of the enclosing surfaces at the sensed frequency.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sabine constant in s/m.
pub const SABINE_CONSTANT: f64 = 0.161;
pub const FEET_TO_METERS: f64 = 0.3048;
pub const SQUARE_FEET_TO_SQUARE_METERS: f64 = 0.092_903_04;

#[derive(Debug, Error)]
pub enum AcousticsError {
    #[error("material `{0}` not found in absorption table")]
    MaterialNotFound(String),
    #[error("invalid frequency {0} Hz: must be finite and > 0")]
    InvalidFrequency(f64),
    #[error("no surfaces given")]
    EmptySurfaces,
    #[error("invalid mean absorption {0}: must be > 0")]
    InvalidAbsorption(f64),
    #[error("invalid room geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid surface `{name}`: area {area} must be finite and > 0")]
    InvalidSurface { name: String, area: f64 },
    #[error("invalid absorption table for `{material}`: {reason}")]
    InvalidTable { material: String, reason: String },
    #[error("room config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("room config: {0}")]
    Config(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AcousticsError>;

/// Rectangular room in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomGeometry {
    length: f64,
    width: f64,
    height: f64,
}

impl RoomGeometry {
    pub fn new(length: f64, width: f64, height: f64) -> Result<Self> {
        for (name, v) in [("length", length), ("width", width), ("height", height)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(AcousticsError::InvalidGeometry(format!(
                    "{name} = {v} must be finite and > 0"
                )));
            }
        }
        Ok(Self {
            length,
            width,
            height,
        })
    }

    pub fn from_feet(length: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(
            length * FEET_TO_METERS,
            width * FEET_TO_METERS,
            height * FEET_TO_METERS,
        )
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Volume in m³.
    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    /// Total area of the six enclosing faces in m².
    pub fn boundary_area(&self) -> f64 {
        2.0 * (self.length * self.width + self.length * self.height + self.width * self.height)
    }
}

/// One absorbing surface of the room.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub name: String,
    /// Area in m².
    area: f64,
    pub material: String,
}

impl Surface {
    pub fn new(name: impl Into<String>, area: f64, material: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if !(area.is_finite() && area > 0.0) {
            return Err(AcousticsError::InvalidSurface { name, area });
        }
        Ok(Self {
            name,
            area,
            material: material.into(),
        })
    }

    pub fn area(&self) -> f64 {
        self.area
    }
}

/// How a coefficient is read off a material's frequency table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lookup {
    /// Coefficient of the tabulated point closest in frequency; ties go to
    /// the lower frequency.
    #[default]
    Nearest,
    /// Piecewise-linear between neighbours, clamped to the end points.
    Linear,
}

/// Absorption coefficient vs frequency, per material.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AbsorptionTable {
    materials: BTreeMap<String, Vec<(f64, f64)>>,
}

impl AbsorptionTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds (or replaces) a material. Points are sorted by frequency; a
    /// repeated frequency is rejected.
    pub fn insert(
        &mut self,
        material: impl Into<String>,
        points: impl IntoIterator<Item = (f64, f64)>,
    ) -> Result<()> {
        let material = material.into();
        let bad = |reason: String| AcousticsError::InvalidTable {
            material: material.clone(),
            reason,
        };
        let mut points: Vec<(f64, f64)> = points.into_iter().collect();
        if points.is_empty() {
            return Err(bad("no points".into()));
        }
        for &(f, c) in &points {
            if !(f.is_finite() && f > 0.0) {
                return Err(bad(format!("frequency {f} must be finite and > 0")));
            }
            if !(c.is_finite() && c > 0.0 && c <= 1.0) {
                return Err(bad(format!("coefficient {c} at {f} Hz not in (0, 1]")));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(bad(format!("duplicate frequency {} Hz", w[0].0)));
        }
        self.materials.insert(material, points);
        Ok(())
    }

    pub fn points(&self, material: &str) -> Option<&[(f64, f64)]> {
        self.materials.get(material).map(Vec::as_slice)
    }

    pub fn materials(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }

    /// Coefficient of `material` at `frequency` using nearest-point lookup.
    pub fn absorption_at(&self, material: &str, frequency: f64) -> Result<f64> {
        self.absorption_with(material, frequency, Lookup::Nearest)
    }

    pub fn absorption_with(&self, material: &str, frequency: f64, lookup: Lookup) -> Result<f64> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(AcousticsError::InvalidFrequency(frequency));
        }
        let points = self
            .materials
            .get(material)
            .ok_or_else(|| AcousticsError::MaterialNotFound(material.to_string()))?;
        // first point with f >= frequency
        let idx = points.partition_point(|&(f, _)| f < frequency);
        if idx == 0 {
            return Ok(points[0].1);
        }
        if idx == points.len() {
            return Ok(points[idx - 1].1);
        }
        let (f_lo, c_lo) = points[idx - 1];
        let (f_hi, c_hi) = points[idx];
        Ok(match lookup {
            Lookup::Nearest => {
                if frequency - f_lo <= f_hi - frequency {
                    c_lo
                } else {
                    c_hi
                }
            }
            Lookup::Linear => {
                let t = (frequency - f_lo) / (f_hi - f_lo);
                c_lo + t * (c_hi - c_lo)
            }
        })
    }
}

/// Area-weighted mean absorption coefficient at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanAbsorption {
    pub value: f64,
    pub frequency: f64,
}

pub fn mean_absorption(
    surfaces: &[Surface],
    table: &AbsorptionTable,
    frequency: f64,
) -> Result<MeanAbsorption> {
    mean_absorption_with(surfaces, table, frequency, Lookup::Nearest)
}

pub fn mean_absorption_with(
    surfaces: &[Surface],
    table: &AbsorptionTable,
    frequency: f64,
    lookup: Lookup,
) -> Result<MeanAbsorption> {
    if surfaces.is_empty() {
        return Err(AcousticsError::EmptySurfaces);
    }
    let mut weighted = 0.0;
    let mut total = 0.0;
    for s in surfaces {
        weighted += s.area * table.absorption_with(&s.material, frequency, lookup)?;
        total += s.area;
    }
    Ok(MeanAbsorption {
        value: weighted / total,
        frequency,
    })
}

/// Sabine reverberation time in seconds.
pub fn reverberation_time(geometry: &RoomGeometry, alpha: MeanAbsorption) -> Result<f64> {
    if !(alpha.value.is_finite() && alpha.value > 0.0) {
        return Err(AcousticsError::InvalidAbsorption(alpha.value));
    }
    Ok(SABINE_CONSTANT * geometry.volume() / (geometry.boundary_area() * alpha.value))
}

/// A room ready to turn a sensed frequency into a reverberation time.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomModel {
    pub geometry: RoomGeometry,
    pub surfaces: Vec<Surface>,
    pub table: AbsorptionTable,
    pub lookup: Lookup,
}

impl RoomModel {
    pub fn new(
        geometry: RoomGeometry,
        surfaces: Vec<Surface>,
        table: AbsorptionTable,
        lookup: Lookup,
    ) -> Result<Self> {
        if surfaces.is_empty() {
            return Err(AcousticsError::EmptySurfaces);
        }
        if let Some(s) = surfaces
            .iter()
            .find(|s| table.points(&s.material).is_none())
        {
            return Err(AcousticsError::MaterialNotFound(s.material.clone()));
        }
        Ok(Self {
            geometry,
            surfaces,
            table,
            lookup,
        })
    }

    /// Reverberation time (s) at the given dominant frequency (Hz).
    pub fn reverberation(&self, frequency: f64) -> Result<f64> {
        let alpha = mean_absorption_with(&self.surfaces, &self.table, frequency, self.lookup)?;
        reverberation_time(&self.geometry, alpha)
    }

    /// The 70 × 30 × 12 ft conference hall with brick walls, concrete
    /// ceiling and carpeted floor, using the measured coefficient table.
    pub fn default_hall() -> Self {
        RoomConfig::default_hall()
            .into_model()
            .expect("built-in room config is valid")
    }

    pub fn from_config_str(s: &str) -> Result<Self> {
        let cfg: RoomConfig = serde_json::from_str(s)?;
        cfg.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| AcousticsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_config_str(&text)
    }

    /// Config document describing this room in meters.
    pub fn to_config(&self) -> RoomConfig {
        RoomConfig {
            unit: Unit::Meters,
            length: self.geometry.length,
            width: self.geometry.width,
            height: self.geometry.height,
            surfaces: self
                .surfaces
                .iter()
                .map(|s| SurfaceConfig {
                    name: s.name.clone(),
                    area: s.area,
                    material: s.material.clone(),
                })
                .collect(),
            materials: self
                .table
                .materials
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|&(f, c)| [f, c]).collect()))
                .collect(),
            lookup: self.lookup,
        }
    }
}

/// Same as [`RoomModel::reverberation`]; the single entry point used by the
/// feature pipeline.
pub fn room_reverberation(room: &RoomModel, frequency: f64) -> Result<f64> {
    room.reverberation(frequency)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Feet,
    #[default]
    Meters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub name: String,
    pub area: f64,
    pub material: String,
}

/// On-disk room description (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    #[serde(default)]
    pub unit: Unit,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub surfaces: Vec<SurfaceConfig>,
    pub materials: BTreeMap<String, Vec<[f64; 2]>>,
    #[serde(default)]
    pub lookup: Lookup,
}

/// Frequency (Hz) and coefficients for brick, concrete and carpet.
const HALL_TABLE: [(f64, f64, f64, f64); 10] = [
    (3087.0, 0.020448859, 0.05, 0.612724866),
    (2922.0, 0.020448859, 0.05, 0.612724866),
    (3029.0, 0.029637413, 0.05, 0.623),
    (235.0, 0.047578626, 0.02, 0.480870573),
    (1243.0, 0.03, 0.047578626, 0.612724866),
    (2750.0, 0.028228353, 0.05, 0.608789159),
    (2017.0, 0.028228353, 0.05, 0.612),
    (562.0, 0.030277425, 0.024392294, 0.5),
    (1003.0, 0.03, 0.042393423, 0.531691993),
    (2409.0, 0.023168347, 0.05, 0.612724866),
];

impl RoomConfig {
    pub fn default_hall() -> Self {
        let (l, w, h) = (70.0, 30.0, 12.0);
        let column = |pick: fn(&(f64, f64, f64, f64)) -> f64| {
            HALL_TABLE
                .iter()
                .map(|row| [row.0, pick(row)])
                .collect::<Vec<_>>()
        };
        let mut materials = BTreeMap::new();
        materials.insert("brick".to_string(), column(|r| r.1));
        materials.insert("concrete".to_string(), column(|r| r.2));
        materials.insert("carpet".to_string(), column(|r| r.3));
        let surface = |name: &str, area: f64, material: &str| SurfaceConfig {
            name: name.into(),
            area,
            material: material.into(),
        };
        RoomConfig {
            unit: Unit::Feet,
            length: l,
            width: w,
            height: h,
            surfaces: vec![
                surface("floor", l * w, "carpet"),
                surface("ceiling", l * w, "concrete"),
                surface("wall_north", l * h, "brick"),
                surface("wall_south", l * h, "brick"),
                surface("wall_east", w * h, "brick"),
                surface("wall_west", w * h, "brick"),
            ],
            materials,
            lookup: Lookup::Nearest,
        }
    }

    pub fn into_model(self) -> Result<RoomModel> {
        let (len_scale, area_scale) = match self.unit {
            Unit::Feet => (FEET_TO_METERS, SQUARE_FEET_TO_SQUARE_METERS),
            Unit::Meters => (1.0, 1.0),
        };
        let geometry = RoomGeometry::new(
            self.length * len_scale,
            self.width * len_scale,
            self.height * len_scale,
        )?;
        let surfaces = self
            .surfaces
            .into_iter()
            .map(|s| Surface::new(s.name, s.area * area_scale, s.material))
            .collect::<Result<Vec<_>>>()?;
        let mut table = AbsorptionTable::new();
        for (name, points) in self.materials {
            table.insert(name, points.into_iter().map(|[f, c]| (f, c)))?;
        }
        RoomModel::new(geometry, surfaces, table, self.lookup)
    }
}
