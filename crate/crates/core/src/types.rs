//! Domain enums and nominal object dimensions shared by all modules.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Object classes reported by the detection front ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Person,
    Car,
    Truck,
    Motorcycle,
    Bus,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 5] = [
        ObjectClass::Person,
        ObjectClass::Car,
        ObjectClass::Truck,
        ObjectClass::Motorcycle,
        ObjectClass::Bus,
    ];

    /// Nominal height used for monocular range inference, meters.
    pub fn nominal_height(self) -> f64 {
        match self {
            ObjectClass::Person => 1.75,
            ObjectClass::Car => 1.43,
            ObjectClass::Truck => 1.80,
            ObjectClass::Motorcycle => 0.80,
            ObjectClass::Bus => 2.5,
        }
    }

    /// Nominal bounding-box extent (length, width, height), meters.
    pub fn nominal_extent(self) -> Vector3<f64> {
        match self {
            ObjectClass::Person => Vector3::new(0.6, 0.6, 1.75),
            ObjectClass::Car => Vector3::new(4.5, 1.8, 1.43),
            ObjectClass::Truck => Vector3::new(6.0, 2.4, 1.80),
            ObjectClass::Motorcycle => Vector3::new(2.2, 0.8, 0.80),
            ObjectClass::Bus => Vector3::new(12.0, 2.5, 2.5),
        }
    }

    pub fn is_vehicle(self) -> bool {
        !matches!(self, ObjectClass::Person)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Person => "person",
            ObjectClass::Car => "car",
            ObjectClass::Truck => "truck",
            ObjectClass::Motorcycle => "motorcycle",
            ObjectClass::Bus => "bus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl std::fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Contextual sensor producing object detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Video,
    Lidar,
}

impl SensorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::Video => "video",
            SensorKind::Lidar => "lidar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "video" => Some(SensorKind::Video),
            "lidar" => Some(SensorKind::Lidar),
            _ => None,
        }
    }
}

impl std::fmt::Display for SensorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Platform self-localization quality model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseMode {
    /// Low-noise map-based localization.
    Slam,
    /// Satellite-aided localization: random-walk drift plus speed-scaled jitter.
    Ins,
}

impl PoseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PoseMode::Slam => "slam",
            PoseMode::Ins => "ins",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "slam" => Some(PoseMode::Slam),
            "ins" => Some(PoseMode::Ins),
            _ => None,
        }
    }
}

impl std::fmt::Display for PoseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of detectors in the platform array.
pub const NUM_DETECTORS: usize = 6;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_round_trip() {
        for c in ObjectClass::ALL {
            assert_eq!(ObjectClass::parse(c.as_str()), Some(c));
        }
        assert_eq!(ObjectClass::parse("bicycle"), None);
    }

    #[test]
    fn nominal_heights_match_extents() {
        for c in ObjectClass::ALL {
            assert_eq!(c.nominal_height(), c.nominal_extent().z);
        }
    }
}
