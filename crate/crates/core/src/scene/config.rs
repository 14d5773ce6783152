//! Scenario configuration: a versioned, human-readable TOML schema plus
//! semantic validation and the built-in presets.
//!
//! Schema outline (all units SI):
//!
//! ```toml
//! version = 1
//! name = "intersection-10"
//! duration_s = 22.0
//!
//! [rates]            # sample clocks
//! detection_hz = 15.0
//! counts_hz = 20.0
//! count_bin_s = 0.25
//! pose_hz = 10.0
//!
//! [platform]
//! waypoints = [[-42.0, 2.0], [60.0, 2.0]]
//! speed_mps = 4.4704
//! array = "hex6"
//!
//! [[objects]]
//! id = "carrier"
//! label = "car"      # person|car|truck|motorcycle|bus
//! waypoints = [[42.0, -2.0], [-60.0, -2.0]]
//! speed_mps = 4.4704
//!
//! [source]           # omit for a source-free scenario
//! carrier = "carrier"
//! activity_ps = 5.9e7        # photons/s into 4 pi
//! roi = "cs137"
//! offset_behind_m = 1.3      # source offset behind object center
//! placement = "trunk"        # trunk|backpack|center
//! shielding = [{ material = "Pb", thickness_m = 0.02 }]
//!
//! [background]
//! roi_rate_cps = [50.0, 50.0, 50.0, 50.0, 50.0, 50.0]
//! shape = "default"
//!
//! [attenuation]
//! mode = "profile"   # profile | isotropic (shielding only, no slabs)
//!
//! [seeds]
//! master = 1
//! ```
//!
//! `[noise.video]`, `[noise.lidar]` and `[noise.pose]` override the
//! default sensor noise models; see the field docs below.

use crate::error::{Error, Result};
use crate::response::{ShieldingSpec, SourcePlacement};
use crate::types::{ObjectClass, NUM_DETECTORS};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    pub duration_s: f64,
    #[serde(default)]
    pub rates: Rates,
    pub platform: PlatformSpec,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub source: Option<SourceSpec>,
    pub background: BackgroundSpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub attenuation: AttenuationConfig,
    #[serde(default)]
    pub seeds: Seeds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    pub detection_hz: f64,
    pub counts_hz: f64,
    pub count_bin_s: f64,
    pub pose_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates {
            detection_hz: 15.0,
            counts_hz: 20.0,
            count_bin_s: 0.25,
            pose_hz: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformSpec {
    pub waypoints: Vec<[f64; 2]>,
    pub speed_mps: f64,
    #[serde(default = "default_array")]
    pub array: String,
}

fn default_array() -> String {
    "hex6".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    pub label: ObjectClass,
    pub waypoints: Vec<[f64; 2]>,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Object id of the source carrier.
    pub carrier: String,
    /// Photons per second emitted into 4 pi, before shielding.
    pub activity_ps: f64,
    #[serde(default = "default_roi")]
    pub roi: String,
    /// Source offset behind the carrier center along its heading, m.
    #[serde(default = "default_offset")]
    pub offset_behind_m: f64,
    #[serde(default = "default_placement")]
    pub placement: SourcePlacement,
    #[serde(default)]
    pub shielding: Vec<ShieldingSpec>,
}

fn default_roi() -> String {
    "cs137".to_string()
}

fn default_offset() -> f64 {
    1.3
}

fn default_placement() -> SourcePlacement {
    SourcePlacement::Trunk
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    /// Mean background rate within the counting ROI per detector, counts/s.
    pub roi_rate_cps: Vec<f64>,
    #[serde(default = "default_shape")]
    pub shape: String,
}

fn default_shape() -> String {
    "default".to_string()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub video: VideoNoise,
    pub lidar: LidarNoise,
    pub pose: PoseNoise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoNoise {
    pub p_det: f64,
    /// Radial position noise: sigma = radial_frac * range.
    pub radial_frac: f64,
    pub transverse_sigma_m: f64,
    pub vertical_sigma_m: f64,
    pub max_range_m: f64,
}

impl Default for VideoNoise {
    fn default() -> Self {
        VideoNoise {
            p_det: 0.90,
            radial_frac: 0.05,
            transverse_sigma_m: 0.15,
            vertical_sigma_m: 0.10,
            max_range_m: 50.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarNoise {
    pub p_det: f64,
    pub position_sigma_m: f64,
    pub heading_sigma_rad: f64,
    /// Spurious detections per frame (Poisson rate).
    pub false_positive_rate: f64,
    pub max_range_m: f64,
}

impl Default for LidarNoise {
    fn default() -> Self {
        LidarNoise {
            p_det: 0.95,
            position_sigma_m: 0.08,
            heading_sigma_rad: 0.05,
            false_positive_rate: 0.2,
            max_range_m: 50.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseNoise {
    pub slam_sigma_m: f64,
    pub slam_yaw_sigma_rad: f64,
    /// Random-walk drift growth, m per sqrt(second).
    pub ins_drift_rate: f64,
    /// Jitter sigma per unit platform speed: sigma = ins_jitter_s * speed.
    pub ins_jitter_s: f64,
    pub ins_yaw_sigma_rad: f64,
}

impl Default for PoseNoise {
    fn default() -> Self {
        PoseNoise {
            slam_sigma_m: 0.02,
            slam_yaw_sigma_rad: 0.002,
            ins_drift_rate: 0.05,
            ins_jitter_s: 0.08,
            ins_yaw_sigma_rad: 0.005,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttenuationConfig {
    pub mode: AttenuationMode,
}

impl Default for AttenuationConfig {
    fn default() -> Self {
        AttenuationConfig {
            mode: AttenuationMode::Profile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttenuationMode {
    /// Class slab layout plus shielding.
    Profile,
    /// Shielding only, identical at every bearing (matched-model regime).
    Isotropic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub master: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { master: 1 }
    }
}

impl ScenarioConfig {
    /// Parse and validate a scenario from TOML text.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Semantic validation of every invariant the schema cannot express.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Validation(msg));
        if self.version != SCENARIO_FORMAT_VERSION {
            return err(format!(
                "version: expected {SCENARIO_FORMAT_VERSION}, got {}",
                self.version
            ));
        }
        if !(self.duration_s > 0.0) {
            return err(format!("duration must be > 0 (got {})", self.duration_s));
        }
        let r = &self.rates;
        if !(r.detection_hz > 0.0 && r.counts_hz > 0.0 && r.pose_hz > 0.0) {
            return err("rates: all sample rates must be > 0".to_string());
        }
        if !(r.count_bin_s > 0.0) {
            return err(format!("count bin must be > 0 (got {})", r.count_bin_s));
        }
        let per_bin = r.count_bin_s * r.counts_hz;
        if (per_bin - per_bin.round()).abs() > 1e-9 || per_bin.round() < 1.0 {
            return err(format!(
                "count bin ({} s) must be an integer multiple of the counts period ({} s)",
                r.count_bin_s,
                1.0 / r.counts_hz
            ));
        }
        if self.platform.speed_mps < 0.0 {
            return err(format!(
                "platform speed must be >= 0 (got {})",
                self.platform.speed_mps
            ));
        }
        validate_waypoints(
            "platform",
            &self.platform.waypoints,
            self.platform.speed_mps,
        )?;
        let mut ids = std::collections::HashSet::new();
        for obj in &self.objects {
            if obj.speed_mps < 0.0 {
                return err(format!(
                    "object '{}': speed must be >= 0 (got {})",
                    obj.id, obj.speed_mps
                ));
            }
            validate_waypoints(
                &format!("object '{}'", obj.id),
                &obj.waypoints,
                obj.speed_mps,
            )?;
            if !ids.insert(obj.id.as_str()) {
                return err(format!("object id '{}' is not unique", obj.id));
            }
        }
        if let Some(src) = &self.source {
            if !ids.contains(src.carrier.as_str()) {
                return err(format!(
                    "source carrier '{}' does not refer to an existing object",
                    src.carrier
                ));
            }
            if src.activity_ps < 0.0 {
                return err("source activity must be >= 0".to_string());
            }
            for s in &src.shielding {
                s.transmission()?;
            }
        }
        if self.background.roi_rate_cps.len() != NUM_DETECTORS {
            return err(format!(
                "background roi_rate_cps must list {NUM_DETECTORS} detectors (got {})",
                self.background.roi_rate_cps.len()
            ));
        }
        if self.background.roi_rate_cps.iter().any(|&b| b < 0.0) {
            return err("background rates must be >= 0".to_string());
        }
        let n = &self.noise;
        for (name, p) in [("video", n.video.p_det), ("lidar", n.lidar.p_det)] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("noise.{name}.p_det must be in [0, 1] (got {p})"));
            }
        }
        Ok(())
    }

    /// Raw count bins aggregated into one record.
    pub fn bins_per_record(&self) -> usize {
        (self.rates.count_bin_s * self.rates.counts_hz).round() as usize
    }

    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }
}

fn validate_waypoints(who: &str, waypoints: &[[f64; 2]], speed: f64) -> Result<()> {
    if waypoints.is_empty() {
        return Err(Error::Validation(format!("{who}: needs >= 1 waypoint")));
    }
    if speed > 0.0 && waypoints.len() < 2 {
        return Err(Error::Validation(format!(
            "{who}: a moving path needs >= 2 waypoints"
        )));
    }
    Ok(())
}

/// Load a scenario file from disk.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    ScenarioConfig::from_toml(&text, &path.display().to_string())
}

/// Built-in scenario presets, compiled into the library.
pub mod presets {
    use super::*;

    pub const INTERSECTION_10: &str = include_str!("presets/intersection_10mph.toml");
    pub const INTERSECTION_20: &str = include_str!("presets/intersection_20mph.toml");
    pub const SINGLE_CARRIER: &str = include_str!("presets/single_carrier.toml");
    pub const SOURCE_FREE: &str = include_str!("presets/source_free.toml");

    pub const NAMES: [&str; 4] = [
        "intersection-10",
        "intersection-20",
        "single-carrier",
        "source-free",
    ];

    pub fn by_name(name: &str) -> Result<ScenarioConfig> {
        let text = match name {
            "intersection-10" => INTERSECTION_10,
            "intersection-20" => INTERSECTION_20,
            "single-carrier" => SINGLE_CARRIER,
            "source-free" => SOURCE_FREE,
            other => {
                return Err(Error::validation(format!(
                    "unknown preset '{other}' (available: {})",
                    NAMES.join(", ")
                )))
            }
        };
        ScenarioConfig::from_toml(text, &format!("builtin:{name}"))
    }
}
