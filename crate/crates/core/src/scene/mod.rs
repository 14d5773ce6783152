//! Scenario simulation: ground-truth kinematics, synthetic detections,
//! pose estimates, and Poisson gamma-ray counts.
//!
//! All generators are pure functions of `(inputs, seed)`; identical inputs
//! produce bit-identical streams, and independent scenarios can run in
//! parallel.

pub mod config;
pub mod counts;
pub mod detect;
pub mod pose;
pub mod truth;

pub use config::{load_scenario, presets, ScenarioConfig};
pub use counts::{
    expected_rate, source_detector_geometry, source_state_at, synthesize_counts, CountRecord,
};
pub use detect::{frames, infer_range, synthesize_detections, SensorNoise, SyntheticDetection};
pub use pose::{nearest_pose, synthesize_pose, PoseEstimate};
pub use truth::{generate_truth, GroundTruth, ObjectTruth, PlatformPoseTruth, TruthSample};
