//! Synthetic object detections emulating the video and lidar front ends.
//!
//! Video boxes carry no heading and their range error grows with range
//! (depth is inferred from nominal object heights); lidar boxes carry a
//! heading, have small isotropic position noise, and produce occasional
//! false positives.

use super::config::{LidarNoise, VideoNoise};
use super::truth::GroundTruth;
use crate::error::{Error, Result};
use crate::types::{ObjectClass, SensorKind};
use crate::util::{seed_stream, wrap_angle};
use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

/// One synthetic detection in the platform frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDetection {
    pub t: f64,
    pub sensor: SensorKind,
    pub label: ObjectClass,
    pub confidence: f64,
    /// Box center, platform frame, m.
    pub center: Vector3<f64>,
    /// Box dimensions (length, width, height), m.
    pub extent: Vector3<f64>,
    /// Yaw in the platform frame; absent for video.
    pub heading: Option<f64>,
    /// Originating truth object, or `None` for a false positive.
    pub truth_id: Option<String>,
}

/// Monocular range from similar triangles: `focal * height / pixels`.
pub fn infer_range(pixel_height: f64, focal_length: f64, nominal_height: f64) -> Result<f64> {
    if pixel_height <= 0.0 || focal_length <= 0.0 || nominal_height <= 0.0 {
        return Err(Error::validation(format!(
            "infer_range requires positive inputs (got px={pixel_height}, f={focal_length}, h={nominal_height})"
        )));
    }
    Ok(focal_length * nominal_height / pixel_height)
}

/// Sensor noise parameters, one variant per sensor.
#[derive(Debug, Clone)]
pub enum SensorNoise {
    Video(VideoNoise),
    Lidar(LidarNoise),
}

impl SensorNoise {
    pub fn kind(&self) -> SensorKind {
        match self {
            SensorNoise::Video(_) => SensorKind::Video,
            SensorNoise::Lidar(_) => SensorKind::Lidar,
        }
    }
}

/// Generate the detection stream for one sensor over the whole scenario.
/// Deterministic for a given `(truth, noise, seed)`.
pub fn synthesize_detections(
    truth: &GroundTruth,
    noise: &SensorNoise,
    seed: u64,
) -> Vec<SyntheticDetection> {
    let mut rng = seed_stream(seed, &format!("detect:{}", noise.kind()));
    let dt = 1.0 / truth.detection_hz;
    let n_frames = (truth.duration * truth.detection_hz + 1e-9).floor() as usize;
    let mut out = Vec::new();

    for k in 0..n_frames {
        let t = k as f64 * dt;
        let (plat_pos, yaw, _) = truth.platform_state_at(t);
        let to_platform = Rotation3::from_axis_angle(&Vector3::z_axis(), -yaw);

        for idx in 0..truth.objects.len() {
            let (pos, _, heading) = truth.object_state_at(idx, t);
            let rel = to_platform * (pos - plat_pos);
            let range = rel.xy().norm();
            let max_range = match noise {
                SensorNoise::Video(v) => v.max_range_m,
                SensorNoise::Lidar(l) => l.max_range_m,
            };
            if range > max_range || range < 1.0 {
                continue;
            }
            let p_det = match noise {
                SensorNoise::Video(v) => v.p_det,
                SensorNoise::Lidar(l) => l.p_det,
            };
            if rng.gen::<f64>() >= p_det {
                continue;
            }
            let label = truth.objects[idx].label;
            let confidence = rng.gen_range(0.7..1.0);
            let det = match noise {
                SensorNoise::Video(v) => {
                    let u_r = Vector3::new(rel.x / range, rel.y / range, 0.0);
                    let u_t = Vector3::new(-u_r.y, u_r.x, 0.0);
                    let radial = gauss(&mut rng, v.radial_frac * range);
                    let transverse = gauss(&mut rng, v.transverse_sigma_m);
                    let vertical = gauss(&mut rng, v.vertical_sigma_m);
                    SyntheticDetection {
                        t,
                        sensor: SensorKind::Video,
                        label,
                        confidence,
                        center: rel + u_r * radial + u_t * transverse + Vector3::z() * vertical,
                        extent: label.nominal_extent(),
                        heading: None,
                        truth_id: Some(truth.objects[idx].id.clone()),
                    }
                }
                SensorNoise::Lidar(l) => {
                    let jitter = Vector3::new(
                        gauss(&mut rng, l.position_sigma_m),
                        gauss(&mut rng, l.position_sigma_m),
                        gauss(&mut rng, l.position_sigma_m),
                    );
                    let h = wrap_angle(heading - yaw + gauss(&mut rng, l.heading_sigma_rad));
                    SyntheticDetection {
                        t,
                        sensor: SensorKind::Lidar,
                        label,
                        confidence,
                        center: rel + jitter,
                        extent: label.nominal_extent(),
                        heading: Some(h),
                        truth_id: Some(truth.objects[idx].id.clone()),
                    }
                }
            };
            out.push(det);
        }

        if let SensorNoise::Lidar(l) = noise {
            if l.false_positive_rate > 0.0 {
                let n_fp = Poisson::new(l.false_positive_rate)
                    .unwrap()
                    .sample(&mut rng) as usize;
                for _ in 0..n_fp {
                    let az = rng.gen_range(0.0..std::f64::consts::TAU);
                    let range = rng.gen_range(2.0..l.max_range_m);
                    let label = if rng.gen::<f64>() < 0.5 {
                        ObjectClass::Car
                    } else {
                        ObjectClass::Person
                    };
                    let z = label.nominal_extent().z / 2.0;
                    out.push(SyntheticDetection {
                        t,
                        sensor: SensorKind::Lidar,
                        label,
                        confidence: rng.gen_range(0.3..0.9),
                        center: Vector3::new(range * az.cos(), range * az.sin(), z),
                        extent: label.nominal_extent(),
                        heading: Some(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)),
                        truth_id: None,
                    });
                }
            }
        }
    }
    out
}

fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).unwrap().sample(rng)
}

/// Group a detection stream into per-frame slices (equal timestamps).
pub fn frames(detections: &[SyntheticDetection]) -> Vec<&[SyntheticDetection]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=detections.len() {
        if i == detections.len() || detections[i].t != detections[start].t {
            out.push(&detections[start..i]);
            start = i;
        }
    }
    out
}
