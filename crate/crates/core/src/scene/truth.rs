//! Ground-truth kinematics: piecewise-linear waypoint following for every
//! scene object and the platform.

use super::config::ScenarioConfig;
use crate::error::Result;
use crate::types::ObjectClass;
use nalgebra::{Vector2, Vector3};

/// Waypoint-following motion at constant speed. Positions clamp at the
/// final waypoint; the heading holds the last segment bearing.
#[derive(Debug, Clone)]
pub struct PathMotion {
    waypoints: Vec<Vector2<f64>>,
    speed: f64,
    cum_len: Vec<f64>,
    init_bearing: f64,
}

impl PathMotion {
    pub fn new(waypoints: &[[f64; 2]], speed: f64) -> Self {
        let pts: Vec<Vector2<f64>> = waypoints.iter().map(|w| Vector2::new(w[0], w[1])).collect();
        let mut cum = vec![0.0];
        for pair in pts.windows(2) {
            let len = (pair[1] - pair[0]).norm();
            cum.push(cum.last().unwrap() + len);
        }
        let init_bearing = if pts.len() >= 2 {
            let d = pts[1] - pts[0];
            d.y.atan2(d.x)
        } else {
            0.0
        };
        PathMotion {
            waypoints: pts,
            speed,
            cum_len: cum,
            init_bearing,
        }
    }

    /// Exact 2-D state at time `t`: position, velocity, heading.
    pub fn state_at(&self, t: f64) -> (Vector2<f64>, Vector2<f64>, f64) {
        if self.speed == 0.0 || self.waypoints.len() < 2 {
            return (self.waypoints[0], Vector2::zeros(), self.init_bearing);
        }
        let total = *self.cum_len.last().unwrap();
        let s_raw = self.speed * t.max(0.0);
        let s = s_raw.min(total);
        // Segment containing arc length s.
        let mut seg = self.cum_len.partition_point(|&c| c <= s).saturating_sub(1);
        seg = seg.min(self.waypoints.len() - 2);
        let a = self.waypoints[seg];
        let b = self.waypoints[seg + 1];
        let seg_len = self.cum_len[seg + 1] - self.cum_len[seg];
        let dir = if seg_len > 0.0 {
            (b - a) / seg_len
        } else {
            Vector2::zeros()
        };
        let pos = a + dir * (s - self.cum_len[seg]).max(0.0);
        let heading = if dir.norm() > 0.0 {
            dir.y.atan2(dir.x)
        } else {
            self.init_bearing
        };
        let vel = if s_raw >= total {
            Vector2::zeros()
        } else {
            dir * self.speed
        };
        (pos, vel, heading)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TruthSample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub heading: f64,
}

#[derive(Debug, Clone)]
pub struct ObjectTruth {
    pub id: String,
    pub label: ObjectClass,
    pub samples: Vec<TruthSample>,
}

/// True platform pose (yaw only; the platform stays level).
#[derive(Debug, Clone, Copy)]
pub struct PlatformPoseTruth {
    pub t: f64,
    pub position: Vector3<f64>,
    pub yaw: f64,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub objects: Vec<ObjectTruth>,
    pub platform: Vec<PlatformPoseTruth>,
    pub duration: f64,
    pub detection_hz: f64,
    motions: Vec<PathMotion>,
    platform_motion: PathMotion,
    heights: Vec<f64>,
}

impl GroundTruth {
    /// Exact object state at any time: position (center height above
    /// ground), velocity, heading.
    pub fn object_state_at(&self, idx: usize, t: f64) -> (Vector3<f64>, Vector3<f64>, f64) {
        let (p, v, h) = self.motions[idx].state_at(t);
        (
            Vector3::new(p.x, p.y, self.heights[idx]),
            Vector3::new(v.x, v.y, 0.0),
            h,
        )
    }

    /// Exact platform state at any time: position (ground level), yaw, speed.
    pub fn platform_state_at(&self, t: f64) -> (Vector3<f64>, f64, f64) {
        let (p, v, h) = self.platform_motion.state_at(t);
        (Vector3::new(p.x, p.y, 0.0), h, v.norm())
    }

    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }
}

/// Sample every object at the detection rate and the platform at the
/// counts rate.
pub fn generate_truth(config: &ScenarioConfig) -> Result<GroundTruth> {
    config.validate()?;
    let det_dt = 1.0 / config.rates.detection_hz;
    let n_frames = (config.duration_s * config.rates.detection_hz + 1e-9).floor() as usize;
    let motions: Vec<PathMotion> = config
        .objects
        .iter()
        .map(|o| PathMotion::new(&o.waypoints, o.speed_mps))
        .collect();
    let heights: Vec<f64> = config
        .objects
        .iter()
        .map(|o| o.label.nominal_extent().z / 2.0)
        .collect();

    let objects = config
        .objects
        .iter()
        .zip(&motions)
        .zip(&heights)
        .map(|((spec, motion), &h)| {
            let samples = (0..n_frames)
                .map(|k| {
                    let t = k as f64 * det_dt;
                    let (p, v, heading) = motion.state_at(t);
                    TruthSample {
                        t,
                        position: Vector3::new(p.x, p.y, h),
                        velocity: Vector3::new(v.x, v.y, 0.0),
                        heading,
                    }
                })
                .collect();
            ObjectTruth {
                id: spec.id.clone(),
                label: spec.label,
                samples,
            }
        })
        .collect();

    let platform_motion = PathMotion::new(&config.platform.waypoints, config.platform.speed_mps);
    let pose_dt = 1.0 / config.rates.counts_hz;
    let n_pose = (config.duration_s * config.rates.counts_hz + 1e-9).floor() as usize;
    let platform = (0..n_pose)
        .map(|k| {
            let t = k as f64 * pose_dt;
            let (p, _, yaw) = platform_motion.state_at(t);
            PlatformPoseTruth {
                t,
                position: Vector3::new(p.x, p.y, 0.0),
                yaw,
            }
        })
        .collect();

    Ok(GroundTruth {
        objects,
        platform,
        duration: config.duration_s,
        detection_hz: config.rates.detection_hz,
        motions,
        platform_motion,
        heights,
    })
}
