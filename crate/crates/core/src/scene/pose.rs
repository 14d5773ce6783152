//! Platform pose estimates under two self-localization quality models.

use super::config::PoseNoise;
use super::truth::GroundTruth;
use crate::types::PoseMode;
use crate::util::seed_stream;
use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Estimated platform pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub t: f64,
    pub position: Vector3<f64>,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub mode: PoseMode,
}

impl PoseEstimate {
    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw)
    }

    /// Platform-frame point expressed in the world frame.
    pub fn to_world(&self, platform_point: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.rotation() * platform_point
    }

    /// World point expressed in the platform frame.
    pub fn to_platform(&self, world_point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse() * (world_point - self.position)
    }
}

/// Generate the 10 Hz pose stream. SLAM mode adds small zero-mean jitter;
/// INS mode adds a random-walk drift plus jitter whose amplitude scales
/// linearly with platform speed. Deterministic under `seed`.
pub fn synthesize_pose(
    truth: &GroundTruth,
    mode: PoseMode,
    noise: &PoseNoise,
    pose_hz: f64,
    seed: u64,
) -> Vec<PoseEstimate> {
    let mut rng = seed_stream(seed, &format!("pose:{mode}"));
    let dt = 1.0 / pose_hz;
    let n = (truth.duration * pose_hz + 1e-9).floor() as usize;
    let mut drift = Vector3::zeros();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let (pos, yaw, speed) = truth.platform_state_at(t);
        let (position, yaw_est) = match mode {
            PoseMode::Slam => {
                let jitter = gauss3(&mut rng, noise.slam_sigma_m);
                (
                    pos + jitter,
                    yaw + gauss(&mut rng, noise.slam_yaw_sigma_rad),
                )
            }
            PoseMode::Ins => {
                drift += gauss3(&mut rng, noise.ins_drift_rate * dt.sqrt());
                let jitter = gauss3(&mut rng, noise.ins_jitter_s * speed);
                (
                    pos + drift + jitter,
                    yaw + gauss(&mut rng, noise.ins_yaw_sigma_rad),
                )
            }
        };
        out.push(PoseEstimate {
            t,
            position,
            yaw: yaw_est,
            pitch: 0.0,
            roll: 0.0,
            mode,
        });
    }
    out
}

/// Index of the pose sample nearest to time `t`.
pub fn nearest_pose(poses: &[PoseEstimate], t: f64) -> Option<&PoseEstimate> {
    if poses.is_empty() {
        return None;
    }
    let idx = poses.partition_point(|p| p.t <= t);
    let after = poses.get(idx);
    let before = poses.get(idx.wrapping_sub(1));
    match (before, after) {
        (Some(b), Some(a)) => Some(if (t - b.t) <= (a.t - t) { b } else { a }),
        (Some(b), None) => Some(b),
        (None, Some(a)) => Some(a),
        (None, None) => None,
    }
}

fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).unwrap().sample(rng)
}

fn gauss3<R: Rng>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    Vector3::new(gauss(rng, sigma), gauss(rng, sigma), gauss(rng, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::config::{presets, PoseNoise, ScenarioConfig};
    use crate::scene::truth::generate_truth;

    #[test]
    fn zero_jitter_slam_equals_truth() {
        let cfg = presets::by_name("single-carrier").unwrap();
        let truth = generate_truth(&cfg).unwrap();
        let noise = PoseNoise {
            slam_sigma_m: 0.0,
            slam_yaw_sigma_rad: 0.0,
            ..Default::default()
        };
        let poses = synthesize_pose(&truth, PoseMode::Slam, &noise, 10.0, 1);
        for p in &poses {
            let (pos, yaw, _) = truth.platform_state_at(p.t);
            assert!((p.position - pos).norm() < 1e-12);
            assert!((p.yaw - yaw).abs() < 1e-12);
        }
    }

    #[test]
    fn ins_drift_follows_random_walk_law() {
        // RMS drift after T seconds is rate * sqrt(T) per axis.
        let cfg_text = r#"
version = 1
name = "drift"
duration_s = 100.0

[platform]
waypoints = [[0.0, 0.0]]
speed_mps = 0.0

[background]
roi_rate_cps = [50.0, 50.0, 50.0, 50.0, 50.0, 50.0]

[noise.pose]
ins_drift_rate = 0.05
ins_jitter_s = 0.0
ins_yaw_sigma_rad = 0.0
"#;
        let cfg = ScenarioConfig::from_toml(cfg_text, "test").unwrap();
        let truth = generate_truth(&cfg).unwrap();
        let mut sq_sum = 0.0;
        let n_seeds = 1000;
        for seed in 0..n_seeds {
            let poses = synthesize_pose(&truth, PoseMode::Ins, &cfg.noise.pose, 10.0, seed);
            let last = poses.last().unwrap();
            sq_sum += last.position.x.powi(2);
        }
        let rms = (sq_sum / n_seeds as f64).sqrt();
        // Final sample is at t = 99.9 s.
        let expected = 0.05 * 99.9_f64.sqrt();
        assert!(
            (rms - expected).abs() / expected < 0.10,
            "rms={rms} expected={expected}"
        );
    }

    #[test]
    fn ins_jitter_scales_linearly_with_speed() {
        let make = |speed: f64| {
            let text = format!(
                r#"
version = 1
name = "jitter"
duration_s = 400.0

[platform]
waypoints = [[0.0, 0.0], [20000.0, 0.0]]
speed_mps = {speed}

[background]
roi_rate_cps = [50.0, 50.0, 50.0, 50.0, 50.0, 50.0]

[noise.pose]
ins_drift_rate = 0.0
ins_jitter_s = 0.045
ins_yaw_sigma_rad = 0.0
"#
            );
            let cfg = ScenarioConfig::from_toml(&text, "test").unwrap();
            let truth = generate_truth(&cfg).unwrap();
            let poses = synthesize_pose(&truth, PoseMode::Ins, &cfg.noise.pose, 10.0, 77);
            let errs: Vec<f64> = poses
                .iter()
                .map(|p| {
                    let (pos, _, _) = truth.platform_state_at(p.t);
                    p.position.y - pos.y
                })
                .collect();
            let n = errs.len() as f64;
            (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt()
        };
        let s10 = make(4.47);
        let s20 = make(8.94);
        assert!(
            (s20 / s10 - 2.0).abs() < 0.15,
            "ratio {} (s10={s10}, s20={s20})",
            s20 / s10
        );
    }

    #[test]
    fn pose_rate_and_determinism() {
        let cfg = presets::by_name("intersection-10").unwrap();
        let truth = generate_truth(&cfg).unwrap();
        let a = synthesize_pose(&truth, PoseMode::Ins, &cfg.noise.pose, 10.0, 4);
        let b = synthesize_pose(&truth, PoseMode::Ins, &cfg.noise.pose, 10.0, 4);
        assert_eq!(a, b);
        assert_eq!(a.len(), 220);
        for pair in a.windows(2) {
            assert!((pair[1].t - pair[0].t - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_transforms_round_trip() {
        let pose = PoseEstimate {
            t: 0.0,
            position: Vector3::new(3.0, -2.0, 0.0),
            yaw: 0.7,
            pitch: 0.0,
            roll: 0.0,
            mode: PoseMode::Slam,
        };
        let p = Vector3::new(1.0, 2.0, 0.5);
        let back = pose.to_platform(&pose.to_world(&p));
        assert!((back - p).norm() < 1e-12);
    }
}
