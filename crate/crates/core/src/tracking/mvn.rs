//! Multivariate-normal detection representation, the Hellinger distance,
//! and world-frame detection consolidation.

use super::TrackerConfig;
use crate::error::{Error, Result};
use crate::scene::{PoseEstimate, SyntheticDetection};
use crate::types::{ObjectClass, SensorKind};
use crate::util::wrap_angle;
use nalgebra::{Matrix3, Rotation3, Vector3};

/// A detection expressed as a world-frame multivariate normal.
#[derive(Debug, Clone)]
pub struct DetectionMvn {
    pub t: f64,
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub label: ObjectClass,
    pub confidence: f64,
    /// World-frame yaw; absent for video detections.
    pub heading: Option<f64>,
    pub sensor: SensorKind,
    /// Truth bookkeeping carried through for scoring; never used by the
    /// tracker itself.
    pub truth_id: Option<String>,
}

/// Convert a platform-frame detection into a world-frame MVN. The
/// covariance principal axes are the scaled bounding-box dimensions,
/// rotated by the detection heading when one is present; video detections
/// get an extra range-proportional radial variance for the inferred depth.
pub fn to_mvn(
    detection: &SyntheticDetection,
    pose: &PoseEstimate,
    config: &TrackerConfig,
) -> Result<DetectionMvn> {
    if (pose.t - detection.t).abs() > config.frame_period + 1e-9 {
        return Err(Error::validation(format!(
            "stale pose: |{} - {}| exceeds one frame period",
            pose.t, detection.t
        )));
    }
    let mean = pose.to_world(&detection.center);
    let e = detection.extent;
    let range = detection.center.xy().norm();

    let (scale, radial_extra) = match detection.sensor {
        SensorKind::Lidar => (config.lidar_extent_scale, 0.0),
        SensorKind::Video => (
            config.video_extent_scale,
            (config.video_radial_frac * range).powi(2),
        ),
    };
    let mut diag = Vector3::new(
        (scale * e.x).powi(2) + radial_extra,
        (scale * e.y).powi(2),
        (scale * e.z).powi(2),
    );
    // Orientation of the principal axes in the world frame: detection
    // heading when known, otherwise the radial direction (video depth
    // noise acts along the line of sight).
    let axis_yaw = match detection.heading {
        Some(h) => pose.yaw + h,
        None => {
            let w = pose.rotation() * detection.center;
            w.y.atan2(w.x)
        }
    };
    // Keep the covariance comfortably SPD.
    for d in diag.iter_mut() {
        *d = d.max(1e-6);
    }
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), axis_yaw);
    let cov = rot.matrix() * Matrix3::from_diagonal(&diag) * rot.matrix().transpose();

    Ok(DetectionMvn {
        t: detection.t,
        mean,
        cov,
        label: detection.label,
        confidence: detection.confidence,
        heading: detection.heading.map(|h| wrap_angle(pose.yaw + h)),
        sensor: detection.sensor,
        truth_id: detection.truth_id.clone(),
    })
}

/// Hellinger distance between two multivariate normals, in [0, 1].
///
/// `HD^2 = 1 - |Sa|^(1/4) |Sb|^(1/4) / |S|^(1/2) * exp(-1/8 d' S^-1 d)`
/// with `S = (Sa + Sb) / 2` and `d` the mean difference.
pub fn hellinger(
    mean_a: &Vector3<f64>,
    cov_a: &Matrix3<f64>,
    mean_b: &Vector3<f64>,
    cov_b: &Matrix3<f64>,
) -> Result<f64> {
    // Work with log determinants: identical inputs then give ln BC = 0
    // exactly, and the expression is symmetric bit for bit.
    let ln_det_a = cholesky_ln_det(cov_a)?;
    let ln_det_b = cholesky_ln_det(cov_b)?;
    let mixed = (cov_a + cov_b) / 2.0;
    let chol = mixed
        .cholesky()
        .ok_or_else(|| Error::numerical("singular mean covariance in Hellinger distance"))?;
    let ln_det_m = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let d = mean_a - mean_b;
    let quad = d.dot(&chol.solve(&d));
    let ln_bc = 0.25 * (ln_det_a + ln_det_b) - 0.5 * ln_det_m - 0.125 * quad;
    let bc = ln_bc.exp().clamp(0.0, 1.0);
    Ok((1.0 - bc).max(0.0).sqrt())
}

fn cholesky_ln_det(cov: &Matrix3<f64>) -> Result<f64> {
    cov.cholesky()
        .map(|c| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
        .ok_or_else(|| Error::numerical("covariance is not positive definite"))
}

/// Greedily merge same-frame detections whose Hellinger distance falls
/// below `gate`: closest pair first, confidence-weighted mean, covariance
/// of the more confident member. No remaining pair is below the gate.
pub fn consolidate(mut detections: Vec<DetectionMvn>, gate: f64) -> Vec<DetectionMvn> {
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..detections.len() {
            for j in (i + 1)..detections.len() {
                let hd = match hellinger(
                    &detections[i].mean,
                    &detections[i].cov,
                    &detections[j].mean,
                    &detections[j].cov,
                ) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                if hd < gate && best.map_or(true, |(_, _, b)| hd < b) {
                    best = Some((i, j, hd));
                }
            }
        }
        let Some((i, j, _)) = best else {
            return detections;
        };
        let (keep, drop) = if detections[j].confidence > detections[i].confidence {
            (j, i)
        } else {
            (i, j)
        };
        let wa = detections[keep].confidence;
        let wb = detections[drop].confidence;
        let mean = (detections[keep].mean * wa + detections[drop].mean * wb) / (wa + wb);
        let mut merged = detections[keep].clone();
        merged.mean = mean;
        merged.heading = detections[keep].heading.or(detections[drop].heading);
        merged.confidence = wa.max(wb);
        let (first, second) = (keep.min(drop), keep.max(drop));
        detections.remove(second);
        detections.remove(first);
        detections.push(merged);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PoseMode;
    use rand::Rng;

    fn identity_pose(t: f64) -> PoseEstimate {
        PoseEstimate {
            t,
            position: Vector3::zeros(),
            yaw: 0.0,
            pitch: 0.0,
            roll: 0.0,
            mode: PoseMode::Slam,
        }
    }

    fn lidar_detection(center: Vector3<f64>, heading: f64) -> SyntheticDetection {
        SyntheticDetection {
            t: 0.0,
            sensor: SensorKind::Lidar,
            label: ObjectClass::Car,
            confidence: 0.9,
            center,
            extent: Vector3::new(2.0, 4.0, 1.5),
            heading: Some(heading),
            truth_id: None,
        }
    }

    #[test]
    fn to_mvn_scaled_extent_diagonal() {
        let det = lidar_detection(Vector3::new(10.0, 0.0, 0.7), 0.0);
        let mvn = to_mvn(&det, &identity_pose(0.0), &TrackerConfig::default()).unwrap();
        assert!((mvn.cov[(0, 0)] - 0.25).abs() < 1e-9);
        assert!((mvn.cov[(1, 1)] - 1.0).abs() < 1e-9);
        assert!((mvn.cov[(2, 2)] - 0.140625).abs() < 1e-9);
        assert!((mvn.mean - det.center).norm() < 1e-12);
    }

    #[test]
    fn to_mvn_heading_rotation_swaps_axes() {
        let det = lidar_detection(Vector3::new(10.0, 0.0, 0.7), std::f64::consts::FRAC_PI_2);
        let mvn = to_mvn(&det, &identity_pose(0.0), &TrackerConfig::default()).unwrap();
        assert!((mvn.cov[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((mvn.cov[(1, 1)] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn to_mvn_rejects_stale_pose() {
        let det = lidar_detection(Vector3::new(10.0, 0.0, 0.7), 0.0);
        assert!(to_mvn(&det, &identity_pose(5.0), &TrackerConfig::default()).is_err());
    }

    #[test]
    fn video_radial_term_grows_with_range() {
        let mut det = lidar_detection(Vector3::new(20.0, 0.0, 0.7), 0.0);
        det.sensor = SensorKind::Video;
        det.heading = None;
        let cfg = TrackerConfig::default();
        let mvn = to_mvn(&det, &identity_pose(0.0), &cfg).unwrap();
        let expected =
            (cfg.video_extent_scale * 2.0).powi(2) + (cfg.video_radial_frac * 20.0).powi(2);
        assert!((mvn.cov[(0, 0)] - expected).abs() < 1e-9);
    }

    #[test]
    fn hellinger_identity_and_symmetry() {
        let m = Vector3::new(1.0, 2.0, 3.0);
        let c = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 0.5));
        assert!(hellinger(&m, &c, &m, &c).unwrap() < 1e-12);
        let m2 = Vector3::new(2.0, 1.0, 3.5);
        let c2 = Matrix3::from_diagonal(&Vector3::new(0.7, 1.1, 2.0));
        let ab = hellinger(&m, &c, &m2, &c2).unwrap();
        let ba = hellinger(&m2, &c2, &m, &c).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn hellinger_univariate_closed_form() {
        // Reduce to 1-D by using equal unit variances on y, z and means
        // differing only in x: HD = sqrt(1 - exp(-1/8)).
        let c = Matrix3::identity();
        let hd = hellinger(&Vector3::zeros(), &c, &Vector3::new(1.0, 0.0, 0.0), &c).unwrap();
        let expected = (1.0 - (-0.125_f64).exp()).sqrt();
        assert!((hd - expected).abs() < 1e-12);
        assert!((hd - 0.34277).abs() < 1e-4);
    }

    #[test]
    fn hellinger_saturates_for_distant_means() {
        let c = Matrix3::identity();
        let hd = hellinger(&Vector3::zeros(), &c, &Vector3::new(1e6, 0.0, 0.0), &c).unwrap();
        assert!((hd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hellinger_random_spd_properties() {
        let mut rng = crate::util::seed_stream(13, "hellinger-prop");
        for _ in 0..10_000 {
            let (ma, ca) = random_mvn(&mut rng);
            let (mb, cb) = random_mvn(&mut rng);
            let ab = hellinger(&ma, &ca, &mb, &cb).unwrap();
            let ba = hellinger(&mb, &cb, &ma, &ca).unwrap();
            assert!((0.0..=1.0).contains(&ab));
            assert!((ab - ba).abs() < 1e-12);
            assert!(hellinger(&ma, &ca, &ma, &ca).unwrap() < 1e-12);
        }
    }

    fn random_mvn<R: Rng>(rng: &mut R) -> (Vector3<f64>, Matrix3<f64>) {
        let m = Vector3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        // Random SPD: A A' + eps I.
        let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let c = a * a.transpose() + Matrix3::identity() * 0.05;
        (m, c)
    }

    #[test]
    fn consolidate_merges_duplicates() {
        let det = lidar_detection(Vector3::new(5.0, 0.0, 0.7), 0.0);
        let pose = identity_pose(0.0);
        let cfg = TrackerConfig::default();
        let a = to_mvn(&det, &pose, &cfg).unwrap();
        let b = a.clone();
        let out = consolidate(vec![a, b], cfg.consolidation_gate);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn consolidate_keeps_distant_detections() {
        let pose = identity_pose(0.0);
        let cfg = TrackerConfig::default();
        let a = to_mvn(
            &lidar_detection(Vector3::new(5.0, 0.0, 0.7), 0.0),
            &pose,
            &cfg,
        )
        .unwrap();
        let b = to_mvn(
            &lidar_detection(Vector3::new(55.0, 0.0, 0.7), 0.0),
            &pose,
            &cfg,
        )
        .unwrap();
        let out = consolidate(vec![a, b], cfg.consolidation_gate);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn consolidate_transitive_merge() {
        let pose = identity_pose(0.0);
        let cfg = TrackerConfig::default();
        let mk = |x: f64| {
            to_mvn(
                &lidar_detection(Vector3::new(x, 0.0, 0.7), 0.0),
                &pose,
                &cfg,
            )
            .unwrap()
        };
        // Three mutually close detections collapse to one.
        let out = consolidate(vec![mk(5.0), mk(5.1), mk(5.2)], cfg.consolidation_gate);
        assert_eq!(out.len(), 1);
    }
}
