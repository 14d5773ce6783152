//! Poisson count generation across the detector array.
//!
//! Counts are produced at the raw packet rate (20 Hz) and then aggregated
//! into analysis bins (0.25 s). For every raw bin the source term follows
//! the expected-count model: effective area toward the true source
//! position, object/shielding transmission, inverse square distance.
//! Spectra carry the source photopeak on top of the configured background
//! shape.

use super::config::{AttenuationMode, ScenarioConfig};
use super::truth::GroundTruth;
use crate::error::{Error, Result};
use crate::response::{AttenuationProfile, DetectorArrayGeometry, ResponseTable};
use crate::spectrum;
use crate::util::seed_stream;
use nalgebra::{Rotation3, Vector3};
use rand_distr::{Distribution, Poisson};
use std::f64::consts::PI;

/// Per-detector, time-binned ROI counts plus the coarse spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub detector: usize,
    pub t0: f64,
    pub dt: f64,
    pub roi_counts: u64,
    pub spectrum: Vec<u32>,
}

/// Source-term count rate of the expected-count model (background excluded):
/// `activity * eps * transmission / (4 pi r^2)`, counts/s.
pub fn expected_rate(eps: f64, activity: f64, transmission: f64, r: f64) -> f64 {
    activity * eps * transmission / (4.0 * PI * r * r)
}

/// Geometry of one detector relative to a source position.
#[derive(Debug, Clone, Copy)]
pub struct SourceGeometry {
    /// Source-detector distance, m.
    pub r: f64,
    /// Azimuth of the source as seen from the detector, platform frame, rad.
    pub azimuth: f64,
    /// Elevation of the source as seen from the detector, rad.
    pub elevation: f64,
    /// Bearing from the source toward the detector in the source object's
    /// heading frame, rad. Drives the attenuation lookup.
    pub bearing_from_source: f64,
}

/// Compute the source/detector geometry for one detector of the array.
pub fn source_detector_geometry(
    geometry: &DetectorArrayGeometry,
    detector: usize,
    platform_position: &Vector3<f64>,
    platform_yaw: f64,
    source_position: &Vector3<f64>,
    source_heading: f64,
) -> SourceGeometry {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), platform_yaw);
    let det_world = platform_position
        + rot * geometry.detectors[detector].offset
        + Vector3::new(0.0, 0.0, geometry.elevation);
    let v = source_position - det_world;
    let r = v.norm();
    let v_platform = rot.inverse() * v;
    let azimuth = v_platform.y.atan2(v_platform.x);
    let elevation = v_platform.z.atan2(v_platform.xy().norm());
    let out = det_world - source_position;
    let bearing_from_source = out.y.atan2(out.x) - source_heading;
    SourceGeometry {
        r,
        azimuth,
        elevation,
        bearing_from_source,
    }
}

/// True source position and heading at time `t`: carrier center displaced
/// `offset_behind_m` against the carrier heading.
pub fn source_state_at(
    truth: &GroundTruth,
    carrier_idx: usize,
    offset_behind_m: f64,
    t: f64,
) -> (Vector3<f64>, f64) {
    let (pos, _, heading) = truth.object_state_at(carrier_idx, t);
    let back = Vector3::new(heading.cos(), heading.sin(), 0.0) * offset_behind_m;
    (pos - back, heading)
}

/// Generate the aggregated count records for a scenario. Deterministic
/// under `seed`.
pub fn synthesize_counts(
    truth: &GroundTruth,
    response: &ResponseTable,
    attenuation: Option<&AttenuationProfile>,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<Vec<CountRecord>> {
    let geometry = DetectorArrayGeometry::by_name(&config.platform.array)?;
    let n_det = geometry.detectors.len();
    let raw_dt = 1.0 / config.rates.counts_hz;
    let agg = config.bins_per_record();
    let n_raw = (config.duration_s * config.rates.counts_hz + 1e-9).floor() as usize;
    let n_bins = n_raw / agg;

    let roi = crate::anomaly::Roi::by_name(
        config
            .source
            .as_ref()
            .map(|s| s.roi.as_str())
            .unwrap_or("cs137"),
    )?;
    let shape = spectrum::background_shape();
    let peak = spectrum::photopeak_weights(roi.ch_lo, roi.ch_hi);
    let f_roi: f64 = shape[roi.ch_lo..roi.ch_hi].iter().sum();

    let source = config.source.as_ref().filter(|s| s.activity_ps > 0.0);
    let carrier_idx = match source {
        Some(s) => Some(truth.object_index(&s.carrier).ok_or_else(|| {
            Error::validation(format!("carrier '{}' missing from truth", s.carrier))
        })?),
        None => None,
    };
    let isotropic = config.attenuation.mode == AttenuationMode::Isotropic;

    let mut rng = seed_stream(seed, "counts");
    let mut records: Vec<CountRecord> = Vec::with_capacity(n_bins * n_det);
    let mut lambda = vec![0.0_f64; spectrum::CHANNELS];

    for bin in 0..n_bins {
        let t0 = bin as f64 * agg as f64 * raw_dt;
        let mut spectra = vec![vec![0u32; spectrum::CHANNELS]; n_det];
        for j in 0..agg {
            let t_c = t0 + (j as f64 + 0.5) * raw_dt;
            let (plat_pos, plat_yaw, _) = truth.platform_state_at(t_c);
            let src = carrier_idx.map(|idx| {
                let s = source.unwrap();
                let (pos, heading) = source_state_at(truth, idx, s.offset_behind_m, t_c);
                (pos, heading, s.activity_ps)
            });
            for det in 0..n_det {
                let src_rate = match (&src, attenuation) {
                    (Some((pos, heading, activity)), Some(profile)) => {
                        let g = source_detector_geometry(
                            &geometry, det, &plat_pos, plat_yaw, pos, *heading,
                        );
                        let eps = response.lookup_eps(det, g.azimuth, g.elevation);
                        let trans = if isotropic {
                            profile.isotropic_average()
                        } else {
                            profile.attenuation_at(g.bearing_from_source)
                        };
                        expected_rate(eps, *activity, trans, g.r)
                    }
                    (Some(_), None) => {
                        return Err(Error::validation(
                            "scenario has a source but no attenuation profile was supplied",
                        ))
                    }
                    (None, _) => 0.0,
                };
                let bg_rate = config.background.roi_rate_cps[det] / f_roi;
                for c in 0..spectrum::CHANNELS {
                    lambda[c] = (src_rate * peak[c] + bg_rate * shape[c]) * raw_dt;
                }
                let spec = &mut spectra[det];
                for c in 0..spectrum::CHANNELS {
                    if lambda[c] > 0.0 {
                        spec[c] += Poisson::new(lambda[c]).unwrap().sample(&mut rng) as u32;
                    }
                }
            }
        }
        for (det, spec) in spectra.into_iter().enumerate() {
            let roi_counts = spec[roi.ch_lo..roi.ch_hi].iter().map(|&c| c as u64).sum();
            records.push(CountRecord {
                detector: det,
                t0,
                dt: agg as f64 * raw_dt,
                roi_counts,
                spectrum: spec,
            });
        }
    }
    Ok(records)
}
