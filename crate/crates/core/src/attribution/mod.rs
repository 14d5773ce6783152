//! Source-object attribution: build the expected-count model for each
//! candidate track across all detectors, fit (flux, backgrounds) by
//! Poisson maximum likelihood, score fits with deviance p-values and
//! S-values, scan time offsets, and reject tracks via BIC and
//! alarm-overlap rules.

mod fit;

pub use fit::{alpha_standard_error, background_only_fit, bic, fit_mle, model_lambda, MleFit};

/// Poisson deviance of observed counts against model means.
pub use crate::stats::poisson_deviance as deviance;

use crate::anomaly::Roi;
use crate::error::{Error, Result};
use crate::response::{ClassProfiles, DetectorArrayGeometry, ResponseTable};
use crate::scene::{CountRecord, PoseEstimate};
use crate::stats::chi2_sf;
use crate::tracking::Track;
use crate::types::{ObjectClass, NUM_DETECTORS};
use crate::util::wrap_angle;
use nalgebra::{Rotation3, Vector3};
use std::f64::consts::PI;

/// Padding applied around the alarm interval for the analysis span, s.
pub const ANALYSIS_PAD_S: f64 = 3.0;

/// A candidate trajectory as consumed by the attribution analysis; the
/// file-round-trippable subset of a tracker track.
#[derive(Debug, Clone)]
pub struct CandidateTrack {
    pub id: u64,
    pub label: ObjectClass,
    pub points: Vec<CandidatePoint>,
}

#[derive(Debug, Clone, Copy)]
pub struct CandidatePoint {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Position covariance diagonal, m^2.
    pub pos_var: Vector3<f64>,
}

impl CandidateTrack {
    pub fn from_track(track: &Track) -> Self {
        let points = track
            .history
            .iter()
            .map(|p| CandidatePoint {
                t: p.t,
                position: p.position,
                velocity: p.velocity,
                pos_var: p.pos_cov.diagonal(),
            })
            .collect();
        CandidateTrack {
            id: track.id,
            label: track.label,
            points,
        }
    }

    fn bracket(&self, t: f64) -> Option<(usize, usize, f64)> {
        let (first, last) = (self.points.first()?, self.points.last()?);
        if t < first.t - 1e-9 || t > last.t + 1e-9 {
            return None;
        }
        let hi = self
            .points
            .partition_point(|p| p.t <= t)
            .clamp(1, self.points.len() - 1);
        let lo = hi - 1;
        let span = self.points[hi].t - self.points[lo].t;
        let frac = if span > 0.0 {
            ((t - self.points[lo].t) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Some((lo, hi, frac))
    }

    /// Linearly interpolated position; `None` outside the track history.
    pub fn position_at(&self, t: f64) -> Option<Vector3<f64>> {
        let (lo, hi, frac) = self.bracket(t)?;
        Some(self.points[lo].position * (1.0 - frac) + self.points[hi].position * frac)
    }

    pub fn pos_var_at(&self, t: f64) -> Option<Vector3<f64>> {
        let (lo, hi, frac) = self.bracket(t)?;
        Some(self.points[lo].pos_var * (1.0 - frac) + self.points[hi].pos_var * frac)
    }

    /// Heading from the interpolated velocity; `None` when too slow for a
    /// meaningful bearing.
    pub fn heading_at(&self, t: f64) -> Option<f64> {
        let (lo, hi, frac) = self.bracket(t)?;
        let v = self.points[lo].velocity * (1.0 - frac) + self.points[hi].velocity * frac;
        if v.xy().norm() < 0.3 {
            return None;
        }
        Some(v.y.atan2(v.x))
    }

    /// Mean ground speed over the points inside `[start, stop]`.
    pub fn mean_speed(&self, start: f64, stop: f64) -> f64 {
        let mut sum = 0.0;
        let mut n = 0.0;
        for p in &self.points {
            if p.t >= start && p.t <= stop {
                sum += p.velocity.xy().norm();
                n += 1.0;
            }
        }
        if n > 0.0 {
            sum / n
        } else {
            0.0
        }
    }

    /// Fraction of the track history lying outside the alarm interval.
    pub fn fraction_outside(&self, alarm_start: f64, alarm_stop: f64) -> f64 {
        if self.points.is_empty() {
            return 1.0;
        }
        let outside = self
            .points
            .iter()
            .filter(|p| p.t < alarm_start || p.t > alarm_stop)
            .count();
        outside as f64 / self.points.len() as f64
    }
}

/// An alarm interval plus the aligned count data for the padded analysis
/// span across all detectors.
#[derive(Debug, Clone)]
pub struct EncounterWindow {
    pub alarm_start: f64,
    pub alarm_stop: f64,
    pub roi: Roi,
    pub dt: f64,
    /// Raw generator bins aggregated into each analysis bin; the model is
    /// averaged over the same sub-bins the generator used.
    pub sub_bins: usize,
    pub bin_starts: Vec<f64>,
    /// ROI counts per detector per bin.
    pub counts: Vec<Vec<f64>>,
    /// Full spectra per detector per bin.
    pub spectra: Vec<Vec<Vec<u32>>>,
}

impl EncounterWindow {
    /// Slice `records` to the padded span `[start - pad, stop + pad]`,
    /// aligning bins across detectors.
    pub fn from_records(
        records: &[CountRecord],
        alarm_start: f64,
        alarm_stop: f64,
        pad: f64,
        roi: Roi,
        sub_bins: usize,
    ) -> Result<Self> {
        if alarm_stop <= alarm_start {
            return Err(Error::validation("alarm stop must follow alarm start"));
        }
        let lo = alarm_start - pad;
        let hi = alarm_stop + pad;
        let mut bin_starts: Vec<f64> = records
            .iter()
            .filter(|r| r.t0 >= lo - 1e-9 && r.t0 + r.dt <= hi + 1e-9)
            .map(|r| r.t0)
            .collect();
        bin_starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bin_starts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        if bin_starts.is_empty() {
            return Err(Error::validation("no count bins inside the analysis span"));
        }
        let dt = records[0].dt;
        let n_bins = bin_starts.len();
        let mut counts = vec![vec![0.0; n_bins]; NUM_DETECTORS];
        let mut spectra = vec![vec![Vec::new(); n_bins]; NUM_DETECTORS];
        for r in records {
            if r.t0 < lo - 1e-9 || r.t0 + r.dt > hi + 1e-9 {
                continue;
            }
            let i = bin_starts
                .binary_search_by(|b| b.partial_cmp(&r.t0).unwrap())
                .map_err(|_| Error::validation("misaligned count bins across detectors"))?;
            counts[r.detector][i] = r.roi_counts as f64;
            spectra[r.detector][i] = r.spectrum.clone();
        }
        for d in 0..NUM_DETECTORS {
            if spectra[d].iter().any(|s| s.is_empty()) {
                return Err(Error::validation(format!(
                    "detector {d} is missing bins inside the analysis span"
                )));
            }
        }
        Ok(EncounterWindow {
            alarm_start,
            alarm_stop,
            roi,
            dt,
            sub_bins: sub_bins.max(1),
            bin_starts,
            counts,
            spectra,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.bin_starts.len()
    }

    pub fn total_bins(&self) -> usize {
        NUM_DETECTORS * self.n_bins()
    }

    pub fn span(&self) -> (f64, f64) {
        (
            self.bin_starts[0],
            self.bin_starts[self.bin_starts.len() - 1] + self.dt,
        )
    }
}

/// How the attenuation bearing is resolved for a track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadingMode {
    /// Bearing from the track velocity (lidar-grade heading knowledge).
    FromVelocity,
    /// No usable heading: the class-average transmission at every bin.
    Isotropic,
}

/// Per-detector geometric factor series for one candidate track.
#[derive(Debug, Clone)]
pub struct TrackModel {
    pub track_id: u64,
    pub dt: f64,
    /// `g[detector][bin]`: eps * transmission / (4 pi r^2), 1/m^2.
    pub g: Vec<Vec<f64>>,
    /// Transmission factor actually used per (detector, bin).
    pub transmission: Vec<Vec<f64>>,
    /// Whether the track covers each bin.
    pub covered: Vec<bool>,
    /// Modeled source position per covered bin (at the bin center).
    pub positions: Vec<Option<Vector3<f64>>>,
    /// Interpolated position variance diagonal per covered bin.
    pub pos_var: Vec<Option<Vector3<f64>>>,
    /// Platform position and yaw per bin center.
    pub platform: Vec<(Vector3<f64>, f64)>,
}

/// Platform pose interpolated from the estimate stream (linear position,
/// shortest-arc yaw).
pub fn interp_pose(poses: &[PoseEstimate], t: f64) -> Option<(Vector3<f64>, f64)> {
    if poses.is_empty() {
        return None;
    }
    if t <= poses[0].t {
        return Some((poses[0].position, poses[0].yaw));
    }
    if t >= poses[poses.len() - 1].t {
        let p = &poses[poses.len() - 1];
        return Some((p.position, p.yaw));
    }
    let hi = poses.partition_point(|p| p.t <= t).min(poses.len() - 1);
    let lo = hi - 1;
    let span = poses[hi].t - poses[lo].t;
    let frac = if span > 0.0 {
        (t - poses[lo].t) / span
    } else {
        0.0
    };
    let pos = poses[lo].position * (1.0 - frac) + poses[hi].position * frac;
    let dyaw = wrap_angle(poses[hi].yaw - poses[lo].yaw);
    Some((pos, poses[lo].yaw + dyaw * frac))
}

/// The effective-area / attenuation / inverse-square factor for one
/// detector and source position: `eps * transmission / (4 pi r^2)`.
pub fn geometry_factor(
    geometry: &DetectorArrayGeometry,
    response: &ResponseTable,
    detector: usize,
    platform_pos: &Vector3<f64>,
    platform_yaw: f64,
    source_pos: &Vector3<f64>,
    transmission: f64,
) -> f64 {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), platform_yaw);
    let det_world = platform_pos
        + rot * geometry.detectors[detector].offset
        + Vector3::new(0.0, 0.0, geometry.elevation);
    let v = source_pos - det_world;
    let r = v.norm().max(0.5);
    let v_platform = rot.inverse() * v;
    let azimuth = v_platform.y.atan2(v_platform.x);
    let elevation = v_platform.z.atan2(v_platform.xy().norm());
    let eps = response.lookup_eps(detector, azimuth, elevation);
    eps * transmission / (4.0 * PI * r * r)
}

/// Build the expected-count model for `track` over the window, optionally
/// shifting the trajectory in time by `shift` seconds (positive shift
/// models a source trailing the track center). Bins without track
/// coverage carry `g = 0` and stay in the fit as background-only terms.
pub fn model_counts(
    track: &CandidateTrack,
    response: &ResponseTable,
    profiles: &ClassProfiles,
    window: &EncounterWindow,
    poses: &[PoseEstimate],
    geometry: &DetectorArrayGeometry,
    heading_mode: HeadingMode,
    shift: f64,
) -> Result<TrackModel> {
    let profile = profiles.get(track.label);
    let n_bins = window.n_bins();
    let mut g = vec![vec![0.0; n_bins]; NUM_DETECTORS];
    let mut transmission = vec![vec![1.0; n_bins]; NUM_DETECTORS];
    let mut covered = vec![false; n_bins];
    let mut positions = vec![None; n_bins];
    let mut pos_var = vec![None; n_bins];
    let mut platform = Vec::with_capacity(n_bins);
    let sub = window.sub_bins;
    let sub_dt = window.dt / sub as f64;

    for (i, &t0) in window.bin_starts.iter().enumerate() {
        let t_center = t0 + window.dt / 2.0;
        let (plat_c, yaw_c) = interp_pose(poses, t_center)
            .ok_or_else(|| Error::validation("no pose estimates for the analysis span"))?;
        platform.push((plat_c, yaw_c));

        let t_shifted = t_center - shift;
        if let Some(p) = track.position_at(t_shifted) {
            covered[i] = true;
            positions[i] = Some(p);
            pos_var[i] = track.pos_var_at(t_shifted);
            let heading = match heading_mode {
                HeadingMode::FromVelocity => track.heading_at(t_shifted),
                HeadingMode::Isotropic => None,
            };
            // Average the factor over the generator's sub-bins so the
            // model matches the aggregated records without curvature bias.
            // Sub-bins the track does not reach fall back to the covered
            // average rather than dragging the bin toward zero.
            for det in 0..NUM_DETECTORS {
                let mut acc = 0.0;
                let mut trans_acc = 0.0;
                let mut n_sub = 0.0;
                for j in 0..sub {
                    let t_sub = t0 + (j as f64 + 0.5) * sub_dt;
                    let (plat, yaw) = interp_pose(poses, t_sub).unwrap_or((plat_c, yaw_c));
                    let Some(pos) = track.position_at(t_sub - shift) else {
                        continue;
                    };
                    let trans = match heading {
                        Some(h) => {
                            let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
                            let det_world = plat
                                + rot * geometry.detectors[det].offset
                                + Vector3::new(0.0, 0.0, geometry.elevation);
                            let out = det_world - pos;
                            profile.attenuation_at(out.y.atan2(out.x) - h)
                        }
                        None => profile.isotropic_average(),
                    };
                    acc += geometry_factor(geometry, response, det, &plat, yaw, &pos, trans);
                    trans_acc += trans;
                    n_sub += 1.0;
                }
                if n_sub > 0.0 {
                    g[det][i] = acc / n_sub;
                    transmission[det][i] = trans_acc / n_sub;
                }
            }
        }
    }
    Ok(TrackModel {
        track_id: track.id,
        dt: window.dt,
        g,
        transmission,
        covered,
        positions,
        pos_var,
        platform,
    })
}

/// Deviance p-value and S-value (`-log2 p`).
pub fn score(deviance_value: f64, dof: usize) -> Result<(f64, f64)> {
    if dof == 0 {
        return Err(Error::numerical("zero degrees of freedom"));
    }
    if deviance_value.is_infinite() {
        return Ok((0.0, f64::INFINITY));
    }
    let p = chi2_sf(deviance_value, dof as f64)?;
    let s = if p > 0.0 { -p.log2() } else { f64::INFINITY };
    Ok((p, s))
}

/// Full scored fit of one track against one encounter.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub track_id: u64,
    pub label: ObjectClass,
    pub alpha: f64,
    pub alpha_se: f64,
    pub backgrounds: Vec<f64>,
    pub deviance: f64,
    pub dof: usize,
    pub p: f64,
    pub s_value: f64,
    pub bic_source: f64,
    pub bic_background: f64,
    pub background_preferred: bool,
    pub outside_alarm_frac: f64,
    pub offset_s: f64,
    pub offset_m: f64,
    pub degenerate: bool,
}

impl FitResult {
    /// A flagged fit is excluded from the attribution ranking.
    pub fn flagged(&self, outside_gate: f64) -> bool {
        self.background_preferred || self.outside_alarm_frac > outside_gate
    }
}

/// Offset-scan and ranking options.
#[derive(Debug, Clone)]
pub struct AdjudicateOptions {
    /// Half-width of the trajectory time-shift grid, s.
    pub offset_span_s: f64,
    /// Grid step, s.
    pub offset_step_s: f64,
    /// Tracks with more than this fraction of history outside the alarm
    /// are flagged.
    pub outside_frac_gate: f64,
    pub heading_mode: HeadingMode,
}

impl Default for AdjudicateOptions {
    fn default() -> Self {
        AdjudicateOptions {
            offset_span_s: 0.5,
            offset_step_s: 0.1,
            outside_frac_gate: 0.95,
            heading_mode: HeadingMode::FromVelocity,
        }
    }
}

/// Offset grid in seconds: `-span ..= span` in `step` increments.
pub fn offset_grid(span: f64, step: f64) -> Vec<f64> {
    let n = (span / step).round() as i64;
    (-n..=n).map(|k| k as f64 * step).collect()
}

/// Fit a track at every trajectory time shift on the grid and keep the
/// fit with the lowest S-value (first grid index wins ties). Returns the
/// scored result plus the winning model for downstream window analysis.
pub fn offset_scan(
    track: &CandidateTrack,
    window: &EncounterWindow,
    response: &ResponseTable,
    profiles: &ClassProfiles,
    poses: &[PoseEstimate],
    geometry: &DetectorArrayGeometry,
    options: &AdjudicateOptions,
) -> Result<(FitResult, TrackModel, MleFit)> {
    let dof = window
        .total_bins()
        .checked_sub(1 + NUM_DETECTORS)
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::numerical("analysis span too short for the model"))?;

    // At fixed dof the S-ordering equals the deviance ordering, and the
    // deviance does not saturate the way the survival function does far
    // from the chi-square bulk, so the scan minimizes the deviance.
    let mut best: Option<(f64, TrackModel, MleFit, f64)> = None;
    for &delta in &offset_grid(options.offset_span_s, options.offset_step_s) {
        let model = model_counts(
            track,
            response,
            profiles,
            window,
            poses,
            geometry,
            options.heading_mode,
            delta,
        )?;
        let mle = fit_mle(&model, &window.counts);
        let lambda = model_lambda(&model, mle.alpha, &mle.backgrounds);
        let flat_x: Vec<f64> = window.counts.iter().flatten().copied().collect();
        let flat_l: Vec<f64> = lambda.iter().flatten().copied().collect();
        let d = deviance(&flat_x, &flat_l);
        let better = match &best {
            Some((best_d, ..)) => d < *best_d,
            None => true,
        };
        if better {
            best = Some((d, model, mle, delta));
        }
    }
    let (deviance_value, model, mle, delta) = best.expect("non-empty offset grid");
    let (p, s_value) = score(deviance_value, dof)?;

    // Background-only comparison for the BIC rejection rule.
    let (_, ll_bg) = background_only_fit(&window.counts, window.dt);
    let n = window.total_bins();
    let bic_source = bic(mle.loglik, 1 + NUM_DETECTORS, n);
    let bic_background = bic(ll_bg, NUM_DETECTORS, n);

    let speed = track.mean_speed(window.alarm_start, window.alarm_stop);
    let result = FitResult {
        track_id: track.id,
        label: track.label,
        alpha: mle.alpha,
        alpha_se: alpha_standard_error(&model, mle.alpha, &mle.backgrounds),
        backgrounds: mle.backgrounds.clone(),
        deviance: deviance_value,
        dof,
        p,
        s_value,
        bic_source,
        bic_background,
        background_preferred: bic_background <= bic_source,
        outside_alarm_frac: track.fraction_outside(window.alarm_start, window.alarm_stop),
        offset_s: delta,
        offset_m: delta * speed,
        degenerate: mle.degenerate,
    };
    Ok((result, model, mle))
}

/// Ranked adjudication of one encounter.
#[derive(Debug, Clone)]
pub struct EncounterReport {
    pub alarm_start: f64,
    pub alarm_stop: f64,
    /// All candidate fits, ordered by track id.
    pub fits: Vec<FitResult>,
    /// Track id with the lowest S-value among unflagged fits.
    pub attributed: Option<u64>,
}

/// Score every candidate track against the encounter and attribute the
/// alarm to the unflagged track with the lowest S-value. Tracks without
/// history in the analysis span are not candidates.
pub fn adjudicate(
    window: &EncounterWindow,
    tracks: &[CandidateTrack],
    response: &ResponseTable,
    profiles: &ClassProfiles,
    poses: &[PoseEstimate],
    geometry: &DetectorArrayGeometry,
    options: &AdjudicateOptions,
) -> Result<EncounterReport> {
    let (span_lo, span_hi) = window.span();
    let mut fits = Vec::new();
    for track in tracks {
        let in_span = track
            .points
            .iter()
            .any(|p| p.t >= span_lo && p.t <= span_hi);
        if !in_span {
            continue;
        }
        let (fit, _, _) = offset_scan(track, window, response, profiles, poses, geometry, options)?;
        fits.push(fit);
    }
    fits.sort_by_key(|f| f.track_id);
    // dof is identical for every candidate, so ranking by S equals
    // ranking by deviance; the deviance breaks float-saturated S ties.
    let attributed = fits
        .iter()
        .filter(|f| !f.flagged(options.outside_frac_gate))
        .min_by(|a, b| {
            a.s_value
                .partial_cmp(&b.s_value)
                .unwrap()
                .then(a.deviance.partial_cmp(&b.deviance).unwrap())
                .then(a.track_id.cmp(&b.track_id))
        })
        .map(|f| f.track_id);
    Ok(EncounterReport {
        alarm_start: window.alarm_start,
        alarm_stop: window.alarm_stop,
        fits,
        attributed,
    })
}
