//! Kalman multi-object tracking in a world-fixed frame: MVN detections,
//! Hellinger-distance association via linear assignment, label-adaptive
//! process noise, and detection consolidation.

mod mvn;

pub use mvn::{consolidate, hellinger, to_mvn, DetectionMvn};

use crate::error::{Error, Result};
use crate::scene::{PoseEstimate, SyntheticDetection};
use crate::types::ObjectClass;
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use pathfinding::matrix::Matrix as CostMatrix;
use pathfinding::prelude::kuhn_munkres_min;
use std::collections::BTreeMap;

pub type Vector6 = SVector<f64, 6>;
pub type Matrix6 = SMatrix<f64, 6, 6>;

/// Tracker tuning. Gates are Hellinger distances in (0, 1); process noise
/// adapts to the object label.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub association_gate: f64,
    pub consolidation_gate: f64,
    /// Velocity process variance for vehicles, m^2/s^2 per second.
    pub vehicle_vel_var: f64,
    /// Velocity process variance for pedestrians, m^2/s^2 per second.
    pub pedestrian_vel_var: f64,
    pub lidar_extent_scale: f64,
    pub video_extent_scale: f64,
    /// Extra radial standard deviation per meter of range for video.
    pub video_radial_frac: f64,
    /// Consecutive hits before a track is confirmed.
    pub confirm_hits: u32,
    /// Consecutive misses before a track is deleted.
    pub max_misses: u32,
    /// Detection frame period, s; poses older than this are stale.
    pub frame_period: f64,
    pub init_vel_var_vehicle: f64,
    pub init_vel_var_pedestrian: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            association_gate: 0.8,
            consolidation_gate: 0.6,
            vehicle_vel_var: 4.44,
            pedestrian_vel_var: 0.28,
            lidar_extent_scale: 0.25,
            video_extent_scale: 0.25,
            video_radial_frac: 0.05,
            confirm_hits: 2,
            max_misses: 8,
            frame_period: 1.0 / 15.0,
            init_vel_var_vehicle: 25.0,
            init_vel_var_pedestrian: 4.0,
        }
    }
}

impl TrackerConfig {
    pub fn velocity_variance(&self, label: ObjectClass) -> f64 {
        if label.is_vehicle() {
            self.vehicle_vel_var
        } else {
            self.pedestrian_vel_var
        }
    }

    fn init_velocity_variance(&self, label: ObjectClass) -> f64 {
        if label.is_vehicle() {
            self.init_vel_var_vehicle
        } else {
            self.init_vel_var_pedestrian
        }
    }
}

/// One stored history sample of a track.
#[derive(Debug, Clone)]
pub struct TrackPoint {
    pub t: f64,
    pub position: Vector3<f64>,
    /// Filtered velocity at this step.
    pub velocity: Vector3<f64>,
    pub pos_cov: Matrix3<f64>,
    /// Velocity covariance diagonal at this step.
    pub vel_var: Vector3<f64>,
    pub heading: Option<f64>,
    /// Accumulated detection count at this step.
    pub hits: u32,
}

/// A tracked object: position/velocity state with covariance plus
/// lifecycle bookkeeping.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub label: ObjectClass,
    /// State mean (x, y, z, vx, vy, vz).
    pub mean: Vector6,
    pub cov: Matrix6,
    pub history: Vec<TrackPoint>,
    pub hits: u32,
    pub misses: u32,
    pub consecutive_hits: u32,
    pub confirmed: bool,
    pub last_heading: Option<f64>,
    /// Count of SPD repairs applied to the covariance.
    pub spd_repairs: u32,
    /// Votes from associated detections' truth ids (diagnostics only).
    pub truth_votes: BTreeMap<String, u32>,
}

impl Track {
    fn new(id: u64, det: &DetectionMvn, config: &TrackerConfig) -> Self {
        let mut mean = Vector6::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&det.mean);
        let mut cov = Matrix6::zeros();
        cov.fixed_view_mut::<3, 3>(0, 0).copy_from(&det.cov);
        let vv = config.init_velocity_variance(det.label);
        for i in 3..6 {
            cov[(i, i)] = vv;
        }
        let mut truth_votes = BTreeMap::new();
        if let Some(id) = &det.truth_id {
            truth_votes.insert(id.clone(), 1);
        }
        Track {
            id,
            label: det.label,
            mean,
            cov,
            history: Vec::new(),
            hits: 1,
            misses: 0,
            consecutive_hits: 1,
            confirmed: false,
            last_heading: det.heading,
            spd_repairs: 0,
            truth_votes,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(3).into()
    }

    pub fn position_cov(&self) -> Matrix3<f64> {
        self.cov.fixed_view::<3, 3>(0, 0).into()
    }

    /// Truth object most often associated with this track, if any.
    pub fn dominant_truth(&self) -> Option<(&str, u32)> {
        self.truth_votes
            .iter()
            .max_by_key(|(_, &v)| v)
            .map(|(k, &v)| (k.as_str(), v))
    }
}

/// Constant-velocity prediction over `dt`: the velocity covariance block
/// grows by the label-specific process variance times `dt`.
pub fn predict(track: &Track, dt: f64, config: &TrackerConfig) -> Track {
    let mut out = track.clone();
    if dt <= 0.0 {
        return out;
    }
    let mut f = Matrix6::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    let q_vel = config.velocity_variance(track.label) * dt;
    let mut q = Matrix6::zeros();
    for i in 3..6 {
        q[(i, i)] = q_vel;
    }
    out.mean = f * track.mean;
    out.cov = f * track.cov * f.transpose() + q;
    out.cov = symmetrized(&out.cov);
    out
}

/// Kalman measurement update on the position block. A numerically
/// non-SPD posterior is repaired by symmetrization plus an eigenvalue
/// floor; repairs are counted on the track.
pub fn update(track: &Track, detection: &DetectionMvn) -> Track {
    let mut out = track.clone();
    let p_pos: Matrix3<f64> = track.cov.fixed_view::<3, 3>(0, 0).into();
    let s = p_pos + detection.cov;
    let Some(chol) = s.cholesky() else {
        // Degenerate innovation covariance: skip the update, flag it.
        out.spd_repairs += 1;
        return out;
    };
    let ph: SMatrix<f64, 6, 3> = track.cov.fixed_view::<6, 3>(0, 0).into();
    let gain = ph * chol.inverse();
    let innovation = detection.mean - track.position();
    out.mean = track.mean + gain * innovation;
    // Joseph-free form, then symmetrize.
    let mut h = SMatrix::<f64, 3, 6>::zeros();
    for i in 0..3 {
        h[(i, i)] = 1.0;
    }
    out.cov = symmetrized(&((Matrix6::identity() - gain * h) * track.cov));
    if out.cov.cholesky().is_none() {
        out.cov = eigen_floor(&out.cov);
        out.spd_repairs += 1;
    }
    out.hits += 1;
    out.consecutive_hits += 1;
    out.misses = 0;
    if detection.heading.is_some() {
        out.last_heading = detection.heading;
    }
    if let Some(id) = &detection.truth_id {
        *out.truth_votes.entry(id.clone()).or_insert(0) += 1;
    }
    out
}

fn symmetrized(m: &Matrix6) -> Matrix6 {
    (m + m.transpose()) / 2.0
}

fn eigen_floor(m: &Matrix6) -> Matrix6 {
    let eig = nalgebra::SymmetricEigen::new(*m);
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        *v = v.max(1e-9);
    }
    &eig.eigenvectors * Matrix6::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Result of one association round.
#[derive(Debug, Clone, Default)]
pub struct Association {
    /// (detection index, track index) pairs inside the gate.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_tracks: Vec<usize>,
}

/// Optimal linear assignment on the detection-track Hellinger cost matrix;
/// pairs at or beyond the gate are broken and returned unmatched.
pub fn associate(detections: &[DetectionMvn], tracks: &[Track], gate: f64) -> Association {
    let mut assoc = Association::default();
    if detections.is_empty() || tracks.is_empty() {
        assoc.unmatched_detections = (0..detections.len()).collect();
        assoc.unmatched_tracks = (0..tracks.len()).collect();
        return assoc;
    }
    let n = detections.len().max(tracks.len());
    let mut costs = vec![vec![gate; n]; n];
    for (d, det) in detections.iter().enumerate() {
        for (t, track) in tracks.iter().enumerate() {
            costs[d][t] = hellinger(
                &det.mean,
                &det.cov,
                &track.position(),
                &track.position_cov(),
            )
            .unwrap_or(1.0);
        }
    }
    let (_, assignment) = min_cost_assignment(&costs);
    let mut matched_tracks = vec![false; tracks.len()];
    for (d, &t) in assignment.iter().enumerate() {
        if d < detections.len() && t < tracks.len() && costs[d][t] < gate {
            assoc.pairs.push((d, t));
            matched_tracks[t] = true;
        } else if d < detections.len() {
            assoc.unmatched_detections.push(d);
        }
    }
    assoc.unmatched_tracks = (0..tracks.len()).filter(|&t| !matched_tracks[t]).collect();
    assoc
}

/// Hungarian assignment on a square float cost matrix. Costs are scaled to
/// integers so the solver is exact; the returned total is recomputed from
/// the original floats.
pub(crate) fn min_cost_assignment(costs: &[Vec<f64>]) -> (f64, Vec<usize>) {
    const SCALE: f64 = 1e12;
    let rows: Vec<Vec<i64>> = costs
        .iter()
        .map(|row| row.iter().map(|&c| (c * SCALE).round() as i64).collect())
        .collect();
    let matrix = CostMatrix::from_rows(rows).expect("square cost matrix");
    let (_, assignment) = kuhn_munkres_min(&matrix);
    let total = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| costs[r][c])
        .sum();
    (total, assignment)
}

/// Full per-frame tracker state.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: TrackerConfig,
    pub tracks: Vec<Track>,
    /// Tracks deleted by the miss policy, kept for analysis.
    pub retired: Vec<Track>,
    next_id: u64,
    last_t: Option<f64>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Tracker {
            config,
            tracks: Vec::new(),
            retired: Vec::new(),
            next_id: 0,
            last_t: None,
        }
    }

    /// Advance the tracker by one detection frame: convert, consolidate,
    /// predict, associate, update, then apply the spawn/delete policy.
    pub fn step(
        &mut self,
        frame: &[SyntheticDetection],
        pose: &PoseEstimate,
        t: f64,
    ) -> Result<()> {
        if let Some(last) = self.last_t {
            if t < last {
                return Err(Error::validation(format!(
                    "out-of-order frame: {t} after {last}"
                )));
            }
        }
        let mvns: Vec<DetectionMvn> = frame
            .iter()
            .map(|d| to_mvn(d, pose, &self.config))
            .collect::<Result<_>>()?;
        let mvns = consolidate(mvns, self.config.consolidation_gate);

        let dt = self.last_t.map(|last| t - last).unwrap_or(0.0);
        for track in &mut self.tracks {
            *track = predict(track, dt, &self.config);
        }

        let assoc = associate(&mvns, &self.tracks, self.config.association_gate);
        for &(d, ti) in &assoc.pairs {
            self.tracks[ti] = update(&self.tracks[ti], &mvns[d]);
            if self.tracks[ti].consecutive_hits >= self.config.confirm_hits {
                self.tracks[ti].confirmed = true;
            }
        }
        for &ti in &assoc.unmatched_tracks {
            self.tracks[ti].misses += 1;
            self.tracks[ti].consecutive_hits = 0;
        }
        for &d in &assoc.unmatched_detections {
            let track = Track::new(self.next_id, &mvns[d], &self.config);
            self.next_id += 1;
            self.tracks.push(track);
        }

        for track in &mut self.tracks {
            let point = TrackPoint {
                t,
                position: track.position(),
                velocity: track.velocity(),
                pos_cov: track.position_cov(),
                vel_var: Vector3::new(track.cov[(3, 3)], track.cov[(4, 4)], track.cov[(5, 5)]),
                heading: track.last_heading,
                hits: track.hits,
            };
            match track.history.last_mut() {
                Some(last) if last.t == t => *last = point,
                _ => track.history.push(point),
            }
        }

        let max_misses = self.config.max_misses;
        let (live, dead): (Vec<Track>, Vec<Track>) = std::mem::take(&mut self.tracks)
            .into_iter()
            .partition(|tr| tr.misses < max_misses);
        self.tracks = live;
        self.retired.extend(dead);
        self.last_t = Some(t);
        Ok(())
    }

    pub fn confirmed_tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.confirmed)
    }

    /// All tracks that ever existed, live and retired, by id.
    pub fn all_tracks(&self) -> Vec<&Track> {
        let mut all: Vec<&Track> = self.tracks.iter().chain(self.retired.iter()).collect();
        all.sort_by_key(|t| t.id);
        all
    }
}
