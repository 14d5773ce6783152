//! Shared in-memory pipeline harness for the integration suites: run a
//! whole scenario seed (simulate, track, alarm, adjudicate) without
//! touching the filesystem.

// Each integration target compiles its own copy and uses a subset.
#![allow(dead_code)]

use radtrack_core::anomaly::{self, BackgroundModel, Roi};
use radtrack_core::attribution::{
    adjudicate, AdjudicateOptions, CandidateTrack, EncounterReport, EncounterWindow, ANALYSIS_PAD_S,
};
use radtrack_core::pipeline::{
    analysis_profiles, carrier_profile, heading_mode_for, scenario_response,
};
use radtrack_core::scene::{
    self, generate_truth, synthesize_counts, synthesize_detections, synthesize_pose,
    ScenarioConfig, SensorNoise,
};
use radtrack_core::tracking::{Tracker, TrackerConfig};
use radtrack_core::types::{PoseMode, SensorKind};
use std::collections::BTreeMap;

pub struct SeedOutcome {
    pub encounters: Vec<(EncounterWindow, EncounterReport)>,
    /// Dominant truth object per confirmed track id.
    pub track_truth: BTreeMap<u64, String>,
    pub tracks: Vec<CandidateTrack>,
    pub poses: Vec<scene::PoseEstimate>,
}

impl SeedOutcome {
    /// True when any encounter's attributed track maps onto `carrier_id`.
    pub fn attributed_to(&self, carrier_id: &str) -> bool {
        self.encounters.iter().any(|(_, report)| {
            report
                .attributed
                .and_then(|id| self.track_truth.get(&id))
                .map(|truth| truth == carrier_id)
                .unwrap_or(false)
        })
    }
}

/// Calibrate the background model and alarm threshold on a source-free
/// variant of `config`.
pub fn calibrate(
    config: &ScenarioConfig,
    duration_s: f64,
    target_events: usize,
    window_s: f64,
    seed: u64,
) -> (BackgroundModel, f64) {
    let mut calib = config.clone();
    calib.source = None;
    calib.duration_s = duration_s;
    let truth = generate_truth(&calib).unwrap();
    let (_, response) = scenario_response(&calib).unwrap();
    let records = synthesize_counts(&truth, &response, None, &calib, seed).unwrap();
    let background = BackgroundModel::estimate(&records).unwrap();
    let roi = Roi::cs137();
    let threshold =
        anomaly::calibrate_threshold(&records, &background, window_s, &roi, target_events).unwrap();
    (background, threshold)
}

/// Run one full seed in memory: streams, tracker, alarms, adjudication.
pub fn run_seed(
    config: &ScenarioConfig,
    seed: u64,
    sensor: SensorKind,
    pose_mode: PoseMode,
    background: &BackgroundModel,
    threshold: f64,
    window_s: f64,
) -> SeedOutcome {
    let truth = generate_truth(config).unwrap();
    let (geometry, response) = scenario_response(config).unwrap();
    let profile = carrier_profile(config).unwrap();
    let noise = match sensor {
        SensorKind::Video => SensorNoise::Video(config.noise.video.clone()),
        SensorKind::Lidar => SensorNoise::Lidar(config.noise.lidar.clone()),
    };
    let detections = synthesize_detections(&truth, &noise, seed);
    let poses = synthesize_pose(
        &truth,
        pose_mode,
        &config.noise.pose,
        config.rates.pose_hz,
        seed,
    );
    let records = synthesize_counts(&truth, &response, profile.as_ref(), config, seed).unwrap();

    let tracker_config = TrackerConfig {
        frame_period: 1.0 / config.rates.detection_hz,
        ..Default::default()
    };
    let mut tracker = Tracker::new(tracker_config);
    for frame in scene::frames(&detections) {
        let t = frame[0].t;
        let pose = scene::nearest_pose(&poses, t).unwrap();
        tracker.step(frame, pose, t).unwrap();
    }
    let confirmed: Vec<_> = tracker
        .all_tracks()
        .into_iter()
        .filter(|t| t.confirmed)
        .collect();
    let track_truth: BTreeMap<u64, String> = confirmed
        .iter()
        .filter_map(|t| t.dominant_truth().map(|(id, _)| (t.id, id.to_string())))
        .collect();
    let tracks: Vec<CandidateTrack> = confirmed
        .iter()
        .map(|t| CandidateTrack::from_track(t))
        .collect();

    let roi = Roi::cs137();
    let events = anomaly::detect_alarms(&records, background, threshold, window_s, &roi);
    let spans = anomaly::merge_encounters(&events);
    let profiles = analysis_profiles(config).unwrap();
    let options = AdjudicateOptions {
        heading_mode: heading_mode_for(sensor),
        ..Default::default()
    };
    let encounters = spans
        .into_iter()
        .filter_map(|(start, stop)| {
            let window = EncounterWindow::from_records(
                &records,
                start,
                stop,
                ANALYSIS_PAD_S,
                roi.clone(),
                config.bins_per_record(),
            )
            .ok()?;
            let report = adjudicate(
                &window, &tracks, &response, &profiles, &poses, &geometry, &options,
            )
            .ok()?;
            Some((window, report))
        })
        .collect();

    SeedOutcome {
        encounters,
        track_truth,
        tracks,
        poses,
    }
}

/// Map `f` over the items with scoped worker threads (order-preserving).
pub fn par_map<T, R, F>(items: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let n = items.len();
    let mut slots: Vec<Option<R>> = (0..n).map(|_| None).collect();
    let work: Vec<(usize, T)> = items.into_iter().enumerate().collect();
    let queue = std::sync::Mutex::new(work);
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1) {
            scope.spawn(|| loop {
                let item = queue.lock().unwrap().pop();
                let Some((idx, item)) = item else { break };
                let r = f(item);
                results.lock().unwrap()[idx] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.unwrap()).collect()
}

pub fn test_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
