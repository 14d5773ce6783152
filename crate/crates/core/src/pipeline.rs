//! Pipeline stages over run directories: simulate, track, calibrate the
//! background, adjudicate encounters, optimize integration windows, and
//! export plot data. A run directory is the unit of reproducibility; every
//! stage is deterministic and idempotent on unchanged inputs.

use crate::anomaly::{self, BackgroundModel, Roi};
use crate::attribution::{
    adjudicate, offset_scan, AdjudicateOptions, EncounterReport, EncounterWindow, HeadingMode,
    ANALYSIS_PAD_S,
};
use crate::error::{Error, Result};
use crate::io;
use crate::response::{
    build_attenuation_profile, build_response, AttenuationProfile, ClassProfiles,
    DetectorArrayGeometry, ResponseTable, INTRINSIC_EFFICIENCY,
};
use crate::scene::{self, generate_truth, load_scenario, presets, ScenarioConfig, SensorNoise};
use crate::snr::{
    compare_windows, mcmc_refine, optimize_array, optimize_window, series_from_model,
    summed_series, McmcConfig,
};
use crate::tracking::{Tracker, TrackerConfig};
use crate::types::{PoseMode, SensorKind};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// File names inside a run directory.
pub mod files {
    pub const SCENARIO: &str = "scenario.toml";
    pub const META: &str = "run_meta.txt";
    pub const TRUTH: &str = "truth.txt";
    pub const DETECTIONS: &str = "detections.txt";
    pub const POSE: &str = "pose.txt";
    pub const COUNTS: &str = "counts.txt";
    pub const INDEX: &str = "index.txt";
    pub const TRACKS: &str = "tracks.txt";
    pub const TRACK_TRUTH: &str = "track_truth.txt";
    pub const ALARMS: &str = "alarms.txt";
    pub const ADJUDICATION: &str = "adjudication.txt";
    pub const WINDOWS: &str = "windows.txt";
    pub const BACKGROUND: &str = "background.txt";
    pub const STREAMS: [&str; 4] = [TRUTH, DETECTIONS, POSE, COUNTS];
}

/// A batch request: one scenario, many seeds, one sensor/pose arm.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scenario: ScenarioConfig,
    pub seeds: Vec<u64>,
    pub pose_mode: PoseMode,
    pub sensor: SensorKind,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl RunManifest {
    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out_dir.join(format!("seed_{seed:06}"))
    }
}

/// Resolve `builtin:<name>` or a filesystem path into a scenario.
pub fn resolve_scenario(spec: &str) -> Result<ScenarioConfig> {
    match spec.strip_prefix("builtin:") {
        Some(name) => presets::by_name(name),
        None => load_scenario(Path::new(spec)),
    }
}

#[derive(Debug, Clone)]
pub struct RunMeta {
    pub scenario_name: String,
    pub seed: u64,
    pub sensor: SensorKind,
    pub pose_mode: PoseMode,
}

fn write_meta(dir: &Path, meta: &RunMeta) -> Result<()> {
    let text = format!(
        "# run-meta v1\nscenario {}\nseed {}\nsensor {}\npose_mode {}\n",
        meta.scenario_name, meta.seed, meta.sensor, meta.pose_mode
    );
    io::write_text(&dir.join(files::META), &text)
}

pub fn read_meta(dir: &Path) -> Result<RunMeta> {
    let path = dir.join(files::META);
    let text = io::read_text(&path).map_err(|_| {
        Error::MissingStage(format!(
            "simulate (no {} in {})",
            files::META,
            dir.display()
        ))
    })?;
    let mut scenario_name = String::new();
    let mut seed = 0;
    let mut sensor = None;
    let mut pose_mode = None;
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match (it.next(), it.next()) {
            (Some("scenario"), Some(v)) => scenario_name = v.to_string(),
            (Some("seed"), Some(v)) => {
                seed = v.parse().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    message: "bad seed".into(),
                })?
            }
            (Some("sensor"), Some(v)) => sensor = SensorKind::parse(v),
            (Some("pose_mode"), Some(v)) => pose_mode = PoseMode::parse(v),
            _ => {}
        }
    }
    Ok(RunMeta {
        scenario_name,
        seed,
        sensor: sensor.ok_or_else(|| Error::validation("run meta missing sensor"))?,
        pose_mode: pose_mode.ok_or_else(|| Error::validation("run meta missing pose_mode"))?,
    })
}

fn load_run_scenario(dir: &Path) -> Result<ScenarioConfig> {
    let path = dir.join(files::SCENARIO);
    if !path.exists() {
        return Err(Error::MissingStage(format!(
            "simulate (no {} in {})",
            files::SCENARIO,
            dir.display()
        )));
    }
    load_scenario(&path)
}

/// Transmission through the configured source shielding alone.
fn shielding_factor(config: &ScenarioConfig) -> Result<f64> {
    let mut factor = 1.0;
    if let Some(src) = &config.source {
        for s in &src.shielding {
            factor *= s.transmission()?;
        }
    }
    Ok(factor)
}

/// Attenuation profile of the configured source carrier, honoring the
/// scenario attenuation mode.
pub fn carrier_profile(config: &ScenarioConfig) -> Result<Option<AttenuationProfile>> {
    let Some(src) = &config.source else {
        return Ok(None);
    };
    let idx = config
        .object_index(&src.carrier)
        .ok_or_else(|| Error::validation("source carrier missing"))?;
    let class = config.objects[idx].label;
    let profile = match config.attenuation.mode {
        scene::config::AttenuationMode::Profile => {
            build_attenuation_profile(class, &src.shielding, src.placement)?
        }
        scene::config::AttenuationMode::Isotropic => {
            AttenuationProfile::isotropic(class, shielding_factor(config)?)
        }
    };
    Ok(Some(profile))
}

/// Class attenuation profiles used by the analysis side, honoring the
/// scenario attenuation mode.
pub fn analysis_profiles(config: &ScenarioConfig) -> Result<ClassProfiles> {
    let shielding = config
        .source
        .as_ref()
        .map(|s| s.shielding.clone())
        .unwrap_or_default();
    Ok(match config.attenuation.mode {
        scene::config::AttenuationMode::Profile => ClassProfiles::build(&shielding)?,
        scene::config::AttenuationMode::Isotropic => {
            ClassProfiles::isotropic(shielding_factor(config)?)
        }
    })
}

/// Response table for the scenario's detector array.
pub fn scenario_response(
    config: &ScenarioConfig,
) -> Result<(DetectorArrayGeometry, ResponseTable)> {
    let geometry = DetectorArrayGeometry::by_name(&config.platform.array)?;
    let roi_id = config
        .source
        .as_ref()
        .map(|s| s.roi.as_str())
        .unwrap_or("cs137");
    let table = build_response(&geometry, roi_id, INTRINSIC_EFFICIENCY);
    Ok((geometry, table))
}

/// Stage 1: generate and write all stream files for one seed.
pub fn run_simulate(
    config: &ScenarioConfig,
    seed: u64,
    sensor: SensorKind,
    pose_mode: PoseMode,
    dir: &Path,
) -> Result<()> {
    config.validate()?;
    let truth = generate_truth(config)?;
    let (_, response) = scenario_response(config)?;
    let profile = carrier_profile(config)?;

    let noise = match sensor {
        SensorKind::Video => SensorNoise::Video(config.noise.video.clone()),
        SensorKind::Lidar => SensorNoise::Lidar(config.noise.lidar.clone()),
    };
    let detections = scene::synthesize_detections(&truth, &noise, seed);
    let poses = scene::synthesize_pose(
        &truth,
        pose_mode,
        &config.noise.pose,
        config.rates.pose_hz,
        seed,
    );
    let counts = scene::synthesize_counts(&truth, &response, profile.as_ref(), config, seed)?;

    io::write_text(&dir.join(files::SCENARIO), &config.to_toml())?;
    write_meta(
        dir,
        &RunMeta {
            scenario_name: config.name.clone(),
            seed,
            sensor,
            pose_mode,
        },
    )?;
    io::write_truth(&dir.join(files::TRUTH), &truth)?;
    io::write_detections(&dir.join(files::DETECTIONS), &detections)?;
    io::write_pose(&dir.join(files::POSE), &poses)?;
    io::write_counts(&dir.join(files::COUNTS), &counts)?;
    io::write_index(dir, &files::STREAMS)?;
    Ok(())
}

/// Stage 2: run the tracker over the detection stream and write the track
/// log (confirmed tracks only) plus the truth-association diagnostics.
pub fn run_track(dir: &Path) -> Result<()> {
    let config = load_run_scenario(dir)?;
    let detections = io::read_detections(&dir.join(files::DETECTIONS))
        .map_err(missing_stage("simulate", files::DETECTIONS))?;
    let poses =
        io::read_pose(&dir.join(files::POSE)).map_err(missing_stage("simulate", files::POSE))?;

    let tracker_config = TrackerConfig {
        frame_period: 1.0 / config.rates.detection_hz,
        ..Default::default()
    };
    let mut tracker = Tracker::new(tracker_config);
    for frame in scene::frames(&detections) {
        let t = frame[0].t;
        let pose =
            scene::nearest_pose(&poses, t).ok_or_else(|| Error::validation("no pose stream"))?;
        tracker.step(frame, pose, t)?;
    }

    let confirmed: Vec<_> = tracker
        .all_tracks()
        .into_iter()
        .filter(|t| t.confirmed)
        .collect();
    io::write_tracks(&dir.join(files::TRACKS), &confirmed)?;

    let mut diag = String::from("# track-truth v1\n");
    for track in &confirmed {
        let (truth_id, votes) = track.dominant_truth().unwrap_or(("-", 0));
        writeln!(diag, "{} {truth_id} {votes} {}", track.id, track.hits).unwrap();
    }
    io::write_text(&dir.join(files::TRACK_TRUTH), &diag)?;
    Ok(())
}

fn missing_stage(stage: &'static str, file: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Io { .. } => Error::MissingStage(format!("{stage} (missing {file})")),
        other => other,
    }
}

/// Calibrate the background model and alarm threshold on a source-free
/// variant of the scenario. Writes `background.txt` under `out_dir`.
pub fn run_calibrate(
    config: &ScenarioConfig,
    calib_duration_s: f64,
    far_events_per_s: f64,
    window_s: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<(BackgroundModel, f64)> {
    let mut calib = config.clone();
    calib.source = None;
    calib.duration_s = calib_duration_s;
    calib.validate()?;
    let truth = generate_truth(&calib)?;
    let (_, response) = scenario_response(&calib)?;
    let records = scene::synthesize_counts(&truth, &response, None, &calib, seed)?;
    let background = BackgroundModel::estimate(&records)?;
    let roi = Roi::by_name(
        config
            .source
            .as_ref()
            .map(|s| s.roi.as_str())
            .unwrap_or("cs137"),
    )?;
    let target = ((far_events_per_s * calib_duration_s).round() as usize).max(1);
    let threshold = anomaly::calibrate_threshold(&records, &background, window_s, &roi, target)?;
    io::write_background(
        &out_dir.join(files::BACKGROUND),
        &background,
        threshold,
        window_s,
    )?;
    Ok((background, threshold))
}

/// Everything adjudication produces for one encounter.
pub struct EncounterAnalysis {
    pub window: EncounterWindow,
    pub report: EncounterReport,
}

/// Heading knowledge by sensor: lidar tracks carry usable headings, video
/// tracks fall back to the class-average transmission.
pub fn heading_mode_for(sensor: SensorKind) -> HeadingMode {
    match sensor {
        SensorKind::Lidar => HeadingMode::FromVelocity,
        SensorKind::Video => HeadingMode::Isotropic,
    }
}

/// Core of the adjudicate stage: detect alarms, slice encounters, and
/// score every candidate track. Shared by the report stage.
pub fn adjudicate_run(dir: &Path, background_dir: &Path) -> Result<Vec<EncounterAnalysis>> {
    let config = load_run_scenario(dir)?;
    let meta = read_meta(dir)?;
    let records = io::read_counts(&dir.join(files::COUNTS))
        .map_err(missing_stage("simulate", files::COUNTS))?;
    let tracks =
        io::read_tracks(&dir.join(files::TRACKS)).map_err(missing_stage("track", files::TRACKS))?;
    let poses =
        io::read_pose(&dir.join(files::POSE)).map_err(missing_stage("simulate", files::POSE))?;
    let bg_path = background_dir.join(files::BACKGROUND);
    if !bg_path.exists() {
        return Err(Error::MissingStage(format!(
            "calibrate-background (no {})",
            bg_path.display()
        )));
    }
    let (background, threshold, window_s) = io::read_background(&bg_path)?;

    let roi = Roi::by_name(
        config
            .source
            .as_ref()
            .map(|s| s.roi.as_str())
            .unwrap_or("cs137"),
    )?;
    let events = anomaly::detect_alarms(&records, &background, threshold, window_s, &roi);
    io::write_alarms(&dir.join(files::ALARMS), &events)?;
    let encounters = anomaly::merge_encounters(&events);

    let (geometry, response) = scenario_response(&config)?;
    let profiles = analysis_profiles(&config)?;
    let options = AdjudicateOptions {
        heading_mode: heading_mode_for(meta.sensor),
        ..Default::default()
    };

    let mut out = Vec::new();
    for (start, stop) in encounters {
        let window = EncounterWindow::from_records(
            &records,
            start,
            stop,
            ANALYSIS_PAD_S,
            roi.clone(),
            config.bins_per_record(),
        )?;
        let report = adjudicate(
            &window, &tracks, &response, &profiles, &poses, &geometry, &options,
        )?;
        out.push(EncounterAnalysis { window, report });
    }
    Ok(out)
}

/// Stage 3: adjudicate all encounters and write the report file.
pub fn run_adjudicate(dir: &Path, background_dir: &Path) -> Result<Vec<EncounterAnalysis>> {
    let analyses = adjudicate_run(dir, background_dir)?;
    let meta = read_meta(dir)?;
    let mut out = String::new();
    writeln!(
        out,
        "# adjudication v1 scenario={} seed={} sensor={} pose={}",
        meta.scenario_name, meta.seed, meta.sensor, meta.pose_mode
    )
    .unwrap();
    for (k, analysis) in analyses.iter().enumerate() {
        let r = &analysis.report;
        writeln!(
            out,
            "encounter {k} start {} stop {}",
            r.alarm_start, r.alarm_stop
        )
        .unwrap();
        for f in &r.fits {
            writeln!(
                out,
                "track {} label {} S {} p {} deviance {} alpha {} alpha_se {} offset_s {} offset_m {} bg_preferred {} outside_frac {} flagged {}",
                f.track_id,
                f.label,
                f.s_value,
                f.p,
                f.deviance,
                f.alpha,
                f.alpha_se,
                f.offset_s,
                f.offset_m,
                f.background_preferred as u8,
                f.outside_alarm_frac,
                f.flagged(0.95) as u8,
            )
            .unwrap();
        }
        match r.attributed {
            Some(id) => writeln!(out, "attributed {id}").unwrap(),
            None => writeln!(out, "attributed none").unwrap(),
        }
        writeln!(out, "end").unwrap();
    }
    if analyses.is_empty() {
        writeln!(out, "no_encounters").unwrap();
    }
    io::write_text(&dir.join(files::ADJUDICATION), &out)?;
    Ok(analyses)
}

/// Stage 4: integration-window optimization for the attributed track of
/// each encounter, with MCMC position-uncertainty refinement, compared
/// against fixed windows. Writes `windows.txt`.
pub fn run_optimize(dir: &Path, background_dir: &Path, mcmc: Option<McmcConfig>) -> Result<()> {
    let config = load_run_scenario(dir)?;
    let meta = read_meta(dir)?;
    let analyses = adjudicate_run(dir, background_dir)?;
    let (background, _, _) = io::read_background(&background_dir.join(files::BACKGROUND))?;
    let tracks = io::read_tracks(&dir.join(files::TRACKS))?;
    let poses = io::read_pose(&dir.join(files::POSE))?;
    let (geometry, response) = scenario_response(&config)?;
    let profiles = analysis_profiles(&config)?;
    let options = AdjudicateOptions {
        heading_mode: heading_mode_for(meta.sensor),
        ..Default::default()
    };

    let mut out = String::from("# windows v1\n");
    for (k, analysis) in analyses.iter().enumerate() {
        let Some(attributed) = analysis.report.attributed else {
            writeln!(out, "encounter {k} no_attribution").unwrap();
            continue;
        };
        let track = tracks
            .iter()
            .find(|t| t.id == attributed)
            .ok_or_else(|| Error::validation("attributed track missing from log"))?;
        let (fit, model, mle) = offset_scan(
            track,
            &analysis.window,
            &response,
            &profiles,
            &poses,
            &geometry,
            &options,
        )?;

        let mcmc_config = McmcConfig {
            seed: meta.seed ^ 0x5eed_0000 ^ k as u64,
            ..mcmc.clone().unwrap_or_default()
        };
        let refined = mcmc_refine(
            &model,
            &analysis.window,
            mle.alpha,
            &mle.backgrounds,
            &response,
            &geometry,
            &mcmc_config,
        );
        let (optimal, summed_bins) = match refined {
            Ok(r) => (r.window, r.summed_bins),
            // Degenerate coverage: fall back to the deterministic windows.
            Err(_) => {
                let optimal = optimize_array(&series_from_model(&model));
                let series = summed_series(&model);
                let (sel, _) = optimize_window(&series);
                let bins = sel.iter().map(|&s| series.segments[s].bin).collect();
                (optimal, bins)
            }
        };
        let rows = compare_windows(
            &analysis.window,
            &model,
            &optimal,
            &summed_bins,
            &[1.0, 2.0, 3.0, 4.0],
            &background,
        )?;
        for row in rows {
            let detectors: Vec<String> = row.detectors_used.iter().map(|d| d.to_string()).collect();
            writeln!(
                out,
                "encounter {k} method {} anomaly {} duration_s {} detectors {} track {} alpha {}",
                row.method,
                row.anomaly_value,
                row.duration_s,
                detectors.join(","),
                attributed,
                fit.alpha,
            )
            .unwrap();
        }
    }
    if analyses.is_empty() {
        out.push_str("no_encounters\n");
    }
    io::write_text(&dir.join(files::WINDOWS), &out)?;
    Ok(())
}

/// Stage 5: export plot data (CSV bundles) for one run directory.
pub fn run_report(dir: &Path, background_dir: &Path) -> Result<()> {
    let report_dir = dir.join("report");
    std::fs::create_dir_all(&report_dir)
        .map_err(|e| Error::io(report_dir.display().to_string(), e))?;

    // Trajectory plot data straight from the truth stream.
    let truth_text =
        io::read_text(&dir.join(files::TRUTH)).map_err(missing_stage("simulate", files::TRUTH))?;
    let mut csv = String::from("t,id,label,x,y,z\n");
    for line in truth_text.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() >= 6 {
            writeln!(csv, "{},{},{},{},{},{}", f[0], f[1], f[2], f[3], f[4], f[5]).unwrap();
        }
    }
    io::write_text(&report_dir.join("trajectories.csv"), &csv)?;

    let analyses = match adjudicate_run(dir, background_dir) {
        Ok(a) => a,
        Err(Error::MissingStage(s)) => return Err(Error::MissingStage(s)),
        Err(e) => return Err(e),
    };
    if analyses.is_empty() {
        io::write_text(&report_dir.join("no_encounters.marker"), "no encounters\n")?;
        return Ok(());
    }

    // Per-encounter, per-detector count-rate overlays with the best-fit
    // model of every candidate track.
    let config = load_run_scenario(dir)?;
    let meta = read_meta(dir)?;
    let tracks = io::read_tracks(&dir.join(files::TRACKS))?;
    let poses = io::read_pose(&dir.join(files::POSE))?;
    let (geometry, response) = scenario_response(&config)?;
    let profiles = analysis_profiles(&config)?;
    let options = AdjudicateOptions {
        heading_mode: heading_mode_for(meta.sensor),
        ..Default::default()
    };
    let mut scatter = String::from(
        "encounter,track,label,s_value,p,alpha,offset_s,bg_preferred,outside_frac,flagged,attributed\n",
    );
    for (k, analysis) in analyses.iter().enumerate() {
        let mut lambdas: Vec<(u64, Vec<Vec<f64>>)> = Vec::new();
        for fit in &analysis.report.fits {
            let track = tracks.iter().find(|t| t.id == fit.track_id).unwrap();
            let (_, model, mle) = offset_scan(
                track,
                &analysis.window,
                &response,
                &profiles,
                &poses,
                &geometry,
                &options,
            )?;
            lambdas.push((
                fit.track_id,
                crate::attribution::model_lambda(&model, mle.alpha, &mle.backgrounds),
            ));
            writeln!(
                scatter,
                "{k},{},{},{},{},{},{},{},{},{},{}",
                fit.track_id,
                fit.label,
                fit.s_value,
                fit.p,
                fit.alpha,
                fit.offset_s,
                fit.background_preferred as u8,
                fit.outside_alarm_frac,
                fit.flagged(0.95) as u8,
                (analysis.report.attributed == Some(fit.track_id)) as u8,
            )
            .unwrap();
        }
        for det in 0..crate::types::NUM_DETECTORS {
            let mut csv = String::from("t0,counts");
            for (id, _) in &lambdas {
                write!(csv, ",lambda_track{id}").unwrap();
            }
            csv.push('\n');
            for (i, &t0) in analysis.window.bin_starts.iter().enumerate() {
                write!(csv, "{t0},{}", analysis.window.counts[det][i]).unwrap();
                for (_, lam) in &lambdas {
                    write!(csv, ",{}", lam[det][i]).unwrap();
                }
                csv.push('\n');
            }
            io::write_text(
                &report_dir.join(format!("overlay_enc{k}_det{det}.csv")),
                &csv,
            )?;
        }
    }
    io::write_text(&report_dir.join("scatter.csv"), &scatter)?;

    // Anomaly bars from the windows stage, when present.
    if let Ok(text) = io::read_text(&dir.join(files::WINDOWS)) {
        let mut csv = String::from("encounter,method,anomaly,duration_s\n");
        for line in text.lines().filter(|l| l.contains(" method ")) {
            let f: Vec<&str> = line.split_whitespace().collect();
            // encounter <k> method <m> anomaly <v> duration_s <v> ...
            if f.len() >= 8 {
                writeln!(csv, "{},{},{},{}", f[1], f[3], f[5], f[7]).unwrap();
            }
        }
        io::write_text(&report_dir.join("anomaly_bars.csv"), &csv)?;
    }
    Ok(())
}

/// Success flag for one seed: the attributed track of at least one
/// encounter maps onto the configured source carrier.
pub fn attribution_correct(dir: &Path) -> Result<Option<bool>> {
    let config = load_run_scenario(dir)?;
    let Some(src) = &config.source else {
        return Ok(None);
    };
    let adjudication = io::read_text(&dir.join(files::ADJUDICATION))
        .map_err(missing_stage("adjudicate", files::ADJUDICATION))?;
    let truth_map = io::read_text(&dir.join(files::TRACK_TRUTH))
        .map_err(missing_stage("track", files::TRACK_TRUTH))?;
    let mut track_to_truth = std::collections::BTreeMap::new();
    for line in truth_map.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() >= 2 {
            if let Ok(id) = f[0].parse::<u64>() {
                track_to_truth.insert(id, f[1].to_string());
            }
        }
    }
    let mut any_encounter = false;
    let mut correct = false;
    for line in adjudication.lines() {
        if let Some(rest) = line.strip_prefix("attributed ") {
            any_encounter = true;
            if let Ok(id) = rest.trim().parse::<u64>() {
                if track_to_truth.get(&id).map(|s| s.as_str()) == Some(src.carrier.as_str()) {
                    correct = true;
                }
            }
        }
    }
    if !any_encounter {
        return Ok(Some(false));
    }
    Ok(Some(correct))
}

/// Batch attribution summary across seed directories; writes
/// `summary.txt` and returns `(correct, total)`.
pub fn write_batch_summary(out_dir: &Path, seed_dirs: &[PathBuf]) -> Result<(usize, usize)> {
    let mut correct = 0;
    let mut total = 0;
    let mut lines = String::from("# summary v1\n");
    for dir in seed_dirs {
        match attribution_correct(dir)? {
            Some(ok) => {
                total += 1;
                if ok {
                    correct += 1;
                }
                writeln!(
                    lines,
                    "{} {}",
                    dir.file_name().unwrap_or_default().to_string_lossy(),
                    if ok { "attributed" } else { "missed" }
                )
                .unwrap();
            }
            None => {
                writeln!(
                    lines,
                    "{} source-free",
                    dir.file_name().unwrap_or_default().to_string_lossy()
                )
                .unwrap();
            }
        }
    }
    writeln!(lines, "attributed {correct}/{total}").unwrap();
    io::write_text(&out_dir.join("summary.txt"), &lines)?;
    Ok((correct, total))
}

/// Per-method win counts across all encounters of a batch; writes
/// `optimize_summary.txt`.
pub fn write_optimize_summary(out_dir: &Path, seed_dirs: &[PathBuf]) -> Result<String> {
    use std::collections::BTreeMap;
    let mut wins: BTreeMap<String, usize> = BTreeMap::new();
    let mut config_vs_summed = (0usize, 0usize);
    let mut total = 0;
    for dir in seed_dirs {
        let Ok(text) = io::read_text(&dir.join(files::WINDOWS)) else {
            continue;
        };
        let mut rows: BTreeMap<usize, Vec<(String, f64)>> = BTreeMap::new();
        for line in text.lines().filter(|l| l.contains(" method ")) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() >= 6 {
                if let (Ok(enc), Ok(v)) = (f[1].parse::<usize>(), f[5].parse::<f64>()) {
                    rows.entry(enc).or_default().push((f[3].to_string(), v));
                }
            }
        }
        for (_, methods) in rows {
            total += 1;
            if let Some((best, _)) = methods.iter().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap()) {
                *wins.entry(best.clone()).or_insert(0) += 1;
            }
            let get = |name: &str| methods.iter().find(|(m, _)| m == name).map(|(_, v)| *v);
            if let (Some(c), Some(s)) = (get("optimal-config"), get("summed-array")) {
                if c >= s {
                    config_vs_summed.0 += 1;
                }
                config_vs_summed.1 += 1;
            }
        }
    }
    let mut out = String::from("# optimize-summary v1\n");
    for (method, n) in &wins {
        writeln!(out, "wins {method} {n}/{total}").unwrap();
    }
    writeln!(
        out,
        "optimal_config_ge_summed {}/{}",
        config_vs_summed.0, config_vs_summed.1
    )
    .unwrap();
    io::write_text(&out_dir.join("optimize_summary.txt"), &out)?;
    Ok(out)
}
