//! Line-delimited stream file formats and the checksum index.
//!
//! All numeric fields use Rust's shortest round-trip float formatting, so
//! identical data always serializes to identical bytes.

use crate::anomaly::{AlarmEvent, BackgroundModel};
use crate::attribution::{CandidatePoint, CandidateTrack};
use crate::error::{Error, Result};
use crate::scene::{CountRecord, PoseEstimate, SyntheticDetection};
use crate::tracking::Track;
use crate::types::{ObjectClass, PoseMode, SensorKind, NUM_DETECTORS};
use crate::util::fnv1a64;
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

fn open(path: &Path) -> Result<BufReader<std::fs::File>> {
    Ok(BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    ))
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(content.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, what: &str) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: format!("line {line}: {what}"),
    }
}

/// Detection stream: `t sensor label confidence cx cy cz ex ey ez heading truth_id`.
pub fn write_detections(path: &Path, detections: &[SyntheticDetection]) -> Result<()> {
    let mut out = String::from("# detections v1\n");
    for d in detections {
        let heading = d
            .heading
            .map(|h| h.to_string())
            .unwrap_or_else(|| "-".to_string());
        let truth = d.truth_id.as_deref().unwrap_or("-");
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {} {heading} {truth}",
            d.t,
            d.sensor,
            d.label,
            d.confidence,
            d.center.x,
            d.center.y,
            d.center.z,
            d.extent.x,
            d.extent.y,
            d.extent.z
        )
        .unwrap();
    }
    write_atomic(path, &out)
}

pub fn read_detections(path: &Path) -> Result<Vec<SyntheticDetection>> {
    let mut out = Vec::new();
    for (ln, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 12 {
            return Err(parse_err(path, ln + 1, "expected 12 fields"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| parse_err(path, ln + 1, "bad number"))
        };
        out.push(SyntheticDetection {
            t: num(f[0])?,
            sensor: SensorKind::parse(f[1]).ok_or_else(|| parse_err(path, ln + 1, "bad sensor"))?,
            label: ObjectClass::parse(f[2]).ok_or_else(|| parse_err(path, ln + 1, "bad label"))?,
            confidence: num(f[3])?,
            center: Vector3::new(num(f[4])?, num(f[5])?, num(f[6])?),
            extent: Vector3::new(num(f[7])?, num(f[8])?, num(f[9])?),
            heading: if f[10] == "-" {
                None
            } else {
                Some(num(f[10])?)
            },
            truth_id: if f[11] == "-" {
                None
            } else {
                Some(f[11].to_string())
            },
        });
    }
    Ok(out)
}

/// Pose stream: `t x y z yaw pitch roll mode`.
pub fn write_pose(path: &Path, poses: &[PoseEstimate]) -> Result<()> {
    let mut out = String::from("# pose v1\n");
    for p in poses {
        writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            p.t, p.position.x, p.position.y, p.position.z, p.yaw, p.pitch, p.roll, p.mode
        )
        .unwrap();
    }
    write_atomic(path, &out)
}

pub fn read_pose(path: &Path) -> Result<Vec<PoseEstimate>> {
    let mut out = Vec::new();
    for (ln, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 {
            return Err(parse_err(path, ln + 1, "expected 8 fields"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| parse_err(path, ln + 1, "bad number"))
        };
        out.push(PoseEstimate {
            t: num(f[0])?,
            position: Vector3::new(num(f[1])?, num(f[2])?, num(f[3])?),
            yaw: num(f[4])?,
            pitch: num(f[5])?,
            roll: num(f[6])?,
            mode: PoseMode::parse(f[7]).ok_or_else(|| parse_err(path, ln + 1, "bad mode"))?,
        });
    }
    Ok(out)
}

/// Count records: `detector t0 dt roi_counts ch0..chK-1`.
pub fn write_counts(path: &Path, records: &[CountRecord]) -> Result<()> {
    let mut out = String::from("# counts v1\n");
    for r in records {
        write!(out, "{} {} {} {}", r.detector, r.t0, r.dt, r.roi_counts).unwrap();
        for &c in &r.spectrum {
            write!(out, " {c}").unwrap();
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn read_counts(path: &Path) -> Result<Vec<CountRecord>> {
    let mut out = Vec::new();
    for (ln, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 5 {
            return Err(parse_err(path, ln + 1, "expected detector, bin, spectrum"));
        }
        let spectrum: Vec<u32> = f[4..]
            .iter()
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, ln + 1, "bad channel count"))?;
        out.push(CountRecord {
            detector: f[0]
                .parse()
                .map_err(|_| parse_err(path, ln + 1, "bad detector"))?,
            t0: f[1]
                .parse()
                .map_err(|_| parse_err(path, ln + 1, "bad t0"))?,
            dt: f[2]
                .parse()
                .map_err(|_| parse_err(path, ln + 1, "bad dt"))?,
            roi_counts: f[3]
                .parse()
                .map_err(|_| parse_err(path, ln + 1, "bad roi counts"))?,
            spectrum,
        });
    }
    Ok(out)
}

/// Ground-truth states: `t id label x y z vx vy vz heading`; the platform
/// appears as id `platform`.
pub fn write_truth(path: &Path, truth: &crate::scene::GroundTruth) -> Result<()> {
    let mut out = String::from("# truth v1\n");
    for obj in &truth.objects {
        for s in &obj.samples {
            writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {}",
                s.t,
                obj.id,
                obj.label,
                s.position.x,
                s.position.y,
                s.position.z,
                s.velocity.x,
                s.velocity.y,
                s.velocity.z,
                s.heading
            )
            .unwrap();
        }
    }
    for p in &truth.platform {
        writeln!(
            out,
            "{} platform - {} {} {} 0 0 0 {}",
            p.t, p.position.x, p.position.y, p.position.z, p.yaw
        )
        .unwrap();
    }
    write_atomic(path, &out)
}

/// Track log: `t track_id label x y z vx vy vz det_count c1..c6` where the
/// trailing columns are the state covariance diagonal.
pub fn write_tracks(path: &Path, tracks: &[&Track]) -> Result<()> {
    let mut out = String::from("# tracks v1\n");
    for track in tracks {
        for p in &track.history {
            write!(
                out,
                "{} {} {} {} {} {} {} {} {} {}",
                p.t,
                track.id,
                track.label,
                p.position.x,
                p.position.y,
                p.position.z,
                p.velocity.x,
                p.velocity.y,
                p.velocity.z,
                p.hits
            )
            .unwrap();
            // State covariance diagonal: position block then velocity block.
            let d = p.pos_cov.diagonal();
            let v = p.vel_var;
            writeln!(out, " {} {} {} {} {} {}", d.x, d.y, d.z, v.x, v.y, v.z).unwrap();
        }
    }
    write_atomic(path, &out)
}

/// Rebuild candidate tracks from a track log.
pub fn read_tracks(path: &Path) -> Result<Vec<CandidateTrack>> {
    let mut tracks: Vec<CandidateTrack> = Vec::new();
    for (ln, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 16 {
            return Err(parse_err(path, ln + 1, "expected 16 fields"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| parse_err(path, ln + 1, "bad number"))
        };
        let id: u64 = f[1]
            .parse()
            .map_err(|_| parse_err(path, ln + 1, "bad track id"))?;
        let label = ObjectClass::parse(f[2]).ok_or_else(|| parse_err(path, ln + 1, "bad label"))?;
        let point = CandidatePoint {
            t: num(f[0])?,
            position: Vector3::new(num(f[3])?, num(f[4])?, num(f[5])?),
            velocity: Vector3::new(num(f[6])?, num(f[7])?, num(f[8])?),
            pos_var: Vector3::new(num(f[10])?, num(f[11])?, num(f[12])?),
        };
        match tracks.iter_mut().find(|t| t.id == id) {
            Some(t) => t.points.push(point),
            None => tracks.push(CandidateTrack {
                id,
                label,
                points: vec![point],
            }),
        }
    }
    for t in &mut tracks {
        t.points.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    }
    tracks.sort_by_key(|t| t.id);
    Ok(tracks)
}

/// Alarm log: `detector start stop isotope peak_value`.
pub fn write_alarms(path: &Path, events: &[AlarmEvent]) -> Result<()> {
    let mut out = String::from("# alarms v1\n");
    for e in events {
        writeln!(
            out,
            "{} {} {} {} {}",
            e.detector, e.start, e.stop, e.isotope, e.peak_value
        )
        .unwrap();
    }
    write_atomic(path, &out)
}

pub fn read_alarms(path: &Path) -> Result<Vec<AlarmEvent>> {
    let mut out = Vec::new();
    for (ln, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(parse_err(path, ln + 1, "expected 5 fields"));
        }
        out.push(AlarmEvent {
            detector: f[0]
                .parse()
                .map_err(|_| parse_err(path, ln + 1, "bad detector"))?,
            start: f[1]
                .parse()
                .map_err(|_| parse_err(path, ln + 1, "bad start"))?,
            stop: f[2]
                .parse()
                .map_err(|_| parse_err(path, ln + 1, "bad stop"))?,
            isotope: f[3].to_string(),
            peak_value: f[4]
                .parse()
                .map_err(|_| parse_err(path, ln + 1, "bad peak"))?,
        });
    }
    Ok(out)
}

/// Calibrated background: threshold header, per-detector rates, shape.
pub fn write_background(
    path: &Path,
    background: &BackgroundModel,
    threshold: f64,
    window_s: f64,
) -> Result<()> {
    let mut out = String::new();
    writeln!(
        out,
        "# background v1 threshold={threshold} window_s={window_s}"
    )
    .unwrap();
    write!(out, "rates").unwrap();
    for r in &background.roi_rates {
        write!(out, " {r}").unwrap();
    }
    out.push('\n');
    write!(out, "shape").unwrap();
    for s in &background.shape {
        write!(out, " {s}").unwrap();
    }
    out.push('\n');
    write_atomic(path, &out)
}

pub fn read_background(path: &Path) -> Result<(BackgroundModel, f64, f64)> {
    let mut threshold = None;
    let mut window_s = None;
    let mut rates = Vec::new();
    let mut shape = Vec::new();
    for (ln, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if let Some(rest) = line.strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some(v) = token.strip_prefix("threshold=") {
                    threshold = v.parse().ok();
                }
                if let Some(v) = token.strip_prefix("window_s=") {
                    window_s = v.parse().ok();
                }
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("rates") {
            rates = rest
                .split_whitespace()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(path, ln + 1, "bad rate"))?;
        } else if let Some(rest) = line.strip_prefix("shape") {
            shape = rest
                .split_whitespace()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(path, ln + 1, "bad shape value"))?;
        }
    }
    if rates.len() != NUM_DETECTORS || shape.is_empty() {
        return Err(parse_err(path, 0, "incomplete background model"));
    }
    let threshold = threshold.ok_or_else(|| parse_err(path, 1, "missing threshold"))?;
    let window_s = window_s.ok_or_else(|| parse_err(path, 1, "missing window_s"))?;
    Ok((
        BackgroundModel {
            shape,
            roi_rates: rates,
        },
        threshold,
        window_s,
    ))
}

/// Write `index.txt`: one `fnv1a64 <hex> <bytes> <name>` line per file.
pub fn write_index(dir: &Path, files: &[&str]) -> Result<()> {
    let mut out = String::from("# index v1\n");
    for name in files {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        writeln!(
            out,
            "fnv1a64 {:016x} {} {name}",
            fnv1a64(&bytes),
            bytes.len()
        )
        .unwrap();
    }
    write_atomic(&dir.join("index.txt"), &out)
}

/// Generic small text file helpers used by the pipeline stages.
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    write_atomic(path, content)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::config::presets;
    use crate::scene::detect::SensorNoise;
    use crate::scene::{generate_truth, synthesize_detections, synthesize_pose};

    #[test]
    fn detection_stream_round_trip() {
        let dir = std::env::temp_dir().join("radtrack-io-test-det");
        let cfg = presets::by_name("intersection-10").unwrap();
        let truth = generate_truth(&cfg).unwrap();
        let dets = synthesize_detections(&truth, &SensorNoise::Lidar(cfg.noise.lidar.clone()), 7);
        let path = dir.join("detections.txt");
        write_detections(&path, &dets).unwrap();
        let back = read_detections(&path).unwrap();
        assert_eq!(dets.len(), back.len());
        for (a, b) in dets.iter().zip(&back) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.center, b.center);
            assert_eq!(a.heading, b.heading);
            assert_eq!(a.truth_id, b.truth_id);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn pose_stream_round_trip_exact() {
        let dir = std::env::temp_dir().join("radtrack-io-test-pose");
        let cfg = presets::by_name("single-carrier").unwrap();
        let truth = generate_truth(&cfg).unwrap();
        let poses = synthesize_pose(
            &truth,
            crate::types::PoseMode::Ins,
            &cfg.noise.pose,
            10.0,
            3,
        );
        let path = dir.join("pose.txt");
        write_pose(&path, &poses).unwrap();
        let back = read_pose(&path).unwrap();
        assert_eq!(poses, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn checksum_index_stable() {
        let dir = std::env::temp_dir().join("radtrack-io-test-index");
        std::fs::create_dir_all(&dir).unwrap();
        write_text(&dir.join("a.txt"), "hello\n").unwrap();
        write_index(&dir, &["a.txt"]).unwrap();
        let first = read_text(&dir.join("index.txt")).unwrap();
        write_index(&dir, &["a.txt"]).unwrap();
        let second = read_text(&dir.join("index.txt")).unwrap();
        assert_eq!(first, second);
        assert!(first.contains("a.txt"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
