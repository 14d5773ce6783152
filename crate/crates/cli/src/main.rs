//! Command-line front end: run scenarios, batch Monte Carlo seeds, and
//! drive the tracking / adjudication / window-optimization stages over
//! run directories.

use clap::{Parser, Subcommand};
use radtrack_core::error::Error;
use radtrack_core::pipeline::{self, files};
use radtrack_core::snr::McmcConfig;
use radtrack_core::types::{PoseMode, SensorKind};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Parser)]
#[command(
    name = "radtrack",
    version,
    about = "Drive-by radiological source attribution: simulate scenarios, track objects, \
             adjudicate alarms, and optimize integration windows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate truth/detection/pose/count streams for each seed.
    Simulate {
        /// Scenario file path, or `builtin:<name>` (intersection-10,
        /// intersection-20, single-carrier, source-free).
        #[arg(long)]
        scenario: String,
        /// Seed list: `1,2,7` or a range `0..50`.
        #[arg(long, default_value = "1")]
        seeds: String,
        #[arg(long, default_value = "slam", value_parser = parse_pose_mode)]
        pose_mode: PoseMode,
        #[arg(long, default_value = "lidar", value_parser = parse_sensor)]
        sensor: SensorKind,
        /// Output directory; one `seed_*` run directory per seed.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the tracker over every seed directory under --out.
    Track {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Calibrate the background model and alarm threshold on a
    /// source-free variant of the scenario; writes background.txt.
    CalibrateBackground {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Target false-alarm rate, events per second of source-free data.
        #[arg(long, default_value_t = 1.0 / 600.0)]
        threshold_far: f64,
        /// Length of the calibration run, seconds.
        #[arg(long, default_value_t = 1800.0)]
        duration: f64,
        /// Sliding spectral window, seconds.
        #[arg(long, default_value_t = 2.0)]
        window: f64,
        #[arg(long, default_value_t = 999_983)]
        seed: u64,
    },
    /// Detect alarms and attribute each encounter to a track.
    Adjudicate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Optimize integration windows for attributed encounters and compare
    /// against fixed windows.
    Optimize {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override the MCMC walker count.
        #[arg(long)]
        walkers: Option<usize>,
        /// Override the MCMC iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Export CSV plot bundles for every seed directory.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn parse_pose_mode(s: &str) -> Result<PoseMode, String> {
    PoseMode::parse(s).ok_or_else(|| format!("unknown pose mode '{s}' (slam|ins)"))
}

fn parse_sensor(s: &str) -> Result<SensorKind, String> {
    SensorKind::parse(s).ok_or_else(|| format!("unknown sensor '{s}' (video|lidar)"))
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, Error> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let lo: u64 = a
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("bad seed range start '{a}'")))?;
        let hi: u64 = b
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("bad seed range end '{b}'")))?;
        if hi <= lo {
            return Err(Error::validation("empty seed range"));
        }
        return Ok((lo..hi).collect());
    }
    let seeds: Vec<u64> = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::validation(format!("bad seed '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err(Error::validation("no seeds given"));
    }
    Ok(seeds)
}

/// Seed run directories under `out`, sorted by name.
fn seed_dirs(out: &Path) -> Result<Vec<PathBuf>, Error> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(out)
        .map_err(|e| Error::io(out.display().to_string(), e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .map(|n| n.to_string_lossy().starts_with("seed_"))
                    .unwrap_or(false)
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingStage(format!(
            "simulate (no seed_* directories under {})",
            out.display()
        )));
    }
    Ok(dirs)
}

/// Run `f` over `items` with up to `jobs` worker threads; the first error
/// wins and stops the batch.
fn for_each_parallel<T, F>(items: &[T], jobs: usize, f: F) -> Result<(), Error>
where
    T: Sync,
    F: Fn(&T) -> Result<(), Error> + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        for item in items {
            f(item)?;
        }
        return Ok(());
    }
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                if failure.lock().unwrap().is_some() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                if let Err(e) = f(&items[i]) {
                    *failure.lock().unwrap() = Some(e);
                    break;
                }
            });
        }
    });
    match failure.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            scenario,
            seeds,
            pose_mode,
            sensor,
            out,
            jobs,
        } => {
            let config = pipeline::resolve_scenario(&scenario)?;
            let seeds = parse_seeds(&seeds)?;
            for_each_parallel(&seeds, jobs, |&seed| {
                let dir = out.join(format!("seed_{seed:06}"));
                pipeline::run_simulate(&config, seed, sensor, pose_mode, &dir)
            })?;
            println!("simulated {} seed(s) into {}", seeds.len(), out.display());
            Ok(())
        }
        Command::Track { out, jobs } => {
            let dirs = seed_dirs(&out)?;
            for_each_parallel(&dirs, jobs, |dir| pipeline::run_track(dir))?;
            println!("tracked {} run(s)", dirs.len());
            Ok(())
        }
        Command::CalibrateBackground {
            scenario,
            out,
            threshold_far,
            duration,
            window,
            seed,
        } => {
            let config = pipeline::resolve_scenario(&scenario)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
            let (_, threshold) =
                pipeline::run_calibrate(&config, duration, threshold_far, window, seed, &out)?;
            println!(
                "calibrated threshold {threshold} ({} s source-free run) -> {}",
                duration,
                out.join(files::BACKGROUND).display()
            );
            Ok(())
        }
        Command::Adjudicate { out, jobs } => {
            let dirs = seed_dirs(&out)?;
            for_each_parallel(&dirs, jobs, |dir| {
                pipeline::run_adjudicate(dir, &out).map(|_| ())
            })?;
            let (correct, total) = pipeline::write_batch_summary(&out, &dirs)?;
            println!("attributed {correct}/{total}");
            Ok(())
        }
        Command::Optimize {
            out,
            jobs,
            walkers,
            iterations,
        } => {
            let dirs = seed_dirs(&out)?;
            let mut mcmc = McmcConfig::default();
            if let Some(w) = walkers {
                mcmc.walkers = w;
            }
            if let Some(n) = iterations {
                mcmc.iterations = n;
                mcmc.burn_in = (n / 4).max(1);
            }
            for_each_parallel(&dirs, jobs, |dir| {
                pipeline::run_optimize(dir, &out, Some(mcmc.clone()))
            })?;
            let summary = pipeline::write_optimize_summary(&out, &dirs)?;
            print!("{summary}");
            Ok(())
        }
        Command::Report { out, jobs } => {
            let dirs = seed_dirs(&out)?;
            for_each_parallel(&dirs, jobs, |dir| pipeline::run_report(dir, &out))?;
            println!("reports written for {} run(s)", dirs.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Validation(_) | Error::Parse { .. } => 2,
                Error::MissingStage(_) => 3,
                Error::Numerical(_) => 4,
                Error::Io { .. } => 1,
            };
            ExitCode::from(code)
        }
    }
}
