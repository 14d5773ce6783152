//! Spectroscopic anomaly detection: the anomaly-value statistic, sliding
//! per-detector alarms, and threshold calibration against a configured
//! false-alarm rate.
//!
//! The anomaly value is the Poisson deviance between an observed spectrum
//! and the mean background spectrum scaled to match the observed total.
//! It serves both as the alarm statistic and as the detection-sensitivity
//! proxy for the integration-window comparisons.

use crate::error::{Error, Result};
use crate::scene::CountRecord;
use crate::spectrum;
use crate::stats::poisson_deviance;
use crate::types::NUM_DETECTORS;

/// Energy region of interest mapped onto the spectrum channel grid.
/// Fractional channel edges round to the nearest channel boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    pub isotope: String,
    pub e_lo_kev: f64,
    pub e_hi_kev: f64,
    /// Channel range `[ch_lo, ch_hi)` covering the ROI.
    pub ch_lo: usize,
    pub ch_hi: usize,
}

impl Roi {
    pub fn from_bounds(isotope: &str, e_lo_kev: f64, e_hi_kev: f64) -> Result<Self> {
        if e_lo_kev >= e_hi_kev {
            return Err(Error::validation(format!(
                "roi bounds must satisfy lower < upper (got {e_lo_kev}..{e_hi_kev})"
            )));
        }
        if e_lo_kev < 0.0 || e_hi_kev > spectrum::E_MAX_KEV {
            return Err(Error::validation(format!(
                "roi {e_lo_kev}..{e_hi_kev} keV outside the 0..{} keV spectrum",
                spectrum::E_MAX_KEV
            )));
        }
        let ch_lo = spectrum::boundary_of(e_lo_kev);
        let ch_hi = spectrum::boundary_of(e_hi_kev);
        if ch_lo >= ch_hi {
            return Err(Error::validation("roi narrower than one channel"));
        }
        Ok(Roi {
            isotope: isotope.to_string(),
            e_lo_kev,
            e_hi_kev,
            ch_lo,
            ch_hi,
        })
    }

    /// The Cs-137 photopeak window, 600-725 keV.
    pub fn cs137() -> Self {
        Roi::from_bounds("cs137", 600.0, 725.0).expect("built-in roi")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "cs137" => Ok(Roi::cs137()),
            other => Err(Error::validation(format!("unknown roi '{other}'"))),
        }
    }

    pub fn channel_count(&self) -> usize {
        self.ch_hi - self.ch_lo
    }
}

/// Counts within the ROI channels of a spectrum.
pub fn roi_counts(spec: &[u32], roi: &Roi) -> Result<u64> {
    if roi.ch_hi > spec.len() {
        return Err(Error::validation("roi outside spectrum"));
    }
    Ok(spec[roi.ch_lo..roi.ch_hi].iter().map(|&c| c as u64).sum())
}

/// Mean background: a normalized spectral shape plus per-detector ROI rates.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    /// Mean background spectrum shape, normalized to unit sum.
    pub shape: Vec<f64>,
    /// Mean ROI rate per detector, counts/s.
    pub roi_rates: Vec<f64>,
}

impl BackgroundModel {
    /// Background model straight from configured rates (generator's shape).
    pub fn from_rates(roi_rates: Vec<f64>) -> Self {
        BackgroundModel {
            shape: spectrum::background_shape(),
            roi_rates,
        }
    }

    /// Estimate shape and per-detector ROI rates from a source-free run.
    pub fn estimate(records: &[CountRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::validation("cannot calibrate from an empty run"));
        }
        let n_ch = records[0].spectrum.len();
        let mut shape = vec![0.0; n_ch];
        let mut roi_sum = vec![0.0; NUM_DETECTORS];
        let mut live = vec![0.0; NUM_DETECTORS];
        for r in records {
            for (c, &v) in r.spectrum.iter().enumerate() {
                shape[c] += v as f64;
            }
            roi_sum[r.detector] += r.roi_counts as f64;
            live[r.detector] += r.dt;
        }
        let total: f64 = shape.iter().sum();
        if total <= 0.0 {
            return Err(Error::validation("source-free run has no counts"));
        }
        for v in &mut shape {
            *v /= total;
        }
        let roi_rates = roi_sum
            .iter()
            .zip(&live)
            .map(|(&s, &t)| if t > 0.0 { s / t } else { 0.0 })
            .collect();
        Ok(BackgroundModel { shape, roi_rates })
    }
}

/// Poisson deviance between `observed` and the background shape scaled to
/// the observed total. Zero-total observations score 0 by convention.
pub fn anomaly_value(observed: &[f64], background: &BackgroundModel) -> f64 {
    let total: f64 = observed.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let scaled: Vec<f64> = background.shape.iter().map(|&s| s * total).collect();
    poisson_deviance(observed, &scaled)
}

/// One per-detector alarm interval.
#[derive(Debug, Clone, PartialEq)]
pub struct AlarmEvent {
    pub detector: usize,
    pub start: f64,
    pub stop: f64,
    pub isotope: String,
    pub peak_value: f64,
}

/// Scan each detector with a sliding spectral window (length `window_s`)
/// and open an alarm whenever the anomaly value exceeds `threshold`.
/// Events are the unions of consecutive exceeding window spans, ordered by
/// (detector, start).
pub fn detect_alarms(
    records: &[CountRecord],
    background: &BackgroundModel,
    threshold: f64,
    window_s: f64,
    roi: &Roi,
) -> Vec<AlarmEvent> {
    let mut events = Vec::new();
    for det in 0..NUM_DETECTORS {
        let series = detector_series(records, det);
        if series.is_empty() {
            continue;
        }
        let dt = records[series[0]].dt;
        let wb = (window_s / dt).round().max(1.0) as usize;
        let values = window_values(records, &series, background, wb);
        let mut open: Option<AlarmEvent> = None;
        for (i, &v) in values.iter().enumerate() {
            // Window i covers bins [i, i + wb).
            let t_start = records[series[i]].t0;
            let t_stop = records[series[i + wb - 1]].t0 + dt;
            if v > threshold {
                match &mut open {
                    Some(e) => {
                        e.stop = t_stop;
                        e.peak_value = e.peak_value.max(v);
                    }
                    None => {
                        open = Some(AlarmEvent {
                            detector: det,
                            start: t_start,
                            stop: t_stop,
                            isotope: roi.isotope.clone(),
                            peak_value: v,
                        });
                    }
                }
            } else if let Some(e) = open.take() {
                events.push(e);
            }
        }
        if let Some(e) = open.take() {
            events.push(e);
        }
    }
    events
}

/// Merge per-detector alarm events into encounter spans (union of
/// overlapping intervals across detectors), ordered by start time.
pub fn merge_encounters(events: &[AlarmEvent]) -> Vec<(f64, f64)> {
    let mut intervals: Vec<(f64, f64)> = events.iter().map(|e| (e.start, e.stop)).collect();
    intervals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (start, stop) in intervals {
        match merged.last_mut() {
            Some((_, last_stop)) if start <= *last_stop => {
                *last_stop = last_stop.max(stop);
            }
            _ => merged.push((start, stop)),
        }
    }
    merged
}

/// Calibrate the alarm threshold on a source-free run so that at most
/// `target_events` encounters fire over it. Walks candidate thresholds
/// downward from the largest observed window value and keeps the smallest
/// threshold whose encounter count stays within the target.
pub fn calibrate_threshold(
    records: &[CountRecord],
    background: &BackgroundModel,
    window_s: f64,
    roi: &Roi,
    target_events: usize,
) -> Result<f64> {
    let mut candidates: Vec<f64> = Vec::new();
    for det in 0..NUM_DETECTORS {
        let series = detector_series(records, det);
        if series.is_empty() {
            continue;
        }
        let wb = (window_s / records[series[0]].dt).round().max(1.0) as usize;
        candidates.extend(window_values(records, &series, background, wb));
    }
    if candidates.is_empty() {
        return Err(Error::validation("no count data to calibrate on"));
    }
    candidates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    candidates.dedup();

    let mut best = candidates[0] * 1.5; // above every observed value
    for &threshold in &candidates {
        let events = detect_alarms(records, background, threshold, window_s, roi);
        if merge_encounters(&events).len() <= target_events {
            best = threshold;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Indices of `records` belonging to `detector`, in time order.
fn detector_series(records: &[CountRecord], detector: usize) -> Vec<usize> {
    let mut series: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].detector == detector)
        .collect();
    series.sort_by(|&a, &b| records[a].t0.partial_cmp(&records[b].t0).unwrap());
    series
}

/// Anomaly value per sliding window position (window = `wb` bins). The
/// channel sums are integers held in f64, so the incremental update is
/// exact.
fn window_values(
    records: &[CountRecord],
    series: &[usize],
    background: &BackgroundModel,
    wb: usize,
) -> Vec<f64> {
    if series.len() < wb {
        return Vec::new();
    }
    let n_ch = records[series[0]].spectrum.len();
    let mut sums = vec![0.0_f64; n_ch];
    let mut out = Vec::with_capacity(series.len() - wb + 1);
    for i in 0..series.len() {
        for (c, &v) in records[series[i]].spectrum.iter().enumerate() {
            sums[c] += v as f64;
        }
        if i + 1 >= wb {
            if i + 1 > wb {
                for (c, &v) in records[series[i - wb]].spectrum.iter().enumerate() {
                    sums[c] -= v as f64;
                }
            }
            out.push(anomaly_value(&sums, background));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seed_stream;
    use rand_distr::{Distribution, Poisson};

    fn flat_record(detector: usize, t0: f64, counts_per_channel: u32) -> CountRecord {
        let spectrum = vec![counts_per_channel; spectrum::CHANNELS];
        let roi = Roi::cs137();
        let roi_counts = roi_counts(&spectrum, &roi).unwrap();
        CountRecord {
            detector,
            t0,
            dt: 0.25,
            roi_counts,
            spectrum,
        }
    }

    #[test]
    fn roi_channel_arithmetic() {
        let roi = Roi::cs137();
        assert_eq!((roi.ch_lo, roi.ch_hi), (26, 31));
        assert_eq!(roi.channel_count(), 5);
        // Flat spectrum: one count per channel.
        let spec = vec![1u32; spectrum::CHANNELS];
        assert_eq!(roi_counts(&spec, &roi).unwrap(), 5);
        // Delta at 662 keV falls fully inside.
        let mut delta = vec![0u32; spectrum::CHANNELS];
        delta[spectrum::channel_of(662.0)] = 100;
        assert_eq!(roi_counts(&delta, &roi).unwrap(), 100);
        // Empty spectrum.
        assert_eq!(roi_counts(&vec![0; spectrum::CHANNELS], &roi).unwrap(), 0);
    }

    #[test]
    fn roi_validation() {
        assert!(Roi::from_bounds("x", 700.0, 600.0).is_err());
        assert!(Roi::from_bounds("x", 0.0, 5000.0).is_err());
        assert!(Roi::from_bounds("x", 600.0, 725.0).is_ok());
    }

    #[test]
    fn anomaly_zero_for_exact_shape_multiples() {
        let bg = BackgroundModel::from_rates(vec![50.0; 6]);
        for kappa in [1.0, 3.0, 17.0] {
            let obs: Vec<f64> = bg.shape.iter().map(|&s| s * kappa * 1000.0).collect();
            let v = anomaly_value(&obs, &bg);
            assert!(v.abs() < 1e-9, "kappa={kappa}: {v}");
        }
        assert_eq!(anomaly_value(&vec![0.0; spectrum::CHANNELS], &bg), 0.0);
    }

    #[test]
    fn photopeak_injection_beats_null_distribution() {
        let bg = BackgroundModel::from_rates(vec![50.0; 6]);
        let mut rng = seed_stream(99, "anomaly-null");
        let base_total = 500.0;
        let mut null_values: Vec<f64> = (0..2000)
            .map(|_| {
                let obs: Vec<f64> = bg
                    .shape
                    .iter()
                    .map(|&s| {
                        let lam = s * base_total;
                        if lam > 0.0 {
                            Poisson::new(lam).unwrap().sample(&mut rng)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                anomaly_value(&obs, &bg)
            })
            .collect();
        null_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p99 = null_values[(null_values.len() as f64 * 0.99) as usize];

        // Injected photopeak of 100 counts on top of a background draw.
        let peak = spectrum::photopeak_weights(26, 31);
        let obs: Vec<f64> = bg
            .shape
            .iter()
            .zip(&peak)
            .map(|(&s, &w)| {
                let lam = s * base_total;
                let b = if lam > 0.0 {
                    Poisson::new(lam).unwrap().sample(&mut rng)
                } else {
                    0.0
                };
                b + w * 100.0
            })
            .collect();
        let v = anomaly_value(&obs, &bg);
        assert!(v > p99, "injected value {v} <= null p99 {p99}");
    }

    #[test]
    fn infinite_threshold_never_alarms() {
        let records: Vec<CountRecord> = (0..40)
            .flat_map(|i| (0..6).map(move |d| flat_record(d, i as f64 * 0.25, 3)))
            .collect();
        let bg = BackgroundModel::from_rates(vec![50.0; 6]);
        let events = detect_alarms(&records, &bg, f64::INFINITY, 2.0, &Roi::cs137());
        assert!(events.is_empty());
    }

    #[test]
    fn alarms_monotone_in_threshold() {
        // A flat spectrum block disagrees with the background shape, so a
        // burst of flat bins drives the anomaly value up.
        let mut records = Vec::new();
        for i in 0..120 {
            for d in 0..6 {
                let c = if (50..58).contains(&i) && d == 2 {
                    40
                } else {
                    1
                };
                records.push(flat_record(d, i as f64 * 0.25, c));
            }
        }
        let bg = BackgroundModel::from_rates(vec![50.0; 6]);
        let lo = detect_alarms(&records, &bg, 100.0, 2.0, &Roi::cs137());
        let hi = detect_alarms(&records, &bg, 4000.0, 2.0, &Roi::cs137());
        assert!(hi.len() <= lo.len());
        // Exceedance windows shrink as the threshold rises.
        let span = |evs: &[AlarmEvent]| evs.iter().map(|e| e.stop - e.start).sum::<f64>();
        assert!(span(&hi) <= span(&lo));
    }

    #[test]
    fn merge_encounters_unions_overlaps() {
        let ev = |d: usize, a: f64, b: f64| AlarmEvent {
            detector: d,
            start: a,
            stop: b,
            isotope: "cs137".into(),
            peak_value: 1.0,
        };
        let merged = merge_encounters(&[ev(0, 1.0, 2.0), ev(3, 1.5, 3.0), ev(1, 5.0, 6.0)]);
        assert_eq!(merged, vec![(1.0, 3.0), (5.0, 6.0)]);
    }
}
