//! Track-informed integration windows: the sensitivity functional, exact
//! subset optimization per detector and across the array, spectrum
//! assembly for selected windows, and the comparison against fixed
//! integration windows.

pub mod mcmc;

pub use mcmc::{mcmc_refine, sample_ensemble, McmcConfig, RefineResult};

/// Negative Poisson log-likelihood (element-wise over a count series).
pub use crate::stats::poisson_neg_log_like as neg_log_like;

use crate::anomaly::{anomaly_value, BackgroundModel};
use crate::attribution::{EncounterWindow, TrackModel};
use crate::error::{Error, Result};
use crate::types::NUM_DETECTORS;

/// Largest series optimized by exhaustive subset enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 20;

/// One candidate time segment for a detector: an analysis bin with its
/// duration and geometric weight `w = eps * transmission / (4 pi r^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Analysis-bin index on the shared encounter grid.
    pub bin: usize,
    pub dt: f64,
    pub w: f64,
}

/// The segment series of one detector.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSeries {
    pub detector: usize,
    pub segments: Vec<Segment>,
}

/// Sensitivity of a segment subset: `sum(w dt) / sqrt(sum(dt))`; an empty
/// selection scores zero.
pub fn sensitivity(segments: &[Segment], selected: &[usize]) -> f64 {
    let mut num = 0.0;
    let mut dur = 0.0;
    for &i in selected {
        num += segments[i].w * segments[i].dt;
        dur += segments[i].dt;
    }
    if dur > 0.0 {
        num / dur.sqrt()
    } else {
        0.0
    }
}

/// `true` when `(value_a, set_a)` beats the incumbent under the tie-break
/// rule: larger sensitivity, then fewer segments, then the
/// lexicographically smallest index list.
#[cfg(test)]
fn beats(value_a: f64, set_a: &[usize], value_b: f64, set_b: &[usize]) -> bool {
    if value_a != value_b {
        return value_a > value_b;
    }
    if set_a.len() != set_b.len() {
        return set_a.len() < set_b.len();
    }
    set_a < set_b
}

/// Maximize the sensitivity over subsets of one series. Uniform-duration
/// series are solved exactly by a top-k prefix scan; mixed durations use
/// exhaustive enumeration up to `EXHAUSTIVE_LIMIT` segments and fall back
/// to the prefix scan over the weight ordering beyond that.
pub fn optimize_window(series: &SegmentSeries) -> (Vec<usize>, f64) {
    let segments = &series.segments;
    if segments.is_empty() {
        return (Vec::new(), 0.0);
    }
    let uniform = segments
        .windows(2)
        .all(|p| (p[0].dt - p[1].dt).abs() < 1e-12);
    if !uniform && segments.len() <= EXHAUSTIVE_LIMIT {
        return exhaustive_best(segments);
    }
    prefix_scan(segments)
}

/// Top-k prefix scan over segments ordered by descending weight (ties by
/// ascending index). Exact for uniform durations.
fn prefix_scan(segments: &[Segment]) -> (Vec<usize>, f64) {
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&a, &b| {
        segments[b]
            .w
            .partial_cmp(&segments[a].w)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut num = 0.0;
    let mut dur = 0.0;
    let mut best_value = f64::NEG_INFINITY;
    let mut best_k = 0;
    for (k, &idx) in order.iter().enumerate() {
        num += segments[idx].w * segments[idx].dt;
        dur += segments[idx].dt;
        let value = num / dur.sqrt();
        if value > best_value {
            best_value = value;
            best_k = k + 1;
        }
    }
    let mut selected: Vec<usize> = order[..best_k].to_vec();
    selected.sort_unstable();
    (selected, best_value)
}

/// Exhaustive subset enumeration with incremental sums; applies the same
/// tie-break rule as the rest of the optimizer.
fn exhaustive_best(segments: &[Segment]) -> (Vec<usize>, f64) {
    let n = segments.len();
    assert!(n <= EXHAUSTIVE_LIMIT);
    let size = 1usize << n;
    let mut wsum = vec![0.0_f64; size];
    let mut tsum = vec![0.0_f64; size];
    let mut best_mask = 0usize;
    let mut best_value = f64::NEG_INFINITY;
    for mask in 1..size {
        let low = mask & mask.wrapping_neg();
        let idx = low.trailing_zeros() as usize;
        wsum[mask] = wsum[mask ^ low] + segments[idx].w * segments[idx].dt;
        tsum[mask] = tsum[mask ^ low] + segments[idx].dt;
        let value = wsum[mask] / tsum[mask].sqrt();
        let better = if value != best_value {
            value > best_value
        } else {
            let (ca, cb) = (mask.count_ones(), best_mask.count_ones());
            if ca != cb {
                ca < cb
            } else {
                // Equal cardinality: the lexicographically smaller index
                // list owns the lowest differing bit.
                let diff = mask ^ best_mask;
                let lowest = diff & diff.wrapping_neg();
                mask & lowest != 0
            }
        };
        if better {
            best_mask = mask;
            best_value = value;
        }
    }
    let selected: Vec<usize> = (0..n).filter(|i| best_mask >> i & 1 == 1).collect();
    (selected, best_value)
}

/// Joint selection across the array: per-detector subsets of time bins.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalWindow {
    /// Selected analysis-bin indices per detector.
    pub per_detector: Vec<Vec<usize>>,
    /// Sensitivity of the concatenated selection.
    pub sensitivity: f64,
    /// Total selected duration summed across detectors, s.
    pub total_duration: f64,
}

impl OptimalWindow {
    pub fn detectors_used(&self) -> Vec<usize> {
        (0..self.per_detector.len())
            .filter(|&d| !self.per_detector[d].is_empty())
            .collect()
    }
}

/// Concatenate every detector's segments, optimize the subset over the
/// concatenation, and split the selection back per detector. Detectors may
/// contribute zero segments.
pub fn optimize_array(series: &[SegmentSeries]) -> OptimalWindow {
    let mut merged: Vec<Segment> = Vec::new();
    let mut owner: Vec<(usize, usize)> = Vec::new();
    for s in series {
        for seg in &s.segments {
            merged.push(*seg);
            owner.push((s.detector, seg.bin));
        }
    }
    let n_det = series
        .iter()
        .map(|s| s.detector + 1)
        .max()
        .unwrap_or(0)
        .max(NUM_DETECTORS);
    let concatenated = SegmentSeries {
        detector: 0,
        segments: merged,
    };
    let (selected, value) = optimize_window(&concatenated);
    let mut per_detector = vec![Vec::new(); n_det];
    let mut total_duration = 0.0;
    for &i in &selected {
        let (det, bin) = owner[i];
        per_detector[det].push(bin);
        total_duration += concatenated.segments[i].dt;
    }
    for bins in &mut per_detector {
        bins.sort_unstable();
    }
    OptimalWindow {
        per_detector,
        sensitivity: value,
        total_duration,
    }
}

/// Geometric weight series per detector from a fitted track model
/// (covered bins only).
pub fn series_from_model(model: &TrackModel) -> Vec<SegmentSeries> {
    (0..model.g.len())
        .map(|d| SegmentSeries {
            detector: d,
            segments: model
                .covered
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c)
                .map(|(i, _)| Segment {
                    bin: i,
                    dt: model.dt,
                    w: model.g[d][i],
                })
                .collect(),
        })
        .collect()
}

/// Sum of per-detector weights per covered bin: the series of the array
/// treated as one monolithic detector.
pub fn summed_series(model: &TrackModel) -> SegmentSeries {
    SegmentSeries {
        detector: 0,
        segments: model
            .covered
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c)
            .map(|(i, _)| Segment {
                bin: i,
                dt: model.dt,
                w: model.g.iter().map(|row| row[i]).sum(),
            })
            .collect(),
    }
}

/// Channel-wise spectrum sum over the selected (detector, bin) pairs.
pub fn spectrum_for_window(window: &EncounterWindow, selection: &[Vec<usize>]) -> Vec<f64> {
    let n_ch = window
        .spectra
        .iter()
        .flatten()
        .map(|s| s.len())
        .max()
        .unwrap_or(0);
    let mut out = vec![0.0; n_ch];
    for (det, bins) in selection.iter().enumerate() {
        for &bin in bins {
            for (c, &v) in window.spectra[det][bin].iter().enumerate() {
                out[c] += v as f64;
            }
        }
    }
    out
}

/// One row of the window-method comparison.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub method: String,
    pub anomaly_value: f64,
    pub duration_s: f64,
    pub detectors_used: Vec<usize>,
}

/// Compare the anomaly value of the per-detector optimal configuration,
/// the summed-array optimal window, and fixed windows centered on the
/// peak modeled rate.
pub fn compare_windows(
    window: &EncounterWindow,
    model: &TrackModel,
    optimal: &OptimalWindow,
    summed_bins: &[usize],
    fixed_seconds: &[f64],
    background: &BackgroundModel,
) -> Result<Vec<ComparisonRow>> {
    let n_bins = window.n_bins();
    if n_bins == 0 {
        return Err(Error::validation("empty encounter window"));
    }
    let mut rows = Vec::new();

    let spec = spectrum_for_window(window, &optimal.per_detector);
    rows.push(ComparisonRow {
        method: "optimal-config".to_string(),
        anomaly_value: anomaly_value(&spec, background),
        duration_s: optimal.total_duration,
        detectors_used: optimal.detectors_used(),
    });

    let all: Vec<Vec<usize>> = (0..NUM_DETECTORS).map(|_| summed_bins.to_vec()).collect();
    let spec = spectrum_for_window(window, &all);
    rows.push(ComparisonRow {
        method: "summed-array".to_string(),
        anomaly_value: anomaly_value(&spec, background),
        duration_s: summed_bins.len() as f64 * window.dt,
        detectors_used: (0..NUM_DETECTORS).collect(),
    });

    // Fixed windows sit on the bin of maximum total modeled source rate.
    let peak = (0..n_bins)
        .max_by(|&a, &b| {
            let ra: f64 = (0..NUM_DETECTORS).map(|d| model.g[d][a]).sum();
            let rb: f64 = (0..NUM_DETECTORS).map(|d| model.g[d][b]).sum();
            ra.partial_cmp(&rb).unwrap()
        })
        .unwrap();
    for &secs in fixed_seconds {
        let len = ((secs / window.dt).round().max(1.0) as usize).min(n_bins);
        let start = peak.saturating_sub(len / 2).min(n_bins - len);
        let bins: Vec<usize> = (start..start + len).collect();
        let all: Vec<Vec<usize>> = (0..NUM_DETECTORS).map(|_| bins.clone()).collect();
        let spec = spectrum_for_window(window, &all);
        rows.push(ComparisonRow {
            method: format!("fixed-{secs:.0}s"),
            anomaly_value: anomaly_value(&spec, background),
            duration_s: bins.len() as f64 * window.dt,
            detectors_used: (0..NUM_DETECTORS).collect(),
        });
    }
    Ok(rows)
}
