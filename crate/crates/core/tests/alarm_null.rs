//! Null-rate behavior of the alarm detector: a threshold calibrated for
//! one false alarm per 600 s produces about one alarm on an independent
//! source-free 600 s run.

mod common;

use radtrack_core::anomaly::{calibrate_threshold, detect_alarms, merge_encounters, Roi};
use radtrack_core::pipeline::scenario_response;
use radtrack_core::scene::{generate_truth, presets, synthesize_counts};

#[test]
fn calibrated_false_alarm_rate_holds_on_fresh_run() {
    let cfg = presets::by_name("source-free").unwrap();
    let truth = generate_truth(&cfg).unwrap();
    let (_, response) = scenario_response(&cfg).unwrap();
    let roi = Roi::cs137();

    // Calibrate on one 600 s run for one event per 600 s.
    let calib = synthesize_counts(&truth, &response, None, &cfg, 999_983).unwrap();
    let background = radtrack_core::anomaly::BackgroundModel::estimate(&calib).unwrap();
    let threshold = calibrate_threshold(&calib, &background, 2.0, &roi, 1).unwrap();

    // Count encounters on independent source-free runs: the 99% Poisson
    // band around a mean of one is 0..=4.
    for seed in [7u64, 21] {
        let records = synthesize_counts(&truth, &response, None, &cfg, seed).unwrap();
        let events = detect_alarms(&records, &background, threshold, 2.0, &roi);
        let encounters = merge_encounters(&events).len();
        assert!(
            encounters <= 4,
            "seed {seed}: {encounters} false encounters at threshold {threshold}"
        );
    }

    // Raising the threshold can only remove alarms.
    let records = synthesize_counts(&truth, &response, None, &cfg, 7).unwrap();
    let lo = detect_alarms(&records, &background, threshold, 2.0, &roi).len();
    let hi = detect_alarms(&records, &background, threshold * 1.5, 2.0, &roi).len();
    assert!(hi <= lo);
}
