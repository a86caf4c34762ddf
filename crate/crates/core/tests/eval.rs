mod common;

use proptest::prelude::*;

use repwatch_core::eval::{
    delay_f1_sweep, evaluate_corpus, export_report, match_intervals, read_report, AblationRow, CorpusCache,
    MatchPolicy, ALL,
};
use repwatch_core::pipeline::PipelineConfig;
use repwatch_core::repdetect::compute_metrics;
use repwatch_core::synth::{generate_corpus, ExerciseProfile, NoiseProfile};
use repwatch_core::trace::OrientationSample;

#[test]
fn exported_tables_read_back() {
    let model = common::model();
    let corpus = generate_corpus(&ExerciseProfile::all(), 1, 3, NoiseProfile::default()).unwrap();
    let config = PipelineConfig::default();
    let mut report = evaluate_corpus(&corpus, model, model.ha_threshold, &MatchPolicy::default(), &config).unwrap();
    let cache = CorpusCache::build(&corpus, model, &config).unwrap();
    report.sweep = delay_f1_sweep(&cache, model, &[0.5, 0.7, 0.9]).unwrap();
    report.ablation = vec![AblationRow {
        features: "corr+rom".into(),
        exercise: ALL.into(),
        detections: 12,
        precision: 0.75,
        recall: 1.0 / 3.0,
        f1: 0.4615384615384615,
    }];
    assert_eq!(report.detection.len(), 6);
    assert_eq!(report.comparison.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    export_report(&report, dir.path()).unwrap();
    assert_eq!(read_report(dir.path()).unwrap(), report);
}

#[test]
fn metrics_of_a_sampled_v() {
    // 0 down to -40 and back over 2 s, 50 Hz
    let samples: Vec<OrientationSample> = (0..=100)
        .map(|i| {
            let t = i as f64 / 50.0;
            OrientationSample::new(t, -40.0 * (1.0 - (t - 1.0).abs()))
        })
        .collect();
    let m = compute_metrics(&samples, 0.0, 1.0, 2.0).unwrap();
    assert!((m.range_of_motion - 40.0).abs() < 1e-12);
    assert_eq!(m.duration, 2.0);
    assert!((m.mean_velocity - 40.0).abs() < 1e-12);
    assert_eq!((m.eccentric_duration, m.concentric_duration), (1.0, 1.0));
    assert!(compute_metrics(&samples, 1.0, 1.0, 2.0).is_err());
}

fn intervals() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..100.0, 0.1f64..5.0), 0..12)
        .prop_map(|v| v.into_iter().map(|(s, d)| (s, s + d)).collect())
}

proptest! {
    #[test]
    fn matching_is_one_to_one_and_overlapping(truth in intervals(), detected in intervals()) {
        let pairs = match_intervals(&truth, &detected);
        let mut ts: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let mut ds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        ts.dedup();
        ds.sort();
        ds.dedup();
        prop_assert_eq!(ts.len(), pairs.len());
        prop_assert_eq!(ds.len(), pairs.len());
        for (i, j) in pairs {
            let (t, d) = (truth[i], detected[j]);
            prop_assert!(t.0.max(d.0) < t.1.min(d.1));
        }
    }

    #[test]
    fn identical_lists_match_fully(truth in intervals()) {
        // disjoint copies so every interval has exactly one best partner
        let spaced: Vec<(f64, f64)> = truth.iter().enumerate().map(|(i, (s, e))| (s + 200.0 * i as f64, e + 200.0 * i as f64)).collect();
        let pairs = match_intervals(&spaced, &spaced);
        prop_assert_eq!(pairs, (0..spaced.len()).map(|i| (i, i)).collect::<Vec<_>>());
    }
}
