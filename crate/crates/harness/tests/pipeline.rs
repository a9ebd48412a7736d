use proptest::prelude::*;

use mvtwin_core::Quantity;
use mvtwin_harness::config::MeasurementSettings;
use mvtwin_harness::report::{format_percent, read_report_json, report_rows};
use mvtwin_harness::{
    find_scenario, run_scenario, run_trial_detailed, trial_seed, write_report, ScenarioConfig, TrialCount,
};

fn small(id: &str, fs: f64) -> ScenarioConfig {
    ScenarioConfig::custom(id, fs).with_trials(2).with_seed(11)
}

#[test]
fn same_seed_same_report() {
    let c = small("det", 10_000.0);
    let a = run_scenario(&c).unwrap();
    let b = run_scenario(&c).unwrap();
    assert_eq!(a, b);
    let d = run_scenario(&c.clone().with_seed(12)).unwrap();
    assert_ne!(a.stats, d.stats);
}

#[test]
fn noiseless_fast_sampling_is_accurate() {
    let mut c = small("clean", 52_000.0);
    c.measurement = MeasurementSettings::default().noiseless();
    let r = run_scenario(&c).unwrap();
    let v = r.mean(Quantity::V).unwrap();
    assert!(v < 0.01, "V error {v}");
    assert!(r.mean(Quantity::Fv).unwrap() < 1e-4);
}

#[test]
fn single_trial_report_is_that_trial() {
    let c = small("one", 10_000.0).with_trials(1);
    let r = run_scenario(&c).unwrap();
    let t = run_trial_detailed(&c, 0, trial_seed(c.seed, &c.id, 0)).unwrap();
    for (q, e) in &t.errors.errors {
        if !e.low_signal {
            assert_eq!(r.mean(*q), Some(e.avg_error), "{q}");
        }
    }
    assert_eq!(r.trials.len(), 1);
    assert_eq!(r.trials[0], t);
}

#[test]
fn loose_confidence_target_stops_at_minimum() {
    let mut c = small("conf", 5_000.0);
    c.trials = TrialCount::Confidence {
        min: 3,
        max: 60,
        relative_half_width: 1e9,
    };
    let r = run_scenario(&c).unwrap();
    assert_eq!(r.provenance.trials, 3);
    let conf = r.stats.confidence.unwrap();
    assert!(conf.target_met);
}

#[test]
fn report_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(&small("persist", 5_000.0)).unwrap();
    let written = write_report(dir.path(), &r).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into()).collect();
    assert_eq!(names, ["persist.csv", "persist_trials.csv", "persist.json"]);
    let back = read_report_json(&dir.path().join("persist.json")).unwrap();
    assert_eq!(back.stats, r.stats);
    assert_eq!(back.provenance, r.provenance);
    assert!(back.trials.is_empty());
    assert_eq!(back.artifacts, ["persist.csv", "persist_trials.csv"]);
    let csv = std::fs::read_to_string(dir.path().join("persist.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + report_rows(&r).len());
}

#[test]
fn unknown_ids_and_bad_configs_are_validation_errors() {
    assert!(find_scenario("normal-const-harm-7k").unwrap_err().is_validation());
    let mut c = small("bad", 10_000.0);
    c.fs = -1.0;
    assert!(run_scenario(&c).unwrap_err().is_validation());
    let c = small("bad", 10_000.0).with_trials(0);
    assert!(run_scenario(&c).unwrap_err().is_validation());
}

proptest! {
    #[test]
    fn trial_seeds_differ(seed in any::<u64>(), a in 0u64..10_000, b in 0u64..10_000) {
        prop_assume!(a != b);
        prop_assert_ne!(trial_seed(seed, "x", a), trial_seed(seed, "x", b));
        prop_assert_ne!(trial_seed(seed, "x", a), trial_seed(seed, "y", a));
    }

    #[test]
    fn percent_format(x in 0.0f64..1.0) {
        let s = format_percent(Some(x));
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - 100.0 * x).abs() <= 0.0005 + 1e-12);
    }

    #[test]
    fn percent_format_caps(x in 1.0f64..1e9) {
        prop_assume!(x > 1.0);
        prop_assert_eq!(format_percent(Some(x)), ">100");
    }
}
