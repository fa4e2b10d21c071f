use std::path::PathBuf;

use spiked_detect::harness::{run_trials, Experiment, SimConfig};

fn preset_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

fn presets() -> Vec<(String, SimConfig)> {
    let mut out: Vec<(String, SimConfig)> = std::fs::read_dir(preset_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let config = SimConfig::from_file(&p).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, config)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn every_preset_parses() {
    let all = presets();
    assert!(all.len() >= 10);
    let kinds: Vec<Experiment> = all.iter().map(|(_, c)| c.experiment).collect();
    for k in [
        Experiment::BbpOutliers,
        Experiment::WeakDetection,
        Experiment::RankEstimation,
        Experiment::CltNull,
    ] {
        assert!(kinds.contains(&k));
    }
}

#[test]
fn presets_run_at_reduced_scale() {
    for (name, mut c) in presets() {
        c.model.n = (c.model.n / 8).max(16);
        c.model.m = c.model.m.map(|m| (m / 8).max(8));
        c.trials = 4;
        c.snr_grid.truncate(2);
        let s = run_trials(&c).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!s.points.is_empty(), "{name}");
        for p in &s.points {
            assert_eq!(p.trials, 4, "{name}");
        }
    }
}

#[test]
fn bbp_presets_expect_three_transformed_outliers() {
    for (name, c) in presets() {
        if c.experiment != Experiment::BbpOutliers {
            continue;
        }
        let mut small = c.clone();
        small.trials = 1;
        small.model.n = 64;
        small.model.m = c.model.m.map(|_| 32);
        let s = run_trials(&small).unwrap();
        let expected = if c.transform.enabled { 3 } else { 0 };
        assert_eq!(s.points[0].expected_outliers, Some(expected), "{name}");
    }
}
