use std::path::Path;

use adaptive_sst::config::{ExperimentConfig, SigmaPolicy};
use adaptive_sst::estimation::SigmaGrid;
use adaptive_sst::experiment::run_experiment;
use adaptive_sst::Error;

fn parse(text: &str, dir: &Path) -> ExperimentConfig {
    ExperimentConfig::parse(text, Path::new("test.toml"), dir).unwrap()
}

#[test]
fn two_chirp_oracle_width_tracks_both_ifs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse(
        r#"
        [signal]
        builtin = "two-chirp"
        [transform]
        variant = "adp-fsst2"
        [sigma]
        policy = "sigma2"
        [output]
        dir = "out"
        csv = true
        "#,
        dir.path(),
    );
    let report = run_experiment(&cfg).unwrap();
    let comps = report.components.as_ref().unwrap();
    assert_eq!(comps.len(), 2);
    for c in comps {
        assert!(c.if_error_median_bins.unwrap() < 1.0, "{c:?}");
    }
    for a in &report.artifacts {
        assert!(a.is_file(), "{}", a.display());
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(json["sigma"]["sigma"].as_array().unwrap().len(), 256);
    assert_eq!(json["entropy"]["sst"].as_array().unwrap().len(), 256);
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let text = |out: &str| {
        format!(
            r#"
            [signal]
            builtin = "two-chirp"
            [sigma]
            policy = "sigma-est"
            [estimator]
            sigma_grid = {{ max = 0.1, min = 0.005, step = 0.005 }}
            [noise]
            snr_db = [10]
            seed = 7
            runs = 1
            [output]
            dir = "{out}"
            pgm = false
            "#
        )
    };
    let a = run_experiment(&parse(&text("a"), dir.path())).unwrap();
    let b = run_experiment(&parse(&text("b"), dir.path())).unwrap();
    let strip = |r: &adaptive_sst::experiment::Report| {
        let mut v = serde_json::to_value(r).unwrap();
        v.as_object_mut().unwrap().remove("artifacts");
        v
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.rmse_table.unwrap().methods.len(), 4);
}

#[test]
fn invalid_policy_is_a_config_error() {
    let r = ExperimentConfig::parse("[sigma]\npolicy = \"sharpest\"\n", Path::new("x.toml"), Path::new("."));
    match r {
        Err(Error::Config { field, .. }) => assert_eq!(field, "sigma.policy"),
        other => panic!("{other:?}"),
    }
}

/// Monte-Carlo comparison on the three-component signal. The width grid is
/// coarsened to 5 ms steps to keep the 100 squeezes affordable.
#[test]
fn method_table_has_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse(
        r#"
        [signal]
        builtin = "three-component"
        [sigma]
        policy = "sigma-est2"
        [noise]
        snr_db = [0, 5, 10, 15, 20]
        seed = 1
        runs = 5
        [output]
        dir = "out"
        pgm = false
        "#,
        dir.path(),
    );
    cfg.estimator.sigma_grid = SigmaGrid::new(0.2, 0.005, 0.005).unwrap();
    assert_eq!(cfg.policy, SigmaPolicy::SigmaEst2);
    let table = run_experiment(&cfg).unwrap().rmse_table.unwrap();
    assert_eq!(table.methods.len(), 4);
    for m in &table.methods {
        assert_eq!(m.rmse.len(), 5);
        for &v in &m.rmse {
            assert!((0.0..=1.5).contains(&v), "{} {v}", m.label);
        }
    }
}
