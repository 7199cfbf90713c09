use std::fs;

use bsm_nmpc::config::{ClockMode, ExperimentConfig};
use bsm_nmpc::error::Error;
use bsm_nmpc::plant::ModelKind;

#[test]
fn file_overrides_merge_onto_model_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(
        &path,
        "model = \"uav\"\nseeds = [1, 2, 3]\n[ga]\nepsilon = 0.25\n[clock]\nkind = \"virtual\"\nseconds_per_evaluation = 1e-4\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    let defaults = ExperimentConfig::for_model(ModelKind::Uav);
    assert_eq!(cfg.seeds, vec![1, 2, 3]);
    assert_eq!(cfg.ga.epsilon, 0.25);
    assert_eq!(cfg.ga.nu, defaults.ga.nu);
    assert_eq!(cfg.clock, ClockMode::Virtual { seconds_per_evaluation: 1e-4 });
    assert_eq!(cfg.noise, defaults.noise);
}

#[test]
fn syntax_errors_carry_path_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "model = \"sfjr\"\ncycles = 10\n[ga\nnu = 3\n").unwrap();
    match ExperimentConfig::load(&path) {
        Err(Error::Parse { path: p, line, .. }) => {
            assert_eq!(p, path);
            assert_eq!(line, 3);
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn invalid_values_are_rejected() {
    let origin = std::path::Path::new("x.toml");
    for text in [
        "model = \"sfjr\"\ncycles = 0\n",
        "model = \"sfjr\"\nseeds = []\n",
        "model = \"sfjr\"\n[ga]\nxi = 500\n",
        "model = \"sfjr\"\n[noise]\nrho = 1.5\n",
        "model = \"sfjr\"\n[learner]\ntune = true\nfolds = 1\n",
        "model = \"vehicle\"\n[[learner.svr]]\nc = 1.0\n",
        "model = \"submarine\"\n",
    ] {
        assert!(ExperimentConfig::from_toml_str(text, origin).is_err(), "accepted:\n{text}");
    }
}

#[test]
fn missing_file_is_an_io_error_naming_it() {
    let err = ExperimentConfig::load(std::path::Path::new("/nonexistent/run.toml")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/run.toml"), "{err}");
}
