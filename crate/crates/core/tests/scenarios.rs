use std::path::PathBuf;

use aircomp_dp::sysconfig::parse_scenario;
use aircomp_dp::{load_scenario, Error, PowerPolicy, PrivacyTarget, SystemParams};

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn reference_scenario_matches_builtin_constants() {
    let s = load_scenario(scenario_path("reference.toml")).unwrap();
    assert_eq!(s.system, SystemParams::reference(5));
    assert_eq!(s.privacy, PrivacyTarget::new(0.01, 0.1, 5e-5).unwrap());
}

#[test]
fn bundled_scenarios_load() {
    for name in ["reference.toml", "tradeoff.toml", "power_sweep.toml", "train.toml"] {
        load_scenario(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn train_scenario_compares_both_policies() {
    let s = load_scenario(scenario_path("train.toml")).unwrap();
    assert_eq!(
        s.experiment.policies,
        [PowerPolicy::DpStarStar, PowerPolicy::Conventional]
    );
    assert_eq!(s.experiment.num_clients_grid, [5, 100]);
    assert!(!s.training.dataset.has_mnist());
}

#[test]
fn missing_file_is_io_error() {
    let err = load_scenario(scenario_path("does-not-exist.toml")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

#[test]
fn relative_dataset_paths_resolve_against_scenario_dir() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    let text = std::fs::read_to_string(scenario_path("reference.toml")).unwrap()
        + "\n[training.dataset]\nmnist_train_images = \"data/train-images\"\n";
    std::fs::write(&path, text).unwrap();
    let s = load_scenario(&path).unwrap();
    assert_eq!(
        s.training.dataset.mnist_train_images.as_deref(),
        Some(dir.path().join("data/train-images").as_path())
    );
}

#[test]
fn invalid_delta_names_the_field() {
    let text = std::fs::read_to_string(scenario_path("reference.toml"))
        .unwrap()
        .replace("delta = 0.1", "delta = 1.3");
    let err = parse_scenario(&text).unwrap_err();
    assert!(err.to_string().contains("privacy.delta"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let text = std::fs::read_to_string(scenario_path("reference.toml"))
        .unwrap()
        .replace("noise = \"on\"", "noise = \"on\"\nnoise_power_watts = 1.0");
    assert!(parse_scenario(&text).is_err());
}
