use std::path::Path;

use walkforge::config::{load_config, ConfigError, KeyProblem};

fn write(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("walkforge.conf");
    std::fs::write(&p, text).unwrap();
    p
}

fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn empty_file_gives_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&write(dir.path(), ""), env(&[])).unwrap();
    assert_eq!(cfg.threshold_deg, 45.0);
    assert_eq!(cfg.nominal_speed_mps, 1.42);
    assert_eq!(cfg.sample_period_s, 2.0);
    assert_eq!(cfg.spacing_m, 1.5);
    assert_eq!(cfg.merge_min_shared, 4);
    assert_eq!(cfg.data_dir, std::path::absolute(dir.path()).unwrap().join("data"));
}

#[test]
fn environment_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "# tuned\nspacing_m = 2.0\n");
    assert_eq!(load_config(&p, env(&[])).unwrap().spacing_m, 2.0);
    let cfg = load_config(&p, env(&[("WALKFORGE_SPACING_M", "1.0"), ("OTHER_SPACING_M", "9")])).unwrap();
    assert_eq!(cfg.spacing_m, 1.0);
}

#[test]
fn every_bad_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "threshold_deg = 400\ncolour = blue\neps_m = wide\n");
    let err = load_config(&p, env(&[])).unwrap_err();
    assert_eq!(
        err.problems(),
        [
            KeyProblem::UnknownKey("colour".into()),
            KeyProblem::BadValue { key: "eps_m".into(), value: "wide".into() },
            KeyProblem::OutOfRange("threshold_deg".into()),
        ]
    );
}

#[test]
fn missing_file() {
    let err = load_config(Path::new("/nonexistent/walkforge.conf"), env(&[])).unwrap_err();
    assert!(matches!(err, ConfigError::Io { .. }));
}
