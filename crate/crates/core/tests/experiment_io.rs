use std::fs;
use std::path::{Path, PathBuf};

use cdpq::experiment::{run_rb, run_spectrum, verify_dir, write_config_record};
use cdpq::io::{KvRecord, MatrixText};
use cdpq::parallel::with_workers;
use cdpq::ExperimentConfig;

fn reference_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    ExperimentConfig::load(&path).unwrap()
}

fn small_rb(cfg: &mut ExperimentConfig) {
    cfg.rb.lengths = vec![2, 4, 8, 16];
    cfg.rb.n_random = 30;
}

/// Data files only; manifests carry wall-clock timestamps.
fn payloads(dir: &Path) -> Vec<(PathBuf, String)> {
    let mut v: Vec<(PathBuf, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.file_name().unwrap().to_string_lossy().starts_with("manifest_"))
        .map(|p| (PathBuf::from(p.file_name().unwrap()), fs::read_to_string(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn sample_config_equals_defaults() {
    assert_eq!(reference_config(), ExperimentConfig::default());
}

#[test]
fn every_artifact_carries_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference_config();
    cfg.seed = 77;
    write_config_record(&cfg, dir.path()).unwrap();
    let rec = run_spectrum(&cfg, dir.path()).unwrap();
    assert_eq!(rec.seed, 77);
    let hash = cfg.hash().unwrap();
    for (p, text) in payloads(dir.path()) {
        assert!(text.contains(&format!("# config_hash: {hash}")), "{}", p.display());
        assert!(text.contains("# seed: 77"), "{}", p.display());
    }
    let checks = verify_dir(dir.path(), Some(&cfg)).unwrap();
    assert!(checks.len() >= 3);
    assert!(checks
        .iter()
        .all(|(_, v)| v.payload_ok && v.config_hash == hash && v.seed == 77));
}

#[test]
fn spectrum_file_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config();
    run_spectrum(&cfg, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("spectrum.dat")).unwrap();
    let m = MatrixText::parse(&text).unwrap();
    let det = m.column("detuning_hz").unwrap();
    assert_eq!(det.len(), cfg.spectrum.points);
    assert!((det[0] - cfg.spectrum.detuning_min_hz).abs() < 1e-3);
    let gap = m.column("pair_splitting_hz").unwrap();
    let min = gap.iter().copied().fold(f64::INFINITY, f64::min);
    assert!((min / 23e6 - 1.0).abs() < 0.01, "{min}");
}

#[test]
fn tampered_payload_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config();
    run_spectrum(&cfg, dir.path()).unwrap();
    let p = dir.path().join("spectrum.dat");
    let text = fs::read_to_string(&p).unwrap();
    let last = text.lines().last().unwrap().to_string();
    let bad = text
        .replacen(&last, &format!("{last} "), 1)
        .replacen(&last, "0 0 0 0 0", 1);
    fs::write(&p, bad).unwrap();
    let checks = verify_dir(dir.path(), None).unwrap();
    let (_, v) = checks.iter().find(|(q, _)| q.ends_with("spectrum.dat")).unwrap();
    assert!(!v.payload_ok);
}

#[test]
fn foreign_config_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config();
    run_spectrum(&cfg, dir.path()).unwrap();
    let mut other = cfg.clone();
    other.drive.a_cdd_hz = 20e6;
    assert!(verify_dir(dir.path(), Some(&other)).is_err());
}

#[test]
fn rb_output_identical_across_worker_counts() {
    let mut cfg = reference_config();
    small_rb(&mut cfg);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    with_workers(Some(1), || run_rb(&cfg, a.path())).unwrap().unwrap();
    with_workers(Some(4), || run_rb(&cfg, b.path())).unwrap().unwrap();
    let (pa, pb) = (payloads(a.path()), payloads(b.path()));
    assert!(!pa.is_empty());
    assert_eq!(pa, pb);
    let fit = KvRecord::parse(&fs::read_to_string(a.path().join("rb_fit.kv")).unwrap()).unwrap();
    assert!(fit.get_f64("fidelity").unwrap() >= 0.999);
    assert!(fit.get_f64("avg_clifford_time_s").unwrap() > 0.0);
}

#[test]
fn rb_seed_changes_raw_data_only_through_seed() {
    let mut cfg = reference_config();
    small_rb(&mut cfg);
    cfg.rb.with_noise = true;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_rb(&cfg, a.path()).unwrap();
    cfg.seed += 1;
    run_rb(&cfg, b.path()).unwrap();
    let raw = |d: &Path| fs::read_to_string(d.join("rb_raw.dat")).unwrap();
    assert_ne!(raw(a.path()), raw(b.path()));
}

#[test]
fn empty_directory_does_not_verify() {
    let dir = tempfile::tempdir().unwrap();
    assert!(verify_dir(dir.path(), None).is_err());
}
