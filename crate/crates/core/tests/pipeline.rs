use std::sync::Arc;

use proptest::prelude::*;

use gqs_core::config::{ExperimentConfig, Mode};
use gqs_core::inference::estimate;
use gqs_core::{io, Error};

fn small_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(
        r#"
[basis]
n_max = 20
[basis.eigen]
fft_len = 131072
[statistics]
n_events = 1500
seed = 7
"#,
    )
    .unwrap()
}

#[test]
fn config_file_to_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, small_config().to_toml_string()).unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg, small_config());

    let cache = dir.path().join("cache");
    let table = io::cached_table(&cache, &cfg.table_hash(), cfg.state_count().unwrap(), cfg.basis.eigen).unwrap();
    let again = io::cached_table(&cache, &cfg.table_hash(), cfg.state_count().unwrap(), cfg.basis.eigen).unwrap();
    assert_eq!(table.node(100), again.node(100));

    let (model, scan) = cfg.statistical_model(Some(Arc::new(table))).unwrap();
    assert_eq!(model.mode(), "quantum");
    let set = model.sample(cfg.physical.g0, cfg.statistics.n_events, cfg.statistics.seed).unwrap();
    let events_path = dir.path().join("events.csv");
    io::write_events_csv(&events_path, &set.events).unwrap();
    let events = io::read_events_csv(&events_path, cfg.geometry.mirror_length).unwrap();
    assert_eq!(events, set.events);

    let r = estimate(model.as_ref(), &events, &scan).unwrap();
    let pull = (r.g_hat - cfg.physical.g0) / r.sigma_hat;
    assert!(pull.abs() < 5.0, "ĝ = {}, σ̂ = {}", r.g_hat, r.sigma_hat);
    assert_eq!(r.n_events, 1500);
}

#[test]
fn classical_mode_needs_no_table() {
    let mut cfg = small_config();
    cfg.mode = Mode::Classical;
    let (model, scan) = cfg.statistical_model(None).unwrap();
    assert_eq!(model.mode(), "classical");
    let set = model.sample(cfg.physical.g0, 800, 3).unwrap();
    let r = estimate(model.as_ref(), &set.events, &scan).unwrap();
    assert!((r.g_hat - cfg.physical.g0).abs() < 5.0 * r.sigma_hat);

    cfg.mode = Mode::Quantum;
    assert!(matches!(cfg.statistical_model(None), Err(Error::Config(_))));
}

#[test]
fn same_seed_same_events_and_hash() {
    let cfg = small_config();
    let table = Arc::new(cfg.build_table().unwrap());
    let m = cfg.quantum_model(table).unwrap();
    use gqs_core::inference::StatisticalModel;
    let a = m.sample(cfg.physical.g0, 300, 11).unwrap();
    let b = m.sample(cfg.physical.g0, 300, 11).unwrap();
    let c = m.sample(cfg.physical.g0, 300, 12).unwrap();
    assert_eq!(a.events, b.events);
    assert_ne!(a.events, c.events);
    assert_eq!(cfg.hash(), small_config().hash());
}

#[test]
fn reference_config_matches_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../config/reference.toml");
    let cfg = ExperimentConfig::load(std::path::Path::new(path)).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!(cfg.hash(), ExperimentConfig::default().hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn overrides_round_trip_through_toml(v0 in 0.05f64..2.0, h in 5e-6f64..5e-5, n in 1usize..500) {
        let cfg = ExperimentConfig::default()
            .with_overrides(&[
                format!("packet.kick_velocity={v0:e}"),
                format!("packet.height={h:e}"),
                format!("statistics.n_events={n}"),
            ])
            .unwrap();
        prop_assert_eq!(cfg.packet.kick_velocity, v0);
        prop_assert_eq!(cfg.packet.height, h);
        prop_assert_eq!(cfg.statistics.n_events, n);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
