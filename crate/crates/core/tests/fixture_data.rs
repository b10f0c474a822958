//! Bundled configuration files against the in-code reference pulse sets.

use std::path::{Path, PathBuf};

use lindblad_pulse::fixtures;
use lindblad_pulse::io::{load_config, write_config};
use lindblad_pulse::pulses::default_bounds;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn table_configs_match_reference_sets() {
    for k in 1..=3 {
        let cfg = load_config(fixture(&format!("table{k}.cfg"))).unwrap();
        assert_eq!(cfg.pulse_set(), fixtures::table(k).unwrap(), "set {k}");
    }
}

#[test]
fn table3_lies_inside_default_bounds() {
    assert!(default_bounds(4).contains(&fixtures::table3().pack()));
}

#[test]
fn every_fixture_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["table1.cfg", "table2.cfg", "table3.cfg", "zero.cfg", "stirap.cfg"] {
        let cfg = load_config(fixture(name)).unwrap();
        let path = dir.path().join(name);
        write_config(&cfg, &path).unwrap();
        assert_eq!(load_config(&path).unwrap(), cfg, "{name}");
    }
}

#[test]
fn zero_config_is_all_defaults() {
    let cfg = load_config(fixture("zero.cfg")).unwrap();
    assert_eq!(cfg.system.n_levels, 5);
    assert_eq!(cfg.system.gamma_natural, 1.0);
    assert_eq!(cfg.system.gamma_collisional, 0.0);
    assert_eq!(cfg.integrator.horizon, 45.0);
    assert!(cfg.pulse_set().channels.iter().all(|p| p.omega0 == 0.0));
}
