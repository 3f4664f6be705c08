//! The default scenario serializes to the reference simulation setup.

use hocsim::Scenario;

#[test]
fn default_scenario_matches_golden_file() {
    let got = Scenario::default().to_config_string();
    assert_eq!(got, include_str!("data/default_scenario.cfg"));
}

#[test]
fn golden_file_parses_back_to_default() {
    let s = Scenario::parse(include_str!("data/default_scenario.cfg")).unwrap();
    assert_eq!(s, Scenario::default());
}

#[test]
fn reference_setup_values() {
    let kv: Vec<(&str, String)> = Scenario::default().key_values();
    let get = |k: &str| kv.iter().find(|(key, _)| *key == k).map(|(_, v)| v.as_str()).unwrap();
    assert_eq!(get("duration_s"), "180");
    assert_eq!((get("arena_width_m"), get("arena_height_m")), ("2500", "1500"));
    assert_eq!(get("radius_m"), "250");
    assert_eq!(get("bandwidth_bps"), "2000000");
    assert_eq!(get("queue_capacity"), "50");
    assert_eq!(get("initial_energy_j"), "100");
    assert_eq!(get("node_count"), "16");
    assert_eq!(get("protocol"), "anthocnet");
}
