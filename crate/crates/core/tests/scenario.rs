use trpmbm_core::model::ScenarioConfig;
use trpmbm_core::scenario::{load_scenario, parse_scenario};

#[test]
fn shipped_default_matches_builtin() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/default.json");
    assert_eq!(load_scenario(path).unwrap(), ScenarioConfig::paper_default());
}

#[test]
fn partial_file_overrides_only_given_fields() {
    let cfg = parse_scenario(r#"{"rho": 1, "measurement": {"clutter_rate": 2.5}, "filter": {"lscan": 2}}"#).unwrap();
    let def = ScenarioConfig::paper_default();
    assert_eq!(cfg.rho(), 1);
    assert_eq!(cfg.measurement.clutter_rate, 2.5);
    assert_eq!(cfg.filter.lscan, 2);
    assert_eq!(cfg.measurement.r, def.measurement.r);
    assert_eq!(cfg.birth, def.birth);
}

#[test]
fn violations_are_listed_together() {
    let err = parse_scenario(r#"{"measurement": {"detection_probability": 1.3, "clutter_rate": -1}}"#)
        .unwrap_err()
        .to_string();
    assert!(err.contains("detection_probability"), "{err}");
    assert!(err.contains("clutter_rate"), "{err}");
}
