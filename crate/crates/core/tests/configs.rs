use std::path::PathBuf;

use homothetic::experiment::{Experiment, RunConfig, KINDS};
use homothetic::suite;

fn load(name: &str) -> Experiment {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    RunConfig::from_toml(&text).unwrap_or_else(|e| panic!("{name}: {e}")).experiment
}

#[test]
fn shipped_configs_equal_the_defaults() {
    for kind in KINDS {
        assert_eq!(load(kind), Experiment::default_for(kind).unwrap(), "{kind}");
    }
}

#[test]
fn shipped_variants_equal_the_suite() {
    assert_eq!(load("penalty_combined"), Experiment::Penalty(suite::penalty_combined()));
    assert_eq!(load("penalty_neumann"), Experiment::Penalty(suite::penalty_neumann()));
    assert_eq!(load("maxwell_pulse"), Experiment::Maxwell(suite::maxwell_pulse()));
    assert_eq!(load("maxwell_vsl"), Experiment::Maxwell(suite::maxwell_vsl()));
}

#[test]
fn configs_round_trip_through_toml() {
    for exp in suite::suite_experiments() {
        let text = toml::to_string(&RunConfig { experiment: exp.clone() }).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap().experiment, exp);
    }
}

#[test]
fn malformed_configs_are_rejected() {
    let cases = [
        ("[experiment]\nkind = \"penalty\"\nsharpnes = 3.0\n", "sharpnes"),
        ("[experiment]\nkind = \"warp_drive\"\n", "warp_drive"),
        ("[experiment]\nkind = \"wave\"\n[experiment.params]\ndamping = \"high\"\n", "\"high\", expected f64"),
        ("[run]\nkind = \"wave\"\n", "run"),
    ];
    for (text, needle) in cases {
        let err = RunConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains(needle), "{needle}: {err}");
    }
}

#[test]
fn invalid_values_fail_at_run_time_as_config_errors() {
    let bad = "[experiment]\nkind = \"wave\"\n[experiment.params]\ncfl_fraction = 1.5\n";
    let exp = RunConfig::from_toml(bad).unwrap().experiment;
    assert!(matches!(homothetic::experiment::run(&exp), Err(homothetic::Error::Config(_))));
}
