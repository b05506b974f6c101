use homothetic::report::{self, Status};
use homothetic::suite::verify_all;

#[test]
fn full_suite_passes_and_covers_every_module() {
    let rep = verify_all(None);
    for e in &rep.entries {
        for r in e.summary.records.iter().filter(|r| r.status != Status::Pass) {
            println!("{:?} {} / {}: {} = {:e} vs {:?}", r.status, e.kind, r.module, r.name, r.measured, r.threshold);
        }
    }
    assert_eq!(rep.summary.status, Status::Pass);
    let modules = rep.summary.modules();
    for m in [
        report::GRID_CORE,
        report::HOMOTHETY_GROUP,
        report::CALCULUS,
        report::PENALTY,
        report::ELECTROMAGNETICS,
        report::POINT_CHARGE,
        report::CLI_APP,
    ] {
        assert!(modules.contains(&m), "{m} has no records");
    }
    let study = rep.entries.iter().find(|e| e.kind == "energy_study").unwrap();
    assert!(study.summary.records.iter().any(|r| r.note.is_some()), "audit note missing");
}

#[test]
fn smoke_subset_is_quick() {
    let rep = verify_all(Some("smoke"));
    assert_eq!(rep.summary.status, Status::Pass);
    assert_eq!(rep.entries.len(), 2);
    assert!(rep.entries.iter().map(|e| e.seconds).sum::<f64>() < 30.0);
}
