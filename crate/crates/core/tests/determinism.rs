#![cfg(feature = "parallel")]

use homothetic::experiment::{self, Experiment};

fn on_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn report(kind: &str) -> (String, String) {
    let exp = Experiment::default_for(kind).unwrap();
    let out = experiment::run(&exp).unwrap();
    (out.report_json(&exp), out.summary_json())
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    for kind in ["identities", "point_charge", "penalty", "hodge"] {
        let one = on_pool(1, || report(kind));
        let many = on_pool(5, || report(kind));
        assert_eq!(one, many, "{kind}");
    }
}
