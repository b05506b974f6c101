//! The full verification suite and the individual acceptance criteria.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::exec;
use crate::experiment::common::guarded;
use crate::experiment::{self, charge, hodge, identities, maxwell, penalty, wave, Experiment, RunConfig, KINDS};
use crate::grid::{build_grid, DeltaFamily, DeltaSpec, GridSpec, Surface};
use crate::penalty::{Mode, OuterBc};
use crate::point_charge::{decoupling_test, energy_scaling_study, interior_bump, run_point_charge};
use crate::report::{CheckRecord, VerificationSummary, CLI_APP};

pub const CRITERIA: [&str; 10] = [
    "group exactness",
    "operator identities",
    "Hodge decomposition",
    "flat connection",
    "curvature-scalar boundedness",
    "Dirichlet penalty 1D",
    "point charge",
    "Maxwell classical limit",
    "conservation identity",
    "wave/elliptic consistency",
];

/// Combined-mode ladder with a Gaussian interface and zero outer data.
pub fn penalty_combined() -> penalty::PenaltyRun {
    penalty::PenaltyRun {
        delta: DeltaSpec::new(DeltaFamily::Gaussian, 128.0, Surface::Point { center: vec![0.0] }),
        params: penalty::PenaltyParams {
            mode: Mode::Combined,
            outer: OuterBc::ends(0.0, 0.0),
            ladder: vec![16.0, 32.0, 64.0, 128.0],
            reference: None,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Neumann-mode ladder; the outer data differ so the flux gap is nontrivial.
pub fn penalty_neumann() -> penalty::PenaltyRun {
    penalty::PenaltyRun {
        delta: DeltaSpec::new(DeltaFamily::Gaussian, 128.0, Surface::Point { center: vec![0.0] }),
        params: penalty::PenaltyParams {
            mode: Mode::NeumannPenalty,
            outer: OuterBc::ends(0.0, 1.0),
            ladder: vec![16.0, 32.0, 64.0, 128.0],
            reference: None,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// One-dimensional pulse crossing barriers of growing height.
pub fn maxwell_pulse() -> maxwell::MaxwellRun {
    maxwell::MaxwellRun {
        grid: GridSpec::periodic(&[4.0], &[800]),
        params: maxwell::MaxwellParams {
            steps: 400,
            initial: maxwell::Initial::Pulse,
            offsets: maxwell::Offsets::Zero,
            probes: vec![vec![2.5]],
            barrier: Some(maxwell::BarrierSweep {
                start: 2.0,
                end: 3.0,
                edge_width: 0.05,
                amplitudes: vec![0.0, 0.5, 1.0, 2.0],
                probe: 2.5,
                duration: 2.0,
            }),
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Smooth random lambda on the torus with the Gauss refinement ladder.
pub fn maxwell_vsl() -> maxwell::MaxwellRun {
    maxwell::MaxwellRun {
        lambda: experiment::common::LambdaSource::Smooth { amplitude: 0.3 },
        params: maxwell::MaxwellParams {
            steps: 400,
            offsets: maxwell::Offsets::Zero,
            refinement: vec![32, 64, 128],
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Every experiment the suite runs, in a fixed order.
pub fn suite_experiments() -> Vec<Experiment> {
    let mut out: Vec<Experiment> = KINDS.iter().filter_map(|k| Experiment::default_for(k)).collect();
    out.push(Experiment::Penalty(penalty_combined()));
    out.push(Experiment::Penalty(penalty_neumann()));
    out.push(Experiment::Maxwell(maxwell_pulse()));
    out.push(Experiment::Maxwell(maxwell_vsl()));
    out
}

/// Rejection of unknown keys and reproducibility of the report.
pub fn config_checks() -> Vec<CheckRecord> {
    let bad = "[experiment]\nkind = \"penalty\"\nsharpnes = 3.0\n";
    let named = matches!(RunConfig::from_toml(bad), Err(e) if e.to_string().contains("sharpnes"));
    let mut out = vec![CheckRecord::flag("unknown config key rejected by name", CLI_APP, named, "configs are strict")];
    out.extend(guarded("repeatable report", CLI_APP, "runs are deterministic", || {
        let exp = Experiment::default_for("point_charge").expect("known kind");
        let a = experiment::run(&exp)?;
        let b = experiment::run(&exp)?;
        let same = a.report_json(&exp) == b.report_json(&exp)
            && a.summary_json() == b.summary_json()
            && a.artifacts == b.artifacts;
        Ok(vec![CheckRecord::flag("repeated run is byte-identical", CLI_APP, same, "runs are deterministic")])
    }));
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub kind: &'static str,
    pub seconds: f64,
    pub summary: VerificationSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub summary: VerificationSummary,
    pub entries: Vec<SuiteEntry>,
}

fn selected(filter: Option<&str>, exp: &Experiment) -> bool {
    match filter {
        None => true,
        Some("smoke") => matches!(exp.kind(), "identities" | "maxwell") && Experiment::default_for(exp.kind()).as_ref() == Some(exp),
        Some(f) => f.split(',').any(|k| k.trim() == exp.kind()),
    }
}

/// Run the suite, optionally restricted to a comma-separated list of kinds
/// or to `smoke` (the default identities and lambda = 0 Maxwell runs).
/// Experiments run concurrently; records keep a fixed order.
pub fn verify_all(filter: Option<&str>) -> SuiteReport {
    let exps: Vec<Experiment> = suite_experiments().into_iter().filter(|e| selected(filter, e)).collect();
    let mut entries = exec::map_slice(&exps, |e| {
        let t = Instant::now();
        let summary = match experiment::run(e) {
            Ok(o) => o.summary,
            Err(err) => VerificationSummary::from_records(vec![CheckRecord::failed(e.kind(), module_of(e), "experiment run", &err)]),
        };
        SuiteEntry { kind: e.kind(), seconds: t.elapsed().as_secs_f64(), summary }
    });
    if filter.is_none() {
        let t = Instant::now();
        let summary = VerificationSummary::from_records(config_checks());
        entries.push(SuiteEntry { kind: "config", seconds: t.elapsed().as_secs_f64(), summary });
    }
    let summary = VerificationSummary::merge(entries.iter().map(|e| e.summary.clone()));
    SuiteReport { summary, entries }
}

fn module_of(e: &Experiment) -> &'static str {
    use crate::report::*;
    match e {
        Experiment::Identities(_) => HOMOTHETY_GROUP,
        Experiment::Hodge(_) => CALCULUS,
        Experiment::Penalty(_) | Experiment::Ode1d(_) => PENALTY,
        Experiment::Maxwell(_) | Experiment::Wave(_) => crate::report::ELECTROMAGNETICS,
        Experiment::PointCharge(_) | Experiment::EnergyStudy(_) => POINT_CHARGE,
    }
}

fn tagged(records: Vec<CheckRecord>, k: u8) -> Vec<CheckRecord> {
    records.into_iter().filter(|r| r.criterion == Some(k)).collect()
}

/// The records of acceptance criterion `k` (1 to 10), computed directly.
pub fn criterion(k: u8) -> Result<VerificationSummary> {
    let seed = 1;
    let ip = identities::IdentitiesParams::default();
    let records = match k {
        1 => identities::group_law(seed, &ip)?,
        2 => identities::operator_identities(seed, &ip)?.0,
        3 => {
            let cfg = hodge::HodgeRun::default();
            hodge::decompositions(&build_grid(&cfg.grid)?, cfg.seed, &cfg.params)?.0
        }
        4 => identities::flat_connection(seed, &ip)?,
        5 => identities::curvature_refinement(&ip)?.0,
        6 => {
            let cfg = penalty::PenaltyRun::default();
            let s = penalty::setup(&cfg)?;
            let reports = penalty::solve_ladder(&s)?;
            penalty::ladder_checks(&s, &reports, cfg.params.reference.as_ref())
        }
        7 => {
            let cfg = charge::PointChargeRun::default();
            let mut r = charge::ladder_checks(&run_point_charge(&cfg.problem)?);
            let bump = interior_bump(cfg.params.perturbation_center, cfg.params.perturbation_width);
            r.extend(charge::decoupling_checks(&decoupling_test(&cfg.problem, &bump)?));
            r.extend(charge::study_checks(&energy_scaling_study(&charge::EnergyStudyRun::default().study)?));
            r
        }
        8 => {
            let p = maxwell::MaxwellParams::default();
            let square = build_grid(&maxwell::MaxwellRun::default().grid)?;
            let mut r = maxwell::classical_limit(&square, seed, &p)?.0;
            let line = build_grid(&GridSpec::periodic(&[1.0], &[256]))?;
            r.extend(maxwell::classical_limit(&line, seed, &p)?.0);
            r
        }
        9 => maxwell::gauge_conservation(&build_grid(&maxwell::MaxwellRun::default().grid)?, seed, 20)?,
        10 => wave::run(&wave::WaveRun::default())?.summary.records,
        _ => return Err(crate::Error::InvalidArgument(format!("criteria are numbered 1 to 10, got {k}"))),
    };
    Ok(VerificationSummary::from_records(tagged(records, k)))
}
