//! Spherical interface ladder and the radius scaling study.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::common::{csv, guarded, json_lines};
use super::{Artifact, ExperimentOutput};
use crate::error::{Error, Result};
use crate::point_charge::{
    decoupling_test, energy_scaling_study, exterior_uniqueness, interior_bump, run_point_charge, ChargeReport, DecouplingRung,
    EnergyStudyConfig, EnergyStudyReport, PointChargeConfig,
};
use crate::report::{Bound, CheckRecord, VerificationSummary, POINT_CHARGE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointChargeParams {
    /// Centre and half-width of the interior source used for decoupling.
    pub perturbation_center: f64,
    pub perturbation_width: f64,
    pub uniqueness: bool,
}

impl Default for PointChargeParams {
    fn default() -> Self {
        PointChargeParams { perturbation_center: 0.04, perturbation_width: 0.015, uniqueness: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointChargeRun {
    pub output: Option<String>,
    pub problem: PointChargeConfig,
    pub params: PointChargeParams,
}

pub fn ladder_checks(rep: &ChargeReport) -> Vec<CheckRecord> {
    let m = POINT_CHARGE;
    let Some(fin) = rep.finest() else {
        return vec![CheckRecord::flag("finest rung is resolved", m, false, "ladder resolution")];
    };
    let mut out = vec![
        CheckRecord::new(
            "exterior potential matches Coulomb",
            m,
            fin.far_field_error,
            Bound::AtMost(0.02),
            "outside the sphere the potential is C / r",
        )
        .criterion(7),
        CheckRecord::new(
            "exterior energy matches Coulomb",
            m,
            fin.energy_relative_error.abs(),
            Bound::AtMost(0.05),
            "the exterior field energy is C^2 / (2R) in the sphere units",
        )
        .criterion(7),
        CheckRecord::new("far-field log-log slope", m, fin.far_field_slope, Bound::Within([-1.03, -0.97]), "the exterior field decays like 1/r"),
        CheckRecord::new("finest backward error", m, fin.residual, Bound::AtMost(crate::penalty::SOLVER_TOL), "solver tolerance"),
        CheckRecord::flag("exterior energy positive", m, fin.exterior_energy > 0.0, "field energy is positive"),
    ];
    for (i, r) in rep.gap_ratios.iter().enumerate() {
        out.push(CheckRecord::new(format!("interface gap ratio {}", i + 1), m, *r, Bound::AtMost(0.7), "the interface gap closes as n grows"));
    }
    out
}

pub fn decoupling_checks(rungs: &[DecouplingRung]) -> Vec<CheckRecord> {
    let m = POINT_CHARGE;
    let finest = rungs.last().map_or(f64::NAN, |r| r.exterior_change);
    let monotone = rungs.windows(2).all(|w| w[1].exterior_change <= w[0].exterior_change * 1.05 + 1e-15);
    vec![
        CheckRecord::new(
            "interior source leaves the exterior unchanged",
            m,
            finest,
            Bound::AtMost(1e-6),
            "the penalized interface decouples interior and exterior",
        )
        .criterion(7),
        CheckRecord::flag("exterior response does not grow with n", m, monotone, "decoupling improves with sharpness"),
    ]
}

fn rung_csv(rep: &ChargeReport) -> Vec<Artifact> {
    rep.rungs
        .iter()
        .zip(&rep.solutions)
        .filter_map(|(r, s)| {
            let s = s.as_ref()?;
            let g = &s.grid;
            let rows = (0..g.len()).map(|i| vec![g.node_coord(0, i), s.values()[i]]);
            Some(Artifact::new(format!("rung_{}.csv", r.n), csv(&["r", "phi"], rows)))
        })
        .collect()
}

pub fn run_charge(cfg: &PointChargeRun) -> Result<ExperimentOutput> {
    let m = POINT_CHARGE;
    let pc = &cfg.problem;
    pc.validate().map_err(|e| Error::Config(e.to_string()))?;
    let p = &cfg.params;
    if p.perturbation_center + p.perturbation_width > pc.radius - 4.0 / pc.ladder.iter().cloned().fold(f64::INFINITY, f64::min) {
        return Err(Error::Config("the decoupling source must stay inside the interface band".into()));
    }
    let mut records = Vec::new();
    let mut report = serde_json::Map::new();
    let mut artifacts = Vec::new();
    match run_point_charge(pc) {
        Ok(rep) => {
            records.extend(ladder_checks(&rep));
            artifacts.extend(rung_csv(&rep));
            artifacts.push(Artifact::new("ladder.jsonl", json_lines(&rep.rungs)));
            report.insert("ladder".into(), serde_json::to_value(&rep).expect("serializable"));
        }
        Err(e) => records.push(CheckRecord::failed("point charge ladder", m, "spherical interface", &e)),
    }
    let bump = interior_bump(p.perturbation_center, p.perturbation_width);
    let mut dec = Vec::new();
    records.extend(guarded("decoupling", m, "interior/exterior decoupling", || {
        dec = decoupling_test(pc, &bump)?;
        Ok(decoupling_checks(&dec))
    }));
    report.insert("decoupling".into(), serde_json::to_value(&dec).expect("serializable"));
    if p.uniqueness {
        let n = *pc.ladder.last().expect("validated");
        records.extend(guarded("exterior uniqueness", m, "exterior uniqueness", || {
            let d = exterior_uniqueness(pc, n)?;
            report.insert("uniqueness".into(), json!(d));
            Ok(vec![CheckRecord::new(
                "exterior independent of the interior guess",
                m,
                d,
                Bound::AtMost(2e-10),
                "the exterior solution is unique",
            )])
        }));
    }
    Ok(ExperimentOutput::new("point_charge", VerificationSummary::from_records(records), serde_json::Value::Object(report), artifacts))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyStudyRun {
    pub output: Option<String>,
    pub study: EnergyStudyConfig,
}

pub fn study_checks(rep: &EnergyStudyReport) -> Vec<CheckRecord> {
    let m = POINT_CHARGE;
    let mut out = vec![
        CheckRecord::new(
            "energy scales like 1/R at fixed charge",
            m,
            rep.fixed_charge_slope,
            Bound::Within([-1.05, -0.95]),
            "the Coulomb self-energy of a shell of radius R",
        )
        .criterion(7)
        .with_note(rep.audit_note.clone()),
        CheckRecord::new(
            "energy spread with charge scaled like sqrt(R)",
            m,
            rep.scaled_charge_spread,
            Bound::AtMost(0.05),
            "C^2 / R held fixed keeps the energy fixed",
        ),
    ];
    let at = |r: f64| rep.fixed_charge.iter().find(|row| (row.radius - r).abs() < 1e-12).map(|row| row.energy);
    if let (Some(a), Some(b)) = (at(0.2), at(0.4)) {
        out.push(CheckRecord::new("energy doubles when the radius halves", m, a / b, Bound::Within([1.9, 2.1]), "E proportional to 1/R"));
    }
    out
}

pub fn run_study(cfg: &EnergyStudyRun) -> Result<ExperimentOutput> {
    let s = &cfg.study;
    if s.radii.len() < 3 || s.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Config("the energy study needs at least 3 positive radii".into()));
    }
    let mut report = json!(null);
    let mut artifacts = Vec::new();
    let records = guarded("energy scaling study", POINT_CHARGE, "radius scaling", || {
        let rep = energy_scaling_study(s)?;
        let rows = rep
            .fixed_charge
            .iter()
            .zip(&rep.scaled_charge)
            .map(|(a, b)| vec![a.radius, a.n, a.energy, a.reference, b.charge, b.energy]);
        artifacts.push(Artifact::new(
            "study.csv",
            csv(&["radius", "n", "energy", "reference", "scaled_charge", "scaled_energy"], rows),
        ));
        report = serde_json::to_value(&rep).expect("serializable");
        Ok(study_checks(&rep))
    });
    Ok(ExperimentOutput::new("energy_study", VerificationSummary::from_records(records), json!({ "study": report }), artifacts))
}
