//! Declarative experiment configs and their runners.
//!
//! A config is a TOML table `[experiment]` whose `kind` selects the runner;
//! every other key belongs to that kind and unknown keys are rejected.

pub mod charge;
pub mod common;
pub mod hodge;
pub mod identities;
pub mod maxwell;
pub mod penalty;
pub mod wave;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::report::VerificationSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Identities(identities::IdentitiesRun),
    Hodge(hodge::HodgeRun),
    Penalty(penalty::PenaltyRun),
    Ode1d(penalty::Ode1dRun),
    Maxwell(maxwell::MaxwellRun),
    Wave(wave::WaveRun),
    PointCharge(charge::PointChargeRun),
    EnergyStudy(charge::EnergyStudyRun),
}

pub const KINDS: [&str; 8] = ["identities", "hodge", "penalty", "ode1d", "maxwell", "wave", "point_charge", "energy_study"];

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Identities(_) => "identities",
            Experiment::Hodge(_) => "hodge",
            Experiment::Penalty(_) => "penalty",
            Experiment::Ode1d(_) => "ode1d",
            Experiment::Maxwell(_) => "maxwell",
            Experiment::Wave(_) => "wave",
            Experiment::PointCharge(_) => "point_charge",
            Experiment::EnergyStudy(_) => "energy_study",
        }
    }

    /// Output directory requested by the config, if any.
    pub fn output(&self) -> Option<&str> {
        match self {
            Experiment::Identities(c) => c.output.as_deref(),
            Experiment::Hodge(c) => c.output.as_deref(),
            Experiment::Penalty(c) => c.output.as_deref(),
            Experiment::Ode1d(c) => c.output.as_deref(),
            Experiment::Maxwell(c) => c.output.as_deref(),
            Experiment::Wave(c) => c.output.as_deref(),
            Experiment::PointCharge(c) => c.output.as_deref(),
            Experiment::EnergyStudy(c) => c.output.as_deref(),
        }
    }

    pub fn default_for(kind: &str) -> Option<Experiment> {
        Some(match kind {
            "identities" => Experiment::Identities(Default::default()),
            "hodge" => Experiment::Hodge(Default::default()),
            "penalty" => Experiment::Penalty(Default::default()),
            "ode1d" => Experiment::Ode1d(Default::default()),
            "maxwell" => Experiment::Maxwell(Default::default()),
            "wave" => Experiment::Wave(Default::default()),
            "point_charge" => Experiment::PointCharge(Default::default()),
            "energy_study" => Experiment::EnergyStudy(Default::default()),
            _ => return None,
        })
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// A named text file produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: impl Into<String>) -> Self {
        Artifact { name: name.into(), contents: contents.into() }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub kind: &'static str,
    pub summary: VerificationSummary,
    pub report: Value,
    pub artifacts: Vec<Artifact>,
}

impl ExperimentOutput {
    pub fn new(kind: &'static str, summary: VerificationSummary, report: Value, artifacts: Vec<Artifact>) -> Self {
        ExperimentOutput { kind, summary, report, artifacts }
    }

    /// Report document with the resolved config; keys are sorted.
    pub fn report_json(&self, config: &Experiment) -> String {
        let doc = json!({ "config": config, "results": self.report });
        serde_json::to_string_pretty(&doc).expect("json value")
    }

    pub fn summary_json(&self) -> String {
        let v = serde_json::to_value(&self.summary).expect("serializable summary");
        serde_json::to_string_pretty(&v).expect("json value")
    }
}

pub fn run(exp: &Experiment) -> Result<ExperimentOutput> {
    match exp {
        Experiment::Identities(c) => identities::run(c),
        Experiment::Hodge(c) => hodge::run(c),
        Experiment::Penalty(c) => penalty::run(c),
        Experiment::Ode1d(c) => penalty::run_ode(c),
        Experiment::Maxwell(c) => maxwell::run(c),
        Experiment::Wave(c) => wave::run(c),
        Experiment::PointCharge(c) => charge::run_charge(c),
        Experiment::EnergyStudy(c) => charge::run_study(c),
    }
}
