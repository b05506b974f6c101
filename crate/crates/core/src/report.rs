//! Check records and their aggregation.

use serde::Serialize;

use crate::error::Error;

pub const GRID_CORE: &str = "grid_core";
pub const HOMOTHETY_GROUP: &str = "homothety_group";
pub const CALCULUS: &str = "homothetic_calculus";
pub const PENALTY: &str = "penalty_solver";
pub const ELECTROMAGNETICS: &str = "electromagnetics";
pub const POINT_CHARGE: &str = "point_charge";
pub const CLI_APP: &str = "cli_app";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Within([f64; 2]),
    Equals(f64),
}

impl Bound {
    pub fn holds(&self, m: f64) -> bool {
        if !m.is_finite() {
            return false;
        }
        match *self {
            Bound::AtMost(t) => m <= t,
            Bound::AtLeast(t) => m >= t,
            Bound::Within([lo, hi]) => (lo..=hi).contains(&m),
            Bound::Equals(t) => m == t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub module: &'static str,
    pub status: Status,
    pub measured: f64,
    pub threshold: Bound,
    /// The statement the check exercises.
    pub anchor: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, module: &'static str, measured: f64, threshold: Bound, anchor: &'static str) -> Self {
        let status = if threshold.holds(measured) { Status::Pass } else { Status::Fail };
        CheckRecord { name: name.into(), module, status, measured, threshold, anchor, criterion: None, note: None }
    }

    pub fn flag(name: impl Into<String>, module: &'static str, ok: bool, anchor: &'static str) -> Self {
        Self::new(name, module, if ok { 1.0 } else { 0.0 }, Bound::Equals(1.0), anchor)
    }

    pub fn failed(name: impl Into<String>, module: &'static str, anchor: &'static str, err: &Error) -> Self {
        CheckRecord {
            name: name.into(),
            module,
            status: Status::Fail,
            measured: f64::NAN,
            threshold: Bound::Equals(1.0),
            anchor,
            criterion: None,
            note: Some(err.to_string()),
        }
    }

    pub fn indeterminate(mut self, why: impl Into<String>) -> Self {
        if self.status != Status::Fail {
            self.status = Status::Indeterminate;
        }
        self.note = Some(why.into());
        self
    }

    pub fn criterion(mut self, c: u8) -> Self {
        self.criterion = Some(c);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationSummary {
    pub status: Status,
    pub passed: usize,
    pub failed: usize,
    pub indeterminate: usize,
    pub records: Vec<CheckRecord>,
}

impl VerificationSummary {
    pub fn from_records(records: Vec<CheckRecord>) -> Self {
        let count = |s: Status| records.iter().filter(|r| r.status == s).count();
        let (passed, failed, indeterminate) = (count(Status::Pass), count(Status::Fail), count(Status::Indeterminate));
        let status = if failed > 0 {
            Status::Fail
        } else if indeterminate > 0 {
            Status::Indeterminate
        } else {
            Status::Pass
        };
        VerificationSummary { status, passed, failed, indeterminate, records }
    }

    pub fn merge(parts: impl IntoIterator<Item = VerificationSummary>) -> Self {
        Self::from_records(parts.into_iter().flat_map(|s| s.records).collect())
    }

    pub fn is_pass(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn modules(&self) -> Vec<&'static str> {
        let mut m: Vec<&'static str> = self.records.iter().map(|r| r.module).collect();
        m.sort_unstable();
        m.dedup();
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fail_dominates_indeterminate() {
        let a = CheckRecord::new("a", "m", 1.0, Bound::AtMost(2.0), "x");
        let b = CheckRecord::new("b", "m", 1.0, Bound::AtMost(2.0), "x").indeterminate("band");
        let c = CheckRecord::new("c", "m", 3.0, Bound::AtMost(2.0), "x");
        assert_eq!(VerificationSummary::from_records(vec![a.clone(), b.clone()]).status, Status::Indeterminate);
        assert_eq!(VerificationSummary::from_records(vec![a, b, c.clone()]).status, Status::Fail);
        assert_eq!(c.clone().indeterminate("no").status, Status::Fail);
    }

    #[test]
    fn nan_never_passes() {
        assert!(!Bound::AtMost(1.0).holds(f64::NAN));
        assert!(!Bound::Within([0.0, 1.0]).holds(f64::INFINITY));
    }
}
