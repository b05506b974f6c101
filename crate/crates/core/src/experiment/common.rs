//! Config pieces shared by several experiment kinds, plus text output helpers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{evaluate_delta, DeltaSpec, FormField, Grid, LambdaField};
use crate::random;
use crate::report::CheckRecord;

/// Target potential `phi_d` on the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Constant { value: f64 },
    /// `value + slope . x`.
    Affine { value: f64, slope: Vec<f64> },
    Samples { values: Vec<f64> },
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::Constant { value: 1.0 }
    }
}

impl TargetSpec {
    pub fn field(&self, grid: &Grid) -> Result<FormField> {
        match self {
            TargetSpec::Constant { value } => Ok(FormField::constant(grid, *value)),
            TargetSpec::Affine { value, slope } => {
                if slope.len() != grid.dim {
                    return Err(Error::Config(format!("target slope needs {} entries", grid.dim)));
                }
                Ok(FormField::from_fn(grid, 0, |_, x| value + slope.iter().zip(x).map(|(s, x)| s * x).sum::<f64>()))
            }
            TargetSpec::Samples { values } => {
                if values.len() != grid.len() {
                    return Err(Error::Config(format!("target has {} samples, grid has {} nodes", values.len(), grid.len())));
                }
                Ok(FormField::scalar(grid, values.clone()))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TargetSpec::Constant { .. })
    }
}

/// Where the homothety field comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaSource {
    Zero,
    /// `ln(1 + delta_n)` from the run's delta spec.
    FromDelta,
    Samples { values: Vec<f64> },
    /// Seeded band-limited random field.
    Smooth { amplitude: f64 },
}

impl LambdaSource {
    pub fn build(&self, grid: &Grid, delta: Option<&DeltaSpec>, seed: u64) -> Result<LambdaField> {
        match self {
            LambdaSource::Zero => Ok(LambdaField::zero(grid)),
            LambdaSource::FromDelta => {
                let spec = delta.ok_or_else(|| Error::Config("lambda source `from_delta` needs a delta table".into()))?;
                LambdaField::from_delta(&evaluate_delta(spec, grid)?, Some(spec.clone()))
            }
            LambdaSource::Samples { values } => {
                if values.len() != grid.len() {
                    return Err(Error::Config(format!("lambda has {} samples, grid has {} nodes", values.len(), grid.len())));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("lambda samples must be finite".into()));
                }
                Ok(LambdaField::from_values(grid, values.clone()))
            }
            LambdaSource::Smooth { amplitude } => Ok(random::smooth_lambda(&mut random::rng(seed), grid, *amplitude)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, LambdaSource::Zero)
    }
}

/// Piecewise-linear exact solution through `(x, value)` knots (1D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    PiecewiseLinear { knots: Vec<[f64; 2]> },
}

impl Reference {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Reference::PiecewiseLinear { knots } => {
                let i = knots.windows(2).position(|w| x <= w[1][0]).unwrap_or(knots.len().saturating_sub(2));
                let ([x0, y0], [x1, y1]) = (knots[i], knots[i + 1]);
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Reference::PiecewiseLinear { knots } => {
                if knots.len() < 2 || knots.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return Err(Error::Config("reference knots must be at least two with increasing x".into()));
                }
                Ok(())
            }
        }
    }
}

/// Turn a failed computation into a failing record so sweeps keep going.
pub fn guarded(name: &str, module: &'static str, anchor: &'static str, run: impl FnOnce() -> Result<Vec<CheckRecord>>) -> Vec<CheckRecord> {
    run().unwrap_or_else(|e| vec![CheckRecord::failed(name, module, anchor, &e)])
}

pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn form_csv(f: &FormField) -> String {
    let mut buf = Vec::new();
    f.write_csv(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is ascii")
}

pub fn json_lines<T: Serialize>(rows: &[T]) -> String {
    let mut s = String::new();
    for r in rows {
        let v = serde_json::to_value(r).expect("serializable row");
        let _ = writeln!(s, "{}", serde_json::to_string(&v).expect("json value"));
    }
    s
}

pub fn log2_ratio(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}
