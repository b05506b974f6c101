//! Hodge decomposition and cohomology on the periodic square.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::common::{form_csv, guarded};
use super::{Artifact, ExperimentOutput};
use crate::calculus::{cohomology_dims, hodge_decompose, torus_betti, CohomologyDims, HodgeSplit, OperatorSet};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Grid, GridSpec};
use crate::random;
use crate::report::{Bound, CheckRecord, VerificationSummary, CALCULUS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HodgeParams {
    pub lambdas: usize,
    pub lambda_amplitude: f64,
    /// Side of the small square used for the topology-invariance sweep.
    pub invariance_points: usize,
    pub invariance_lambdas: usize,
}

impl Default for HodgeParams {
    fn default() -> Self {
        HodgeParams { lambdas: 5, lambda_amplitude: 1.0, invariance_points: 8, invariance_lambdas: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HodgeRun {
    pub seed: u64,
    pub output: Option<String>,
    pub grid: GridSpec,
    pub params: HodgeParams,
}

impl Default for HodgeRun {
    fn default() -> Self {
        HodgeRun { seed: 1, output: None, grid: GridSpec::periodic(&[TAU, TAU], &[16, 16]), params: HodgeParams::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HodgeRow {
    pub lambda_index: usize,
    pub reconstruction: f64,
    pub orthogonality: [f64; 3],
    pub harmonic_residual: f64,
    pub iterations: [usize; 2],
    pub cohomology: Vec<CohomologyDims>,
}

fn dims_match(grid: &Grid, dims: &[CohomologyDims]) -> bool {
    dims.iter().all(|d| d.fiber == torus_betti(grid.dim, d.k) && d.doubled == 2 * torus_betti(grid.dim, d.k))
}

/// Random doubled 1-forms split under several random lambda fields.
pub fn decompositions(grid: &Grid, seed: u64, p: &HodgeParams) -> Result<(Vec<CheckRecord>, Vec<HodgeRow>, Option<HodgeSplit>)> {
    let m = CALCULUS;
    let mut rng = random::rng(seed);
    let mut rows = Vec::new();
    let mut first = None;
    for i in 0..p.lambdas {
        let lam = random::smooth_lambda(&mut rng, grid, p.lambda_amplitude);
        let ops = OperatorSet::new(&lam)?;
        let f = random::noise_doubled(&mut rng, grid, 1);
        let split = hodge_decompose(&ops, &f)?;
        let cohomology = (0..=grid.dim).map(|k| cohomology_dims(&ops, k)).collect::<Result<Vec<_>>>()?;
        rows.push(HodgeRow {
            lambda_index: i,
            reconstruction: split.reconstruction,
            orthogonality: split.orthogonality,
            harmonic_residual: split.harmonic_residual,
            iterations: split.iterations,
            cohomology,
        });
        if first.is_none() {
            first = Some(split);
        }
    }
    let worst = |f: &dyn Fn(&HodgeRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let anchor = "forms split orthogonally into exact, coexact and harmonic parts";
    let mut out = vec![
        CheckRecord::new("Hodge reconstruction", m, worst(&|r| r.reconstruction), Bound::AtMost(1e-10), anchor).criterion(3),
        CheckRecord::new(
            "Hodge orthogonality",
            m,
            worst(&|r| r.orthogonality.iter().cloned().fold(0.0, f64::max)),
            Bound::AtMost(1e-10),
            anchor,
        )
        .criterion(3),
    ];
    let ambiguous = rows.iter().any(|r| r.cohomology.iter().any(|d| d.indeterminate));
    let rec = CheckRecord::flag(
        "harmonic dimensions equal torus Betti numbers",
        m,
        rows.iter().all(|r| dims_match(grid, &r.cohomology)),
        "the homothetic structure leaves the cohomology of the torus unchanged",
    )
    .criterion(3);
    out.push(if ambiguous { rec.indeterminate("a singular value fell inside the rank ambiguity band") } else { rec });
    Ok((out, rows, first))
}

/// Exact input has no coexact or harmonic part; kernel sizes do not move with lambda.
pub fn decomposition_properties(seed: u64, p: &HodgeParams) -> Result<Vec<CheckRecord>> {
    let m = CALCULUS;
    let small = build_grid(&GridSpec::periodic(&[TAU, TAU], &[p.invariance_points, p.invariance_points]))?;
    let mut rng = random::rng(seed.wrapping_add(11));
    let lam = random::smooth_lambda(&mut rng, &small, p.lambda_amplitude);
    let ops = OperatorSet::new(&lam)?;
    let alpha = random::noise_doubled(&mut rng, &small, 0);
    let exact = ops.d_hat(&alpha)?;
    let split = hodge_decompose(&ops, &exact)?;
    let scale = ops.norm(&exact);
    let leak = (ops.norm(&split.coexact) + ops.norm(&split.harmonic)) / scale;
    let mut out = vec![CheckRecord::new("exact input stays exact", m, leak, Bound::AtMost(1e-9), "d^ alpha has no coexact or harmonic part")];

    let mut reference: Option<Vec<(usize, usize)>> = None;
    let mut same = true;
    let mut ambiguous = false;
    for _ in 0..p.invariance_lambdas {
        let lam = random::smooth_lambda(&mut rng, &small, p.lambda_amplitude);
        let ops = OperatorSet::new(&lam)?;
        let dims = (0..=small.dim).map(|k| cohomology_dims(&ops, k)).collect::<Result<Vec<_>>>()?;
        ambiguous |= dims.iter().any(|d| d.indeterminate);
        let key: Vec<(usize, usize)> = dims.iter().map(|d| (d.fiber, d.doubled)).collect();
        match &reference {
            None => reference = Some(key),
            Some(r) => same &= *r == key,
        }
    }
    let rec = CheckRecord::flag(
        "cohomology identical across random lambda",
        m,
        same,
        "the underlying topology is unchanged by the homothety",
    );
    out.push(if ambiguous { rec.indeterminate("a singular value fell inside the rank ambiguity band") } else { rec });
    Ok(out)
}

pub fn run(cfg: &HodgeRun) -> Result<ExperimentOutput> {
    let grid = build_grid(&cfg.grid).map_err(|e| Error::Config(e.to_string()))?;
    if !grid.is_periodic() {
        return Err(Error::Config("the Hodge decomposition needs a periodic grid".into()));
    }
    let p = &cfg.params;
    let mut rows = Vec::new();
    let mut split = None;
    let mut records = guarded("Hodge decomposition", CALCULUS, "Hodge decomposition", || {
        let (r, t, s) = decompositions(&grid, cfg.seed, p)?;
        rows = t;
        split = s;
        Ok(r)
    });
    records.extend(guarded("decomposition properties", CALCULUS, "Hodge decomposition", || decomposition_properties(cfg.seed, p)));
    let mut artifacts = Vec::new();
    if let Some(s) = &split {
        artifacts.push(Artifact::new("exact.csv", form_csv(&s.exact.top)));
        artifacts.push(Artifact::new("coexact.csv", form_csv(&s.coexact.top)));
        artifacts.push(Artifact::new("harmonic.csv", form_csv(&s.harmonic.top)));
    }
    Ok(ExperimentOutput::new("hodge", VerificationSummary::from_records(records), json!({ "splits": rows }), artifacts))
}
