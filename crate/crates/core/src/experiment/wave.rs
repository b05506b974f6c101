//! Damped and undamped homothetic wave runs on a bounded line.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::common::{csv, guarded, LambdaSource};
use super::{Artifact, ExperimentOutput};
use crate::em::{cfl_limit, classical_wave_step, relax_to_steady, transformed_energy, wave_step, WaveState};
use crate::error::{Error, Result};
use crate::grid::{build_grid, DeltaFamily, DeltaSpec, DoubledForm, FormField, Grid, GridSpec, LambdaField, Surface};
use crate::penalty::{solve_combined, Mode, OuterBc, PenaltyProblem};
use crate::report::{Bound, CheckRecord, VerificationSummary, ELECTROMAGNETICS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveParams {
    /// Constant target potential.
    pub target: f64,
    pub lower: f64,
    pub upper: f64,
    pub damping: f64,
    pub cfl_fraction: f64,
    /// Relaxation stops once the per-step change is below `tol dt max|phi|`.
    pub tol: f64,
    pub max_steps: usize,
    pub stability_steps: usize,
    pub perturbation: f64,
}

impl Default for WaveParams {
    fn default() -> Self {
        WaveParams {
            target: 1.0,
            lower: 0.0,
            upper: 0.0,
            damping: 3.0,
            cfl_fraction: 0.5,
            tol: 1e-12,
            max_steps: 200_000,
            stability_steps: 4000,
            perturbation: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveRun {
    pub output: Option<String>,
    pub grid: GridSpec,
    pub delta: DeltaSpec,
    pub lambda: LambdaSource,
    pub params: WaveParams,
}

impl Default for WaveRun {
    fn default() -> Self {
        WaveRun {
            output: None,
            grid: GridSpec::bounded(&[-1.0], &[2.0], &[257]),
            delta: DeltaSpec::new(DeltaFamily::Gaussian, 16.0, Surface::Point { center: vec![0.0] }),
            lambda: LambdaSource::FromDelta,
            params: WaveParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct WaveSummary {
    pub dt: f64,
    pub relax_steps: usize,
    pub relax_time: f64,
    pub steady_difference: Option<f64>,
    pub combined_residual: Option<f64>,
    pub energy_growth: Option<f64>,
    pub period_error: Option<f64>,
}

fn with_ends(grid: &Grid, interior: f64, lower: f64, upper: f64) -> Vec<f64> {
    let n = grid.len();
    (0..n).map(|i| if i == 0 { lower } else if i + 1 == n { upper } else { interior }).collect()
}

fn doubled(grid: &Grid, phi: Vec<f64>, target: &FormField) -> Result<DoubledForm> {
    DoubledForm::new(FormField::scalar(grid, phi), target.clone())
}

/// Sine mode vanishing at both ends.
fn standing_mode(grid: &Grid, amplitude: f64) -> Vec<f64> {
    let (a, len) = (grid.origin[0], grid.extent[0]);
    (0..grid.len()).map(|i| amplitude * (std::f64::consts::PI * (grid.node_coord(0, i) - a) / len).sin()).collect()
}

/// Relax the damped wave and compare with the direct combined solve.
pub fn relaxation(cfg: &WaveRun, grid: &Grid, lambda: &LambdaField, dt: f64, sum: &mut WaveSummary) -> Result<(Vec<CheckRecord>, WaveState)> {
    let p = &cfg.params;
    let target = FormField::constant(grid, p.target);
    let mut start = WaveState::at_rest(doubled(grid, with_ends(grid, p.target, p.lower, p.upper), &target)?)?;
    start.damping = p.damping;
    let steady = relax_to_steady(&start, lambda, dt, p.tol, p.max_steps)?;
    sum.relax_steps = steady.steps;
    sum.relax_time = steady.t;
    let mut out = Vec::new();
    if matches!(cfg.lambda, LambdaSource::FromDelta) {
        let prob = PenaltyProblem::new(cfg.delta.clone(), target, OuterBc::ends(p.lower, p.upper), Mode::Combined)?;
        let direct = solve_combined(&prob)?;
        let a = steady.field.top.values();
        let b = direct.solution.values();
        let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let diff = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale;
        sum.steady_difference = Some(diff);
        sum.combined_residual = Some(direct.residual);
        out.push(
            CheckRecord::new(
                "damped wave relaxes to the combined solution",
                ELECTROMAGNETICS,
                diff,
                Bound::AtMost(1e-6),
                "the static limit of the homothetic wave equation is the penalized Laplace problem",
            )
            .criterion(10),
        );
    }
    Ok((out, steady))
}

/// Undamped evolution of the steady state plus a standing perturbation. The
/// rescaled energy is conserved only up to the stencil error, so growth is
/// the energy envelope of the second half of the run over the first.
pub fn stability(grid: &Grid, lambda: &LambdaField, steady: &WaveState, dt: f64, p: &WaveParams) -> Result<(CheckRecord, f64)> {
    let bump = standing_mode(grid, p.perturbation);
    let phi: Vec<f64> = steady.field.top.values().iter().zip(&bump).map(|(a, b)| a + b).collect();
    let mut s = WaveState::at_rest(doubled(grid, phi, &steady.field.offset)?)?;
    let half = p.stability_steps / 2;
    let (mut early, mut late) = (transformed_energy(&s, lambda, dt), 0.0_f64);
    for i in 1..=p.stability_steps {
        s = wave_step(&s, lambda, dt)?;
        let e = transformed_energy(&s, lambda, dt);
        if i <= half {
            early = early.max(e);
        } else {
            late = late.max(e);
        }
    }
    let worst = late / early - 1.0;
    Ok((
        CheckRecord::new(
            "undamped wave energy growth",
            ELECTROMAGNETICS,
            worst,
            Bound::AtMost(0.05),
            "the rescaled deviation obeys the plain wave equation",
        ),
        worst,
    ))
}

/// A classical standing wave returns to its initial shape after one period.
pub fn classical_period(grid: &Grid, dt: f64) -> Result<(CheckRecord, f64)> {
    let zero = FormField::zeros(grid, 0);
    let shape = standing_mode(grid, 1.0);
    let mut s = WaveState::at_rest(doubled(grid, shape.clone(), &zero)?)?;
    let period = 2.0 * grid.extent[0];
    let steps = (period / dt).round() as usize;
    let dt = period / steps as f64;
    for _ in 0..steps {
        s = classical_wave_step(&s, dt)?;
    }
    let err = s.field.top.values().iter().zip(&shape).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok((
        CheckRecord::new(
            "classical standing wave period",
            ELECTROMAGNETICS,
            err,
            Bound::AtMost(0.01),
            "the lowest mode on a fixed string has period twice the length",
        ),
        err,
    ))
}

/// With `lambda = 0` the update is the classical leapfrog, bit for bit; with
/// `phi = phi_d` affine nothing moves.
pub fn limits(grid: &Grid, lambda: &LambdaField, dt: f64, steps: usize) -> Result<Vec<CheckRecord>> {
    let m = ELECTROMAGNETICS;
    let zero = LambdaField::zero(grid);
    let target = FormField::from_fn(grid, 0, |_, x| 0.3 + 0.2 * x[0]);
    let shape = standing_mode(grid, 1.0);
    let start = WaveState::at_rest(doubled(grid, shape, &target)?)?;
    let (mut a, mut b) = (start.clone(), start);
    let mut same = true;
    for _ in 0..steps {
        a = wave_step(&a, &zero, dt)?;
        b = classical_wave_step(&b, dt)?;
        same &= a.field.top.values() == b.field.top.values();
    }
    let mut still = WaveState::at_rest(doubled(grid, target.values().to_vec(), &target)?)?;
    let mut drift = 0.0_f64;
    for _ in 0..steps {
        still = wave_step(&still, lambda, dt)?;
        drift = drift.max(still.field.top.values().iter().zip(target.values()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())));
    }
    Ok(vec![
        CheckRecord::flag("wave step at lambda = 0 is classical", m, same, "with lambda = 0 the classical wave equation is recovered"),
        CheckRecord::new("affine offset state is stationary", m, drift, Bound::AtMost(1e-10), "phi = phi_d harmonic is a static solution"),
    ])
}

pub fn run(cfg: &WaveRun) -> Result<ExperimentOutput> {
    let m = ELECTROMAGNETICS;
    let config = |e: Error| Error::Config(e.to_string());
    let grid = build_grid(&cfg.grid).map_err(config)?;
    let p = &cfg.params;
    if grid.dim != 1 || grid.is_periodic() || grid.is_radial() {
        return Err(Error::Config("wave runs need a bounded 1D Cartesian grid".into()));
    }
    if !(p.cfl_fraction > 0.0 && p.cfl_fraction <= 1.0) || !(p.damping >= 0.0) {
        return Err(Error::Config("cfl_fraction must lie in (0, 1] and damping must be non-negative".into()));
    }
    cfg.delta.validate(&grid).map_err(config)?;
    let lambda = cfg.lambda.build(&grid, Some(&cfg.delta), 0).map_err(config)?;
    let dt = p.cfl_fraction * cfl_limit(&grid, &lambda);
    let mut sum = WaveSummary { dt, ..Default::default() };

    let mut steady = None;
    let mut records = guarded("wave relaxation", m, "damped relaxation", || {
        let (r, s) = relaxation(cfg, &grid, &lambda, dt, &mut sum)?;
        steady = Some(s);
        Ok(r)
    });
    if let Some(s) = &steady {
        match stability(&grid, &lambda, s, dt, p) {
            Ok((r, g)) => {
                sum.energy_growth = Some(g);
                records.push(r);
            }
            Err(e) => records.push(CheckRecord::failed("undamped wave energy growth", m, "undamped evolution", &e)),
        }
    }
    match classical_period(&grid, dt) {
        Ok((r, e)) => {
            sum.period_error = Some(e);
            records.push(r);
        }
        Err(e) => records.push(CheckRecord::failed("classical standing wave period", m, "classical wave", &e)),
    }
    records.extend(guarded("wave limits", m, "wave limits", || limits(&grid, &lambda, dt, 200)));

    let mut artifacts = Vec::new();
    if let Some(s) = &steady {
        let rows = (0..grid.len()).map(|i| vec![grid.node_coord(0, i), s.field.top.values()[i], lambda.values[i]]);
        artifacts.push(Artifact::new("steady.csv", csv(&["x", "phi", "lambda"], rows)));
    }
    Ok(ExperimentOutput::new("wave", VerificationSummary::from_records(records), json!({ "wave": sum }), artifacts))
}
