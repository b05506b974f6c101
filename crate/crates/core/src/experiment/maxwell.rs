//! Homothetic Maxwell runs: classical limit, Gauss residuals, stability,
//! refinement and the 1D barrier sweep.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::common::{csv, guarded, LambdaSource};
use super::{Artifact, ExperimentOutput};
use crate::em::{
    self, cfl_limit, classical_maxwell_step, conservation_residual, gauss_residuals, maxwell_step, plain_divergence, te_fields, tm_magnetic,
    EMState, GaugeState,
};
use crate::error::{Error, Result};
use crate::grid::{self, build_grid, DeltaSpec, Grid, GridSpec, LambdaField};
use crate::random::{self, SmoothField};
use crate::report::{Bound, CheckRecord, VerificationSummary, ELECTROMAGNETICS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// Seeded smooth fields with discrete-divergence-free magnetic part.
    Compliant,
    /// Right-moving Gaussian pulse (1D only).
    Pulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Offsets {
    /// Copies of the initial fields. Unless they are static solutions they
    /// act as a source, so the weighted energy is not conserved.
    Frozen,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSpec {
    pub center: f64,
    pub width: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        PulseSpec { center: 1.0, width: 0.1 }
    }
}

/// Smooth plateau `amplitude` on `[start, end]` swept over amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSweep {
    pub start: f64,
    pub end: f64,
    pub edge_width: f64,
    pub amplitudes: Vec<f64>,
    pub probe: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaxwellParams {
    pub steps: usize,
    pub cfl_fraction: f64,
    pub initial: Initial,
    pub offsets: Offsets,
    /// Probe locations; the nearest node records every component of E.
    pub probes: Vec<Vec<f64>>,
    pub modes: usize,
    pub pulse: PulseSpec,
    /// Square sides for the transverse-electric Gauss refinement (2D).
    pub refinement: Vec<usize>,
    pub barrier: Option<BarrierSweep>,
}

impl Default for MaxwellParams {
    fn default() -> Self {
        MaxwellParams {
            steps: 1000,
            cfl_fraction: 0.5,
            initial: Initial::Compliant,
            offsets: Offsets::Zero,
            probes: vec![vec![1.0, 2.0]],
            modes: 2,
            pulse: PulseSpec::default(),
            refinement: Vec::new(),
            barrier: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaxwellRun {
    pub seed: u64,
    pub output: Option<String>,
    pub grid: GridSpec,
    pub lambda: LambdaSource,
    pub delta: Option<DeltaSpec>,
    pub params: MaxwellParams,
}

impl Default for MaxwellRun {
    fn default() -> Self {
        MaxwellRun {
            seed: 1,
            output: None,
            grid: GridSpec::periodic(&[TAU, TAU], &[32, 32]),
            lambda: LambdaSource::Zero,
            delta: None,
            params: MaxwellParams::default(),
        }
    }
}

fn sample(grid: &Grid, f: &SmoothField, mask: u8) -> Vec<f64> {
    (0..grid.len()).map(|p| f.eval(&grid::location(grid, p, mask))).collect()
}

/// Seeded smooth initial data. In 2D the transverse-electric part is
/// `e^{-lambda}` times a discrete curl, so the generalized Gauss law holds
/// up to the interpolation of lambda; the magnetic field is a discrete curl.
pub fn compliant_fields(grid: &Grid, lambda: &LambdaField, seed: u64, modes: usize, te_only: bool) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = random::rng(seed);
    let n = grid.len();
    if grid.dim == 1 {
        let ey = SmoothField::draw(&mut rng, grid, modes, 1.0);
        let bz = SmoothField::draw(&mut rng, grid, modes, 1.0);
        return (vec![sample(grid, &ey, 0)], vec![sample(grid, &bz, 0)]);
    }
    let psi = SmoothField::draw(&mut rng, grid, modes, 1.0);
    let bz = SmoothField::draw(&mut rng, grid, modes, 1.0);
    let ez = SmoothField::draw(&mut rng, grid, modes, 1.0);
    let zeta = SmoothField::draw(&mut rng, grid, modes, 1.0);
    let mut e = te_fields(grid, &sample(grid, &psi, 0b11), Some(lambda));
    let mut b = vec![vec![0.0; n], vec![0.0; n], sample(grid, &bz, 0b11)];
    if !te_only {
        e[2] = sample(grid, &ez, 0);
        let tm = tm_magnetic(grid, &sample(grid, &zeta, 0));
        b[0] = tm[0].clone();
        b[1] = tm[1].clone();
    }
    (e, b)
}

fn pulse_fields(grid: &Grid, pulse: &PulseSpec) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let len = grid.extent[0];
    let f: Vec<f64> = (0..grid.len())
        .map(|i| {
            let mut d = (grid.node_coord(0, i) - pulse.center).rem_euclid(len);
            if d > 0.5 * len {
                d -= len;
            }
            (-0.5 * (d / pulse.width).powi(2)).exp()
        })
        .collect();
    (vec![f.clone()], vec![f])
}

fn make_state(grid: &Grid, e: Vec<Vec<f64>>, b: Vec<Vec<f64>>, offsets: Offsets) -> Result<EMState> {
    match offsets {
        Offsets::Frozen => EMState::with_frozen_offsets(grid, e, b),
        Offsets::Zero => EMState::with_zero_offsets(grid, e, b),
    }
}

fn nearest_node(grid: &Grid, x: &[f64]) -> Result<usize> {
    if x.len() != grid.dim {
        return Err(Error::Config(format!("probe {x:?} needs {} coordinates", grid.dim)));
    }
    let idx: Vec<usize> = (0..grid.dim)
        .map(|a| {
            let i = ((x[a] - grid.origin[a]) / grid.spacing[a]).round() as i64;
            i.rem_euclid(grid.points[a] as i64) as usize
        })
        .collect();
    Ok(grid.ravel(&idx))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EvolutionSummary {
    pub steps: usize,
    pub dt: f64,
    pub final_time: f64,
    /// Energies are the lambda-weighted deviation energy.
    pub initial_energy: f64,
    pub max_energy_ratio: f64,
    /// Energy envelope of the second half of the run over the first half.
    pub energy_growth: f64,
    pub max_electric_gauss: f64,
    pub max_magnetic_gauss: f64,
    /// Step at which the classical reference first differs, if it was run.
    pub classical_mismatch: Option<usize>,
    pub classical_compared: bool,
}

struct Evolution {
    summary: EvolutionSummary,
    probe_rows: Vec<Vec<f64>>,
    last: EMState,
}

fn evolve(start: EMState, lambda: &LambdaField, dt: f64, steps: usize, compare: bool, probes: &[usize]) -> Result<Evolution> {
    let mut s = start.clone();
    let mut reference = compare.then(|| start.clone());
    let e0 = s.weighted_energy(lambda);
    let g0 = gauss_residuals(&s, lambda);
    let mut sum = EvolutionSummary {
        steps,
        dt,
        initial_energy: e0,
        max_energy_ratio: 1.0,
        max_electric_gauss: g0.electric,
        max_magnetic_gauss: g0.magnetic,
        classical_compared: compare,
        ..Default::default()
    };
    let half = steps / 2;
    let (mut early, mut late) = (e0, 0.0f64);
    let probe_row = |s: &EMState| {
        let mut row = vec![s.steps as f64, s.t];
        for &p in probes {
            row.extend(s.e.iter().map(|c| c[p]));
        }
        row
    };
    let mut rows = vec![probe_row(&s)];
    for _ in 0..steps {
        s = maxwell_step(&s, lambda, dt)?;
        if let Some(r) = reference.as_mut() {
            *r = classical_maxwell_step(r, dt)?;
            if sum.classical_mismatch.is_none() && (r.e != s.e || r.b != s.b) {
                sum.classical_mismatch = Some(s.steps);
            }
        }
        let g = gauss_residuals(&s, lambda);
        sum.max_electric_gauss = sum.max_electric_gauss.max(g.electric);
        sum.max_magnetic_gauss = sum.max_magnetic_gauss.max(g.magnetic);
        let e = s.weighted_energy(lambda);
        sum.max_energy_ratio = sum.max_energy_ratio.max(e / e0.max(f64::MIN_POSITIVE));
        if s.steps <= half {
            early = early.max(e);
        } else {
            late = late.max(e);
        }
        if !probes.is_empty() {
            rows.push(probe_row(&s));
        }
    }
    sum.final_time = s.t;
    sum.energy_growth = if steps >= 2 { late / early.max(f64::MIN_POSITIVE) - 1.0 } else { 0.0 };
    Ok(Evolution { summary: sum, probe_rows: rows, last: s })
}

/// Classical limit and Gauss laws at `lambda = 0` on the given grid.
pub fn classical_limit(grid: &Grid, seed: u64, p: &MaxwellParams) -> Result<(Vec<CheckRecord>, EvolutionSummary)> {
    let m = ELECTROMAGNETICS;
    let zero = LambdaField::zero(grid);
    let (e, b) = match p.initial {
        Initial::Compliant => compliant_fields(grid, &zero, seed, p.modes, false),
        Initial::Pulse => pulse_fields(grid, &p.pulse),
    };
    let start = make_state(grid, e, b, p.offsets)?;
    let dt = p.cfl_fraction * cfl_limit(grid, &zero);
    let ev = evolve(start, &zero, dt, p.steps, true, &[])?;
    let label = format!("{}D", grid.dim);
    let mut out = vec![CheckRecord::flag(
        format!("classical limit is bitwise, {label}"),
        m,
        ev.summary.classical_mismatch.is_none(),
        "with d lambda = 0 the classical Maxwell equations are recovered",
    )
    .criterion(8)];
    if grid.dim == 2 {
        let anchor = "the staggered scheme preserves the discrete Gauss laws";
        out.push(CheckRecord::new("electric Gauss residual at lambda = 0", m, ev.summary.max_electric_gauss, Bound::AtMost(1e-10), anchor).criterion(8));
        out.push(CheckRecord::new("magnetic Gauss residual at lambda = 0", m, ev.summary.max_magnetic_gauss, Bound::AtMost(1e-10), anchor).criterion(8));
    }
    Ok((out, ev.summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementRung {
    pub points: usize,
    pub h: f64,
    pub steps: usize,
    pub max_electric_gauss: f64,
}

/// Worst generalized electric Gauss residual for transverse-electric data
/// over a fixed time, at each square side.
pub fn gauss_refinement(cfg: &MaxwellRun) -> Result<(Vec<CheckRecord>, Vec<RefinementRung>)> {
    let p = &cfg.params;
    let mut rungs = Vec::new();
    let mut horizon = None;
    for &n in &p.refinement {
        let mut spec = cfg.grid.clone();
        spec.points = vec![n; spec.points.len()];
        let g = build_grid(&spec)?;
        let lam = cfg.lambda.build(&g, cfg.delta.as_ref(), cfg.seed)?;
        let (e, b) = compliant_fields(&g, &lam, cfg.seed.wrapping_add(3), p.modes, true);
        let start = make_state(&g, e, b, p.offsets)?;
        let dt0 = p.cfl_fraction * cfl_limit(&g, &lam);
        let t_end = *horizon.get_or_insert(dt0 * p.steps as f64);
        let steps = (t_end / dt0).ceil() as usize;
        let ev = evolve(start, &lam, t_end / steps as f64, steps, false, &[])?;
        rungs.push(RefinementRung { points: n, h: g.spacing[0], steps, max_electric_gauss: ev.summary.max_electric_gauss });
    }
    let out = rungs
        .windows(2)
        .map(|w| {
            CheckRecord::new(
                format!("electric Gauss refinement ratio {} -> {}", w[0].points, w[1].points),
                ELECTROMAGNETICS,
                w[0].max_electric_gauss / w[1].max_electric_gauss,
                Bound::Within([3.2, 4.8]),
                "the generalized Gauss law holds to second order along the evolution",
            )
        })
        .collect();
    Ok((out, rungs))
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierRow {
    pub amplitude: f64,
    pub peak: f64,
}

/// Peak of `E_y` at the probe for a pulse crossing barriers of growing height.
pub fn barrier_sweep(grid: &Grid, p: &MaxwellParams, sweep: &BarrierSweep) -> Result<(Vec<CheckRecord>, Vec<BarrierRow>)> {
    if grid.dim != 1 {
        return Err(Error::Config("the barrier sweep runs on 1D grids".into()));
    }
    let probe = nearest_node(grid, &[sweep.probe])?;
    let rows = crate::exec::map_slice(&sweep.amplitudes, |&a| -> Result<BarrierRow> {
        let lam = LambdaField::from_fn(grid, |x| {
            let s = |c: f64| ((x[0] - c) / sweep.edge_width).tanh();
            0.5 * a * (s(sweep.start) - s(sweep.end))
        });
        let (e, b) = pulse_fields(grid, &p.pulse);
        let start = EMState::with_zero_offsets(grid, e, b)?;
        let dt = p.cfl_fraction * cfl_limit(grid, &lam);
        let steps = (sweep.duration / dt).ceil() as usize;
        let ev = evolve(start, &lam, dt, steps, false, &[probe])?;
        let peak = ev.probe_rows.iter().map(|r| r[2].abs()).fold(0.0, f64::max);
        Ok(BarrierRow { amplitude: a, peak })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[1].amplitude <= w[0].amplitude || w[1].peak < w[0].peak);
    Ok((
        vec![CheckRecord::flag(
            "transmitted pulse decreases with barrier height",
            ELECTROMAGNETICS,
            monotone,
            "the field is slowed and screened where lambda is large",
        )],
        rows,
    ))
}

/// On the offset state the coupling vanishes, so the magnetic update is classical.
pub fn offset_fixed_point(grid: &Grid, lambda: &LambdaField, seed: u64, p: &MaxwellParams) -> Result<Vec<CheckRecord>> {
    let (e, b) = match p.initial {
        Initial::Compliant => compliant_fields(grid, lambda, seed, p.modes, false),
        Initial::Pulse => pulse_fields(grid, &p.pulse),
    };
    let s = EMState::with_frozen_offsets(grid, e, b)?;
    let dt = p.cfl_fraction * cfl_limit(grid, lambda);
    let a = maxwell_step(&s, lambda, dt)?;
    let c = classical_maxwell_step(&s, dt)?;
    let diff = a.b.iter().zip(&c.b).flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max);
    Ok(vec![CheckRecord::new(
        "coupling vanishes on the offset state",
        ELECTROMAGNETICS,
        diff,
        Bound::Equals(0.0),
        "with E = E_d and B = B_d the penalty terms cancel",
    )])
}

/// With the offset potential identified with the potential, the generalized
/// Lorenz residual is the plain divergence, bit for bit.
pub fn gauge_conservation(grid: &Grid, seed: u64, states: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = random::rng(seed.wrapping_add(9));
    let mut identical = true;
    for _ in 0..states {
        let lam = random::smooth_lambda(&mut rng, grid, 1.0);
        let a: Vec<Vec<f64>> = (0..grid.dim).map(|_| random::smooth_scalar(&mut rng, grid, 3, 1.0)).collect();
        let phi = random::smooth_scalar(&mut rng, grid, 3, 1.0);
        let g = GaugeState::identified(grid, a, phi)?;
        let res = conservation_residual(&g, &lam)?;
        let div = plain_divergence(grid, &g.a);
        identical &= res.iter().zip(&div).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    Ok(vec![CheckRecord::flag(
        "Lorenz residual equals the plain divergence",
        ELECTROMAGNETICS,
        identical,
        "identifying A_d with A removes the homothetic correction",
    )
    .criterion(9)])
}

fn fields_csv(s: &EMState) -> String {
    let g = &s.grid;
    let mut header: Vec<String> = (0..g.dim).map(|a| format!("axis{a}")).collect();
    header.extend(["field".into(), "component".into(), "value".into()]);
    let h: Vec<&str> = header.iter().map(|x| x.as_str()).collect();
    let mut rows = Vec::new();
    for (f, comps) in [(0.0, &s.e), (1.0, &s.b)] {
        for (c, comp) in comps.iter().enumerate() {
            for (p, v) in comp.iter().enumerate() {
                let mut row = s.location(f == 0.0, c, p);
                row.extend([f, c as f64, *v]);
                rows.push(row);
            }
        }
    }
    csv(&h, rows)
}

pub fn run(cfg: &MaxwellRun) -> Result<ExperimentOutput> {
    let m = ELECTROMAGNETICS;
    let config = |e: Error| Error::Config(e.to_string());
    let grid = build_grid(&cfg.grid).map_err(config)?;
    let p = &cfg.params;
    if !grid.is_periodic() || grid.dim > 2 || grid.is_radial() {
        return Err(Error::Config("Maxwell runs need a periodic 1D or 2D Cartesian grid".into()));
    }
    if p.initial == Initial::Pulse && grid.dim != 1 {
        return Err(Error::Config("the pulse initial condition is 1D only".into()));
    }
    if !(p.cfl_fraction > 0.0 && p.cfl_fraction <= 1.0) {
        return Err(Error::Config("cfl_fraction must lie in (0, 1]".into()));
    }
    if !p.refinement.is_empty() && (grid.dim != 2 || matches!(cfg.lambda, LambdaSource::Samples { .. })) {
        return Err(Error::Config("refinement needs a 2D grid and a lambda defined off the grid".into()));
    }
    if let Some(d) = &cfg.delta {
        d.validate(&grid).map_err(config)?;
    }
    let lambda = cfg.lambda.build(&grid, cfg.delta.as_ref(), cfg.seed).map_err(config)?;
    let probes = p.probes.iter().map(|x| nearest_node(&grid, x)).collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut report = serde_json::Map::new();
    let mut artifacts = Vec::new();
    let (e, b) = match p.initial {
        Initial::Compliant => compliant_fields(&grid, &lambda, cfg.seed, p.modes, false),
        Initial::Pulse => pulse_fields(&grid, &p.pulse),
    };
    let dt = p.cfl_fraction * cfl_limit(&grid, &lambda);
    let zero = cfg.lambda.is_zero();
    match make_state(&grid, e, b, p.offsets).and_then(|s| evolve(s, &lambda, dt, p.steps, zero, &probes)) {
        Ok(ev) => {
            let s = &ev.summary;
            if zero {
                records.push(CheckRecord::flag(
                    format!("classical limit is bitwise, {}D", grid.dim),
                    m,
                    s.classical_mismatch.is_none(),
                    "with d lambda = 0 the classical Maxwell equations are recovered",
                ).criterion(8));
                if grid.dim == 2 {
                    let anchor = "the staggered scheme preserves the discrete Gauss laws";
                    records.push(CheckRecord::new("electric Gauss residual at lambda = 0", m, s.max_electric_gauss, Bound::AtMost(1e-10), anchor).criterion(8));
                    records.push(CheckRecord::new("magnetic Gauss residual at lambda = 0", m, s.max_magnetic_gauss, Bound::AtMost(1e-10), anchor).criterion(8));
                }
            }
            records.push(CheckRecord::new(
                "field energy growth",
                m,
                s.energy_growth,
                Bound::AtMost(0.05),
                "evolution under the CFL bound stays bounded",
            ));
            let mut header = vec!["step".to_string(), "t".to_string()];
            for (i, _) in probes.iter().enumerate() {
                for c in 0..ev.last.e.len() {
                    header.push(format!("probe{i}_e{c}"));
                }
            }
            let h: Vec<&str> = header.iter().map(|x| x.as_str()).collect();
            artifacts.push(Artifact::new("probes.csv", csv(&h, ev.probe_rows.clone())));
            artifacts.push(Artifact::new("fields.csv", fields_csv(&ev.last)));
            report.insert("evolution".into(), serde_json::to_value(s).expect("serializable"));
            report.insert("final_gauss".into(), serde_json::to_value(em::gauss_residuals(&ev.last, &lambda)).expect("serializable"));
        }
        Err(e) => records.push(CheckRecord::failed("Maxwell evolution", m, "homothetic Maxwell evolution", &e)),
    }
    records.extend(guarded("gauge conservation", m, "conservation identity", || gauge_conservation(&grid, cfg.seed, 20)));
    records.extend(guarded("offset fixed point", m, "offset state", || offset_fixed_point(&grid, &lambda, cfg.seed, p)));
    if !p.refinement.is_empty() {
        let mut rungs = Vec::new();
        records.extend(guarded("Gauss refinement", m, "generalized Gauss law", || {
            let (r, g) = gauss_refinement(cfg)?;
            rungs = g;
            Ok(r)
        }));
        report.insert("refinement".into(), serde_json::to_value(&rungs).expect("serializable"));
    }
    if let Some(sweep) = &p.barrier {
        let mut rows = Vec::new();
        records.extend(guarded("barrier sweep", m, "pulse through a lambda barrier", || {
            let (r, t) = barrier_sweep(&grid, p, sweep)?;
            rows = t;
            Ok(r)
        }));
        artifacts.push(Artifact::new("barrier.csv", csv(&["amplitude", "peak"], rows.iter().map(|r| vec![r.amplitude, r.peak]))));
        report.insert("barrier".into(), serde_json::to_value(&rows).expect("serializable"));
    }
    Ok(ExperimentOutput::new("maxwell", VerificationSummary::from_records(records), serde_json::Value::Object(report), artifacts))
}
