//! Penalized Laplace problems with the log-delta gauge `lambda = ln(1+delta_n)`.
//!
//! Interior rows discretize
//!
//! ```text
//!   lap(phi) + 2 q . (grad phi - grad phi_d) + p (phi - phi_d) = s,
//!   q = grad(delta)/(1+delta),  p = lap(delta)/(1+delta),
//! ```
//!
//! with the grid stencils of [`crate::grid`]. The Dirichlet mode drops the
//! `q` term and the Neumann mode drops the `p` term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{self, evaluate_delta, DeltaSpec, FormField, Grid, LambdaField, Topology};
use crate::linalg::{self, Banded};
use crate::sparse::Csr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Combined,
    DirichletPenalty,
    NeumannPenalty,
}

/// Condition on one face of a bounded axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideBc {
    Value(f64),
    /// `phi = phi_d` on the face.
    Target,
    /// `phi = 0`.
    Decay,
    /// Outward normal derivative.
    Flux(f64),
    /// Outward normal derivative of the target.
    TargetFlux,
}

impl SideBc {
    fn is_flux(self) -> bool {
        matches!(self, SideBc::Flux(_) | SideBc::TargetFlux)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterBc {
    pub lower: Vec<SideBc>,
    pub upper: Vec<SideBc>,
}

impl OuterBc {
    pub fn uniform(dim: usize, side: SideBc) -> Self {
        OuterBc { lower: vec![side; dim], upper: vec![side; dim] }
    }

    /// Values at the two ends of a 1D or radial grid.
    pub fn ends(lower: f64, upper: f64) -> Self {
        OuterBc { lower: vec![SideBc::Value(lower)], upper: vec![SideBc::Value(upper)] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Banded LU up to 1e5 unknowns, BiCGStab beyond.
    #[default]
    Auto,
    Direct,
    Iterative,
}

pub const SOLVER_TOL: f64 = 1e-10;
const DIRECT_LIMIT: usize = 100_000;

#[derive(Debug, Clone)]
pub struct PenaltyProblem {
    pub grid: Grid,
    pub delta: DeltaSpec,
    pub target: FormField,
    /// Defaults to the stencil gradient of `target`.
    pub target_gradient: Vec<Vec<f64>>,
    pub outer: OuterBc,
    pub mode: Mode,
    /// Right-hand side `s`; zero when absent.
    pub source: Option<Vec<f64>>,
    /// Node pinned to `phi_d` for pure Neumann boundaries.
    pub gauge_node: Option<usize>,
    /// Multipliers on the gradient-coupling and reaction terms of the modes
    /// that keep them.
    pub term_weights: [f64; 2],
    pub solver: SolverKind,
    pub initial_guess: Option<Vec<f64>>,
}

impl PenaltyProblem {
    pub fn new(delta: DeltaSpec, target: FormField, outer: OuterBc, mode: Mode) -> Result<Self> {
        let grid = target.grid.clone();
        if target.k != 0 {
            return Err(Error::Degree { k: target.k, what: "penalty target (must be a 0-form)" });
        }
        if grid.topology.contains(&Topology::Periodic) {
            return Err(Error::InvalidGrid("penalty problems need bounded axes".into()));
        }
        if outer.lower.len() != grid.dim || outer.upper.len() != grid.dim {
            return Err(Error::InvalidArgument("one boundary condition per face is required".into()));
        }
        if target.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("target potential must be finite".into()));
        }
        delta.validate(&grid)?;
        let target_gradient = grid::gradient(&grid, target.values());
        Ok(PenaltyProblem {
            grid,
            delta,
            target,
            target_gradient,
            outer,
            mode,
            source: None,
            gauge_node: None,
            term_weights: [1.0, 1.0],
            solver: SolverKind::Auto,
            initial_guess: None,
        })
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        PenaltyProblem { mode, ..self.clone() }
    }

    pub fn with_sharpness(&self, n: f64) -> Self {
        PenaltyProblem { delta: self.delta.with_sharpness(n), ..self.clone() }
    }
}

/// `(q, p)` coefficient fields of the penalized operator.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub lambda: LambdaField,
    pub gradient: Vec<Vec<f64>>,
    pub reaction: Vec<f64>,
}

pub fn coefficients(delta: &DeltaSpec, grid: &Grid) -> Result<Coefficients> {
    let d = evaluate_delta(delta, grid)?;
    let lambda = LambdaField::from_delta(&d, Some(delta.clone()))?;
    Ok(Coefficients { gradient: lambda.gradient.clone(), reaction: lambda.reaction_coefficient(), lambda })
}

/// `lambda = ln(1+delta)` with the quotient gradient cached.
pub fn lambda_from_delta(delta: &FormField) -> Result<LambdaField> {
    LambdaField::from_delta(delta, None)
}

#[derive(Debug, Clone, Serialize)]
pub struct PenaltySolveReport {
    #[serde(skip)]
    pub solution: FormField,
    pub mode: Mode,
    pub n: f64,
    pub h: Vec<f64>,
    /// Normwise backward error `|A x - b| / (|A| |x| + |b|)` in the max norm.
    pub residual: f64,
    /// Sup of `|lap phi - s|` away from the band, on each side of the surface.
    pub interior_residual: f64,
    pub exterior_residual: f64,
    /// Sup over `|s| <= 2/n` of `|phi - phi_d|`.
    pub value_gap: f64,
    /// Sup over the band of `|d_n phi - d_n phi_d|`, where a normal exists.
    pub flux_gap: Option<f64>,
    /// The gap matching the mode (flux for the Neumann mode).
    pub gap: f64,
    /// Sup of the two penalty terms evaluated on the solution.
    pub penalty_terms: [f64; 2],
    pub energy: f64,
    pub iterations: usize,
    pub solver: &'static str,
}

#[derive(Clone, Copy)]
struct Terms {
    gradient: Option<f64>,
    reaction: Option<f64>,
}

fn terms(p: &PenaltyProblem) -> Terms {
    let [wg, wr] = p.term_weights;
    match p.mode {
        Mode::Combined => Terms { gradient: Some(wg), reaction: Some(wr) },
        Mode::DirichletPenalty => Terms { gradient: None, reaction: Some(wr) },
        Mode::NeumannPenalty => Terms { gradient: Some(wg), reaction: None },
    }
}

/// Face of the first bounded axis on which `p` lies: `(axis, upper)`.
fn boundary_face(grid: &Grid, p: usize) -> Option<(usize, bool)> {
    (0..grid.dim).find_map(|a| {
        let i = grid.index_on(p, a);
        if i == 0 {
            Some((a, false))
        } else if i + 1 == grid.points[a] {
            Some((a, true))
        } else {
            None
        }
    })
}

/// Matrix triplets and right-hand side.
type Assembled = (Vec<(usize, usize, f64)>, Vec<f64>);

fn assemble(prob: &PenaltyProblem, coef: &Coefficients, t: Terms) -> Result<Assembled> {
    let grid = &prob.grid;
    let n = grid.len();
    let phi_d = prob.target.values();
    let mut trip = Vec::with_capacity(n * (2 * grid.dim + 2) * 2);
    let mut rhs = vec![0.0; n];
    let pure_neumann = (0..grid.dim).all(|a| prob.outer.lower[a].is_flux() && prob.outer.upper[a].is_flux());
    if pure_neumann && prob.gauge_node.is_none() {
        return Err(Error::FloatingNullSpace);
    }
    for p in 0..n {
        if Some(p) == prob.gauge_node {
            trip.push((p, p, 1.0));
            rhs[p] = phi_d[p];
            continue;
        }
        if let Some((a, upper)) = boundary_face(grid, p) {
            let side = if upper { prob.outer.upper[a] } else { prob.outer.lower[a] };
            let h = grid.spacing[a];
            match side {
                SideBc::Value(v) => {
                    trip.push((p, p, 1.0));
                    rhs[p] = v;
                }
                SideBc::Target => {
                    trip.push((p, p, 1.0));
                    rhs[p] = phi_d[p];
                }
                SideBc::Decay => trip.push((p, p, 1.0)),
                SideBc::Flux(_) | SideBc::TargetFlux => {
                    let dir = if upper { -1 } else { 1 };
                    let q1 = grid.shift(p, a, dir).expect("axis has 3 points");
                    let q2 = grid.shift(q1, a, dir).expect("axis has 3 points");
                    // outward derivative: (3 f0 - 4 f1 + f2) / (2h)
                    trip.push((p, p, 3.0 / (2.0 * h)));
                    trip.push((p, q1, -4.0 / (2.0 * h)));
                    trip.push((p, q2, 1.0 / (2.0 * h)));
                    rhs[p] = match side {
                        SideBc::Flux(g) => g,
                        _ => {
                            let g = prob.target_gradient[a][p];
                            if upper { g } else { -g }
                        }
                    };
                }
            }
            continue;
        }
        let mut diag = 0.0;
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * grid.dim);
        for a in 0..grid.dim {
            let h = grid.spacing[a];
            let m = grid.shift(p, a, -1).expect("interior");
            let q = grid.shift(p, a, 1).expect("interior");
            let c2 = 1.0 / (h * h);
            let mut cm = c2;
            let mut cq = c2;
            diag -= 2.0 * c2;
            if grid.is_radial() {
                let r = grid.node_coord(0, p);
                cm -= 1.0 / (r * h);
                cq += 1.0 / (r * h);
            }
            row.push((m, cm));
            row.push((q, cq));
        }
        for &(c, v) in &row {
            trip.push((p, c, v));
        }
        trip.push((p, p, diag));
        let mut b = prob.source.as_ref().map_or(0.0, |s| s[p]);
        if let Some(w) = t.gradient {
            for a in 0..grid.dim {
                let h = grid.spacing[a];
                let qa = w * coef.gradient[a][p];
                let m = grid.shift(p, a, -1).expect("interior");
                let q = grid.shift(p, a, 1).expect("interior");
                trip.push((p, q, 2.0 * qa / (2.0 * h)));
                trip.push((p, m, -2.0 * qa / (2.0 * h)));
                b += 2.0 * qa * prob.target_gradient[a][p];
            }
        }
        if let Some(w) = t.reaction {
            let pc = w * coef.reaction[p];
            trip.push((p, p, pc));
            b += pc * phi_d[p];
        }
        rhs[p] = b;
    }
    if pure_neumann {
        check_compatibility(prob)?;
    }
    Ok((trip, rhs))
}

/// Net outward flux of the boundary data must match that of the target
/// plus the integrated source.
fn check_compatibility(prob: &PenaltyProblem) -> Result<()> {
    let grid = &prob.grid;
    let face = |a: usize| grid.cell_volume() / grid.spacing[a];
    let mut net = 0.0;
    let mut expected = 0.0;
    for p in 0..grid.len() {
        if Some(p) == prob.gauge_node {
            continue;
        }
        if let Some((a, upper)) = boundary_face(grid, p) {
            let side = if upper { prob.outer.upper[a] } else { prob.outer.lower[a] };
            let g_target = if upper { prob.target_gradient[a][p] } else { -prob.target_gradient[a][p] };
            let g = match side {
                SideBc::Flux(g) => g,
                _ => g_target,
            };
            net += g * face(a);
            expected += g_target * face(a);
        }
    }
    if let Some(s) = &prob.source {
        let w = grid.quadrature_weights();
        expected += exec::sum((0..s.len()).map(|i| s[i] * w[i]));
    }
    let scale = 1.0 + net.abs().max(expected.abs());
    if (net - expected).abs() > 1e-8 * scale {
        return Err(Error::IncompatibleFlux { net, expected });
    }
    Ok(())
}

fn max_norm(v: &[f64]) -> f64 {
    exec::max_abs(v.iter().copied())
}

/// Solve in whatever mode the problem carries.
pub fn solve(prob: &PenaltyProblem) -> Result<PenaltySolveReport> {
    let coef = coefficients(&prob.delta, &prob.grid)?;
    solve_with(prob, &coef)
}

pub fn solve_with(prob: &PenaltyProblem, coef: &Coefficients) -> Result<PenaltySolveReport> {
    let t = terms(prob);
    let (trip, rhs) = assemble(prob, coef, t)?;
    let n = prob.grid.len();
    let a = Csr::from_triplets(n, n, &trip);
    let use_direct = match prob.solver {
        SolverKind::Direct => true,
        SolverKind::Iterative => false,
        SolverKind::Auto => n <= DIRECT_LIMIT,
    };
    let (x, iterations, solver) = if use_direct {
        let bw = if prob.grid.dim == 1 { 2 } else { 2 * prob.grid.len() / prob.grid.points[0] };
        let mut band = Banded::new(n, bw, bw);
        for &(r, c, v) in &trip {
            band.add(r, c, v);
        }
        (band.factor()?.solve(&rhs), 0, "banded_lu")
    } else {
        let x0 = prob.initial_guess.clone().unwrap_or_else(|| vec![0.0; n]);
        let out = linalg::bicgstab(&a, &rhs, &x0, 1e-12, 20 * n)?;
        (out.x, out.iterations, "bicgstab")
    };
    let residual = normwise_backward_error(&a, &x, &rhs);
    if residual > SOLVER_TOL {
        return Err(Error::NoConvergence { solver, iterations, residual });
    }
    Ok(build_report(prob, coef, t, FormField::scalar(&prob.grid, x), residual, iterations, solver))
}

fn normwise_backward_error(a: &Csr, x: &[f64], rhs: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = ax.iter().zip(rhs).map(|(u, v)| u - v).collect();
    let a_norm = (0..a.nrows).map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    max_norm(&r) / (a_norm * max_norm(x) + max_norm(rhs)).max(f64::MIN_POSITIVE)
}

/// Normwise backward error of `phi` as a solution of `prob`.
pub fn backward_error(prob: &PenaltyProblem, phi: &FormField) -> Result<f64> {
    if !phi.grid.same_shape(&prob.grid) || phi.k != 0 {
        return Err(Error::ShapeMismatch("candidate must be a 0-form on the problem grid".into()));
    }
    let coef = coefficients(&prob.delta, &prob.grid)?;
    let (trip, rhs) = assemble(prob, &coef, terms(prob))?;
    let n = prob.grid.len();
    Ok(normwise_backward_error(&Csr::from_triplets(n, n, &trip), phi.values(), &rhs))
}

fn build_report(
    prob: &PenaltyProblem,
    coef: &Coefficients,
    t: Terms,
    solution: FormField,
    residual: f64,
    iterations: usize,
    solver: &'static str,
) -> PenaltySolveReport {
    let grid = &prob.grid;
    let phi = solution.values();
    let phi_d = prob.target.values();
    let band = prob.delta.band_half_width();
    let lap = grid::laplacian(grid, phi);
    let grad = grid::gradient(grid, phi);
    let (mut int_res, mut ext_res, mut vgap) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut fgap: Option<f64> = None;
    let mut terms_sup = [0.0_f64; 2];
    for p in 0..grid.len() {
        let x = grid.coords(p);
        let s = prob.delta.signed_distance(grid, &x);
        if !grid.is_boundary(p) {
            let res = (lap[p] - prob.source.as_ref().map_or(0.0, |v| v[p])).abs();
            if s < -band {
                int_res = int_res.max(res);
            } else if s > band {
                ext_res = ext_res.max(res);
            }
            let g_term: f64 = (0..grid.dim)
                .map(|a| 2.0 * coef.gradient[a][p] * (grad[a][p] - prob.target_gradient[a][p]))
                .sum();
            terms_sup[0] = terms_sup[0].max(g_term.abs());
            terms_sup[1] = terms_sup[1].max((coef.reaction[p] * (phi[p] - phi_d[p])).abs());
        }
        if s.abs() <= band {
            vgap = vgap.max((phi[p] - phi_d[p]).abs());
            if let Some(nrm) = prob.delta.normal(grid, &x) {
                let dn: f64 = (0..grid.dim).map(|a| nrm[a] * (grad[a][p] - prob.target_gradient[a][p])).sum();
                fgap = Some(fgap.unwrap_or(0.0).max(dn.abs()));
            }
        }
    }
    let w = grid.quadrature_weights();
    let energy = 0.5 * exec::sum((0..grid.len()).map(|p| w[p] * grad.iter().map(|g| g[p] * g[p]).sum::<f64>()));
    let gap = match prob.mode {
        Mode::NeumannPenalty => fgap.unwrap_or(f64::NAN),
        _ => vgap,
    };
    let _ = t;
    PenaltySolveReport {
        solution,
        mode: prob.mode,
        n: prob.delta.sharpness,
        h: grid.spacing.clone(),
        residual,
        interior_residual: int_res,
        exterior_residual: ext_res,
        value_gap: vgap,
        flux_gap: fgap,
        gap,
        penalty_terms: terms_sup,
        energy,
        iterations,
        solver,
    }
}

fn require_mode(p: &PenaltyProblem, mode: Mode) -> Result<()> {
    if p.mode != mode {
        return Err(Error::InvalidArgument(format!("problem mode is {:?}, expected {:?}", p.mode, mode)));
    }
    Ok(())
}

pub fn solve_combined(p: &PenaltyProblem) -> Result<PenaltySolveReport> {
    require_mode(p, Mode::Combined)?;
    solve(p)
}

pub fn solve_dirichlet_penalty(p: &PenaltyProblem) -> Result<PenaltySolveReport> {
    require_mode(p, Mode::DirichletPenalty)?;
    solve(p)
}

pub fn solve_neumann_penalty(p: &PenaltyProblem) -> Result<PenaltySolveReport> {
    require_mode(p, Mode::NeumannPenalty)?;
    solve(p)
}

/// Boundary trace `(phi|_S, d_n phi|_S)` from the exterior side.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DtnTrace {
    pub value: f64,
    pub normal_derivative: f64,
}

/// Quadratic through the first three nodes with `s >= 0`, evaluated and
/// differentiated at `s = 0`. One-dimensional and radial grids only.
pub fn dtn_extract(report: &PenaltySolveReport, surface: &DeltaSpec) -> Result<DtnTrace> {
    let grid = &report.solution.grid;
    if grid.dim != 1 {
        return Err(Error::InvalidArgument("trace extraction is implemented for 1D and radial grids".into()));
    }
    let phi = report.solution.values();
    let s: Vec<f64> = (0..grid.len()).map(|p| surface.signed_distance(grid, &grid.coords(p))).collect();
    let i0 = s
        .iter()
        .position(|v| *v >= 0.0)
        .ok_or_else(|| Error::InvalidArgument("surface lies beyond the grid".into()))?;
    if i0 + 2 >= grid.len() {
        return Err(Error::InvalidArgument("surface too close to the domain edge for the trace stencil".into()));
    }
    let (x0, x1, x2) = (s[i0], s[i0 + 1], s[i0 + 2]);
    let (f0, f1, f2) = (phi[i0], phi[i0 + 1], phi[i0 + 2]);
    let l0 = |x: f64| (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = |x: f64| (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = |x: f64| (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
    let dl0 = (-x1 - x2) / ((x0 - x1) * (x0 - x2));
    let dl1 = (-x0 - x2) / ((x1 - x0) * (x1 - x2));
    let dl2 = (-x0 - x1) / ((x2 - x0) * (x2 - x1));
    Ok(DtnTrace {
        value: f0 * l0(0.0) + f1 * l1(0.0) + f2 * l2(0.0),
        normal_derivative: f0 * dl0 + f1 * dl1 + f2 * dl2,
    })
}

/// Combined-mode problem whose target gradient is the gradient of a
/// previous solution, closing the self-consistency loop.
pub fn feedback_problem(prob: &PenaltyProblem, report: &PenaltySolveReport) -> PenaltyProblem {
    PenaltyProblem {
        mode: Mode::Combined,
        target_gradient: grid::gradient(&prob.grid, report.solution.values()),
        ..prob.clone()
    }
}

/// Fitted power laws of the two coefficient peaks across a sharpness ladder.
#[derive(Debug, Clone, Serialize)]
pub struct SingularExponents {
    /// Slope of `log|lambda'|` peak against `log` of its distance to S.
    pub first: f64,
    /// Same for `lambda'' + lambda'^2`.
    pub second: f64,
    /// `(n, distance, peak)` for the first coefficient.
    pub first_peaks: Vec<(f64, f64, f64)>,
    pub second_peaks: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeReport {
    pub report: PenaltySolveReport,
    pub exponents: Option<SingularExponents>,
}

fn fit_slope(points: &[(f64, f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.2.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Peak positions of both coefficients on the exterior side, over the
/// ladder `n/8, n/4, n/2, n`; rungs whose peak is closer than three cells to
/// S are dropped as unresolved.
pub fn singular_exponents(delta: &DeltaSpec, grid: &Grid) -> Result<Option<SingularExponents>> {
    let h = grid.spacing[0];
    let mut first = Vec::new();
    let mut second = Vec::new();
    for div in [8.0, 4.0, 2.0, 1.0] {
        let spec = delta.with_sharpness(delta.sharpness / div);
        let coef = coefficients(&spec, grid)?;
        let mut best1 = (0.0, 0.0);
        let mut best2 = (0.0, 0.0);
        for p in 0..grid.len() {
            if grid.is_boundary(p) {
                continue;
            }
            let s = spec.signed_distance(grid, &grid.coords(p));
            if s <= 0.0 {
                continue;
            }
            let c1 = coef.gradient[0][p].abs();
            let c2 = coef.reaction[p].abs();
            if c1 > best1.1 {
                best1 = (s, c1);
            }
            if c2 > best2.1 {
                best2 = (s, c2);
            }
        }
        if best1.0 >= 3.0 * h {
            first.push((spec.sharpness, best1.0, best1.1));
        }
        if best2.0 >= 3.0 * h {
            second.push((spec.sharpness, best2.0, best2.1));
        }
    }
    if first.len() < 2 || second.len() < 2 {
        return Ok(None);
    }
    Ok(Some(SingularExponents { first: fit_slope(&first), second: fit_slope(&second), first_peaks: first, second_peaks: second }))
}

/// `phi'' + 2 lambda' (phi' - phi_d') + (lambda'' + lambda'^2)(phi - phi_d) = 0`
/// on a bounded 1D grid with end values, plus the singular-point diagnostic.
pub fn solve_ode_1d(target: &FormField, delta: &DeltaSpec, lower: f64, upper: f64) -> Result<OdeReport> {
    let grid = &target.grid;
    if grid.dim != 1 || grid.is_radial() {
        return Err(Error::InvalidGrid("the 1D ODE needs a one-dimensional Cartesian grid".into()));
    }
    let prob = PenaltyProblem::new(delta.clone(), target.clone(), OuterBc::ends(lower, upper), Mode::Combined)?;
    let report = solve(&prob)?;
    let exponents = singular_exponents(delta, grid)?;
    Ok(OdeReport { report, exponents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DeltaFamily, GridSpec, Surface};

    fn line(points: usize) -> Grid {
        build_grid(&GridSpec::bounded(&[-1.0], &[2.0], &[points])).unwrap()
    }

    fn point(family: DeltaFamily, n: f64) -> DeltaSpec {
        DeltaSpec::new(family, n, Surface::Point { center: vec![0.0] })
    }

    #[test]
    fn zero_target_gives_zero_solution() {
        let g = line(201);
        let p = PenaltyProblem::new(point(DeltaFamily::Gaussian, 16.0), FormField::constant(&g, 0.0), OuterBc::ends(0.0, 0.0), Mode::DirichletPenalty)
            .unwrap();
        let r = solve_dirichlet_penalty(&p).unwrap();
        assert!(r.solution.max_abs() == 0.0);
    }

    #[test]
    fn wrong_mode_rejected() {
        let g = line(51);
        let p = PenaltyProblem::new(point(DeltaFamily::Gaussian, 4.0), FormField::constant(&g, 1.0), OuterBc::ends(0.0, 0.0), Mode::Combined).unwrap();
        assert!(solve_dirichlet_penalty(&p).is_err());
    }

    #[test]
    fn periodic_grid_rejected() {
        let g = build_grid(&GridSpec::periodic(&[2.0], &[64])).unwrap();
        let r = PenaltyProblem::new(point(DeltaFamily::Gaussian, 4.0), FormField::constant(&g, 1.0), OuterBc::ends(0.0, 0.0), Mode::Combined);
        assert!(r.is_err());
    }

    #[test]
    fn pure_neumann_needs_gauge() {
        let g = line(51);
        let outer = OuterBc::uniform(1, SideBc::TargetFlux);
        let p = PenaltyProblem::new(point(DeltaFamily::Gaussian, 4.0), FormField::constant(&g, 1.0), outer, Mode::NeumannPenalty).unwrap();
        assert_eq!(solve(&p).unwrap_err(), Error::FloatingNullSpace);
        let mut bad = p.clone();
        bad.gauge_node = Some(25);
        bad.outer = OuterBc { lower: vec![SideBc::Flux(1.0)], upper: vec![SideBc::Flux(1.0)] };
        assert!(matches!(solve(&bad), Err(Error::IncompatibleFlux { .. })));
        let mut ok = p;
        ok.gauge_node = Some(25);
        let r = solve(&ok).unwrap();
        assert!(r.solution.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
    }
}
