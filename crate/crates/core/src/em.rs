//! Homothetic Maxwell evolution, gauge diagnostics, the homothetic wave
//! equation and the rescaled Lorentz force.
//!
//! Two spatial layouts are supported on periodic grids:
//! - 1D: the `(E_y, B_z)` pair on collocated nodes.
//! - 2D: a Yee layout. `E_x (i+1/2, j)`, `E_y (i, j+1/2)`, `E_z (i, j)`,
//!   `B_x (i, j+1/2)`, `B_y (i+1/2, j)`, `B_z (i+1/2, j+1/2)`.
//!
//! Both use leapfrog in time: `B` advances first, then `E` with the new `B`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{self, DoubledForm, FormField, Grid, LambdaField};
use crate::homothety::{decay, Signature};

/// Staggering mask of each component (bit `a` set = half-shifted on axis `a`).
const E_MASKS: [u8; 3] = [0b01, 0b10, 0b00];
const B_MASKS: [u8; 3] = [0b10, 0b01, 0b11];

#[derive(Debug, Clone, PartialEq)]
pub struct EMState {
    pub grid: Grid,
    /// `[E_y]` in 1D, `[E_x, E_y, E_z]` in 2D.
    pub e: Vec<Vec<f64>>,
    /// `[B_z]` in 1D, `[B_x, B_y, B_z]` in 2D.
    pub b: Vec<Vec<f64>>,
    pub e_d: Vec<Vec<f64>>,
    pub b_d: Vec<Vec<f64>>,
    pub t: f64,
    pub steps: usize,
}

fn components(grid: &Grid) -> Result<usize> {
    if !grid.is_periodic() || grid.is_radial() {
        return Err(Error::InvalidGrid("Maxwell stepping needs a periodic Cartesian grid".into()));
    }
    match grid.dim {
        1 => Ok(1),
        2 => Ok(3),
        d => Err(Error::InvalidGrid(format!("Maxwell stepping supports 1D and 2D grids, got {d}D"))),
    }
}

impl EMState {
    pub fn new(grid: &Grid, e: Vec<Vec<f64>>, b: Vec<Vec<f64>>, e_d: Vec<Vec<f64>>, b_d: Vec<Vec<f64>>) -> Result<Self> {
        let nc = components(grid)?;
        for (name, f) in [("E", &e), ("B", &b), ("E_d", &e_d), ("B_d", &b_d)] {
            if f.len() != nc || f.iter().any(|c| c.len() != grid.len()) {
                return Err(Error::ShapeMismatch(format!("{name} needs {nc} components of {} values", grid.len())));
            }
        }
        if grid.dim == 2 {
            let div = divergence_b(grid, &b_d);
            let scale = 1.0 + b_d.iter().map(|c| exec::max_abs(c.iter().copied())).fold(0.0, f64::max) / grid.spacing[0];
            let worst = exec::max_abs(div.iter().copied());
            if worst > 1e-10 * scale {
                return Err(Error::InvalidArgument(format!("offset magnetic field has divergence {worst:e}")));
            }
        }
        Ok(EMState { grid: grid.clone(), e, b, e_d, b_d, t: 0.0, steps: 0 })
    }

    /// Offsets frozen as copies of the initial fields.
    pub fn with_frozen_offsets(grid: &Grid, e: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let (ed, bd) = (e.clone(), b.clone());
        Self::new(grid, e, b, ed, bd)
    }

    /// Zero offsets.
    pub fn with_zero_offsets(grid: &Grid, e: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let zeros = |f: &Vec<Vec<f64>>| f.iter().map(|c| vec![0.0; c.len()]).collect::<Vec<_>>();
        let (ed, bd) = (zeros(&e), zeros(&b));
        Self::new(grid, e, b, ed, bd)
    }

    pub fn energy(&self) -> f64 {
        let vol = self.grid.cell_volume();
        let sq = |f: &Vec<Vec<f64>>| f.iter().map(|c| exec::sum(c.iter().map(|v| v * v))).sum::<f64>();
        0.5 * vol * (sq(&self.e) + sq(&self.b))
    }

    /// `1/2 sum e^{2 lambda} (|E - E_d|^2 + |B - B_d|^2)`, with lambda
    /// averaged to each component's location. The rescaled deviations obey
    /// the vacuum equations when the offsets are static, so this is the
    /// conserved energy of the homothetic system.
    pub fn weighted_energy(&self, lambda: &LambdaField) -> f64 {
        let vol = self.grid.cell_volume();
        let weights = |masks: [u8; 3], n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|c| {
                    let m = if self.grid.dim == 1 { 0 } else { masks[c] };
                    lambda.at_location(m).into_iter().map(|l| (2.0 * l).exp()).collect()
                })
                .collect()
        };
        let part = |f: &[Vec<f64>], d: &[Vec<f64>], w: &[Vec<f64>]| -> f64 {
            (0..f.len()).map(|c| exec::sum((0..f[c].len()).map(|p| w[c][p] * (f[c][p] - d[c][p]).powi(2)))).sum()
        };
        let we = weights(E_MASKS, self.e.len());
        let wb = weights(B_MASKS, self.b.len());
        0.5 * vol * (part(&self.e, &self.e_d, &we) + part(&self.b, &self.b_d, &wb))
    }

    /// Location of component `c` of the electric (`electric = true`) or
    /// magnetic field at flat index `p`.
    pub fn location(&self, electric: bool, c: usize, p: usize) -> Vec<f64> {
        if self.grid.dim == 1 {
            return self.grid.coords(p);
        }
        let mask = if electric { E_MASKS[c] } else { B_MASKS[c] };
        grid::location(&self.grid, p, mask)
    }
}

/// Largest stable step `0.9 h_min / (c_max sqrt(dim))`, where `c_max` is the
/// larger of 1 (the curl terms) and `max e^{-lambda}`.
pub fn cfl_limit(grid: &Grid, lambda: &LambdaField) -> f64 {
    let h = grid.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmin = lambda.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let cmax = decay(lmin).max(1.0);
    0.9 * h / (cmax * (grid.dim as f64).sqrt())
}

fn check_cfl(grid: &Grid, lambda: &LambdaField, dt: f64) -> Result<()> {
    let limit = cfl_limit(grid, lambda);
    if !(dt > 0.0) || dt > limit {
        return Err(Error::Cfl { dt, limit });
    }
    Ok(())
}

fn fwd(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing[axis];
    let mut out = vec![0.0; f.len()];
    exec::fill(&mut out, |p| (f[grid.shift(p, axis, 1).expect("periodic")] - f[p]) / h);
    out
}

fn bwd(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing[axis];
    let mut out = vec![0.0; f.len()];
    exec::fill(&mut out, |p| (f[p] - f[grid.shift(p, axis, -1).expect("periodic")]) / h);
    out
}

fn central(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing[axis];
    let mut out = vec![0.0; f.len()];
    exec::fill(&mut out, |p| {
        let q = grid.shift(p, axis, 1).expect("periodic");
        let m = grid.shift(p, axis, -1).expect("periodic");
        (f[q] - f[m]) / (2.0 * h)
    });
    out
}

/// Average an array stored at staggering `from` onto staggering `to`.
fn avg_to(grid: &Grid, f: &[f64], from: u8, to: u8) -> Vec<f64> {
    if from == to {
        return f.to_vec();
    }
    let mut axes: Vec<(usize, [isize; 2])> = Vec::new();
    for a in 0..grid.dim {
        let (fb, tb) = (from >> a & 1, to >> a & 1);
        if fb == 1 && tb == 0 {
            axes.push((a, [-1, 0]));
        } else if fb == 0 && tb == 1 {
            axes.push((a, [0, 1]));
        }
    }
    let corners = 1usize << axes.len();
    let scale = 1.0 / corners as f64;
    let mut out = vec![0.0; f.len()];
    exec::fill(&mut out, |p| {
        let mut acc = 0.0;
        for c in 0..corners {
            let mut q = p;
            for (bit, (a, offs)) in axes.iter().enumerate() {
                q = grid.shift(q, *a, offs[c >> bit & 1]).expect("periodic");
            }
            acc += f[q];
        }
        acc * scale
    });
    out
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Lambda derivatives resampled at the field locations.
struct Coupling {
    /// `d lambda / d x_a` averaged to each E location then each B location.
    grad_e: Vec<[Vec<f64>; 2]>,
    grad_b: Vec<[Vec<f64>; 2]>,
    rate_e: Option<Vec<Vec<f64>>>,
    rate_b: Option<Vec<Vec<f64>>>,
}

fn coupling(grid: &Grid, lambda: &LambdaField, rate: Option<&[f64]>) -> Coupling {
    if grid.dim == 1 {
        let g = lambda.gradient[0].clone();
        let z = vec![0.0; grid.len()];
        return Coupling {
            grad_e: vec![[g.clone(), z.clone()]],
            grad_b: vec![[g, z]],
            rate_e: rate.map(|r| vec![r.to_vec()]),
            rate_b: rate.map(|r| vec![r.to_vec()]),
        };
    }
    let at = |mask: u8| [avg_to(grid, &lambda.gradient[0], 0, mask), avg_to(grid, &lambda.gradient[1], 0, mask)];
    Coupling {
        grad_e: E_MASKS.iter().map(|&m| at(m)).collect(),
        grad_b: B_MASKS.iter().map(|&m| at(m)).collect(),
        rate_e: rate.map(|r| E_MASKS.iter().map(|&m| avg_to(grid, r, 0, m)).collect()),
        rate_b: rate.map(|r| B_MASKS.iter().map(|&m| avg_to(grid, r, 0, m)).collect()),
    }
}

/// `grad(lambda) x v` at the locations of the target field's components,
/// for `v` given at the staggering `src_masks` (1D: `v = v_z` or `v_y`).
fn cross_2d(grid: &Grid, grad: &[[Vec<f64>; 2]], v: &[Vec<f64>], src: [u8; 3], dst: [u8; 3]) -> Vec<Vec<f64>> {
    // (gx, gy, 0) x (vx, vy, vz) = (gy vz, -gx vz, gx vy - gy vx)
    let vz_x = avg_to(grid, &v[2], src[2], dst[0]);
    let vz_y = avg_to(grid, &v[2], src[2], dst[1]);
    let vy_z = avg_to(grid, &v[1], src[1], dst[2]);
    let vx_z = avg_to(grid, &v[0], src[0], dst[2]);
    let n = grid.len();
    let mut out = vec![vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    exec::fill(&mut out[0], |p| grad[0][1][p] * vz_x[p]);
    exec::fill(&mut out[1], |p| -grad[1][0][p] * vz_y[p]);
    exec::fill(&mut out[2], |p| grad[2][0][p] * vy_z[p] - grad[2][1][p] * vx_z[p]);
    out
}

fn curl_b(grid: &Grid, b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if grid.dim == 1 {
        // (curl B)_y = -d_x B_z
        return vec![central(grid, &b[0], 0).into_iter().map(|v| -v).collect()];
    }
    let cx = bwd(grid, &b[2], 1);
    let cy: Vec<f64> = bwd(grid, &b[2], 0).into_iter().map(|v| -v).collect();
    let cz = diff(&bwd(grid, &b[1], 0), &bwd(grid, &b[0], 1));
    vec![cx, cy, cz]
}

fn curl_e(grid: &Grid, e: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if grid.dim == 1 {
        // (curl E)_z = d_x E_y
        return vec![central(grid, &e[0], 0)];
    }
    let cx = fwd(grid, &e[2], 1);
    let cy: Vec<f64> = fwd(grid, &e[2], 0).into_iter().map(|v| -v).collect();
    let cz = diff(&fwd(grid, &e[1], 0), &fwd(grid, &e[0], 1));
    vec![cx, cy, cz]
}

/// `grad(lambda) x (B - B_d)` at E locations.
fn coupling_on_e(grid: &Grid, c: &Coupling, b: &[Vec<f64>], b_d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let v: Vec<Vec<f64>> = b.iter().zip(b_d).map(|(x, y)| diff(x, y)).collect();
    if grid.dim == 1 {
        // (g, 0, 0) x (0, 0, v) = (0, -g v, 0)
        return vec![c.grad_e[0][0].iter().zip(&v[0]).map(|(g, w)| -g * w).collect()];
    }
    cross_2d(grid, &c.grad_e, &v, B_MASKS, E_MASKS)
}

/// `grad(lambda) x (E - E_d)` at B locations.
fn coupling_on_b(grid: &Grid, c: &Coupling, e: &[Vec<f64>], e_d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let v: Vec<Vec<f64>> = e.iter().zip(e_d).map(|(x, y)| diff(x, y)).collect();
    if grid.dim == 1 {
        // (g, 0, 0) x (0, v, 0) = (0, 0, g v)
        return vec![c.grad_b[0][0].iter().zip(&v[0]).map(|(g, w)| g * w).collect()];
    }
    cross_2d(grid, &c.grad_b, &v, E_MASKS, B_MASKS)
}

fn check_finite(s: &EMState) -> Result<()> {
    if s.e.iter().chain(&s.b).any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite { step: s.steps });
    }
    Ok(())
}

/// One leapfrog step of
/// `dE/dt = curl B + grad(lambda) x (B - B_d)`,
/// `dB/dt = -curl E - grad(lambda) x (E - E_d)` with static lambda.
pub fn maxwell_step(state: &EMState, lambda: &LambdaField, dt: f64) -> Result<EMState> {
    maxwell_step_with_rate(state, lambda, None, dt)
}

/// As [`maxwell_step`] with the `-d_t lambda (F - F_d)` terms driven by the
/// nodal rate `rate`.
pub fn maxwell_step_with_rate(state: &EMState, lambda: &LambdaField, rate: Option<&[f64]>, dt: f64) -> Result<EMState> {
    let grid = &state.grid;
    if !grid.same_shape(&lambda.grid) {
        return Err(Error::ShapeMismatch("lambda lives on a different grid".into()));
    }
    check_cfl(grid, lambda, dt)?;
    let c = coupling(grid, lambda, rate);

    let curl = curl_e(grid, &state.e);
    let cpl = coupling_on_b(grid, &c, &state.e, &state.e_d);
    let mut b = state.b.clone();
    for k in 0..b.len() {
        let (old, bd) = (&state.b[k], &state.b_d[k]);
        let rate_k = c.rate_b.as_ref().map(|r| &r[k]);
        exec::fill(&mut b[k], |p| {
            let mut rhs = -curl[k][p] - cpl[k][p];
            if let Some(r) = rate_k {
                rhs -= r[p] * (old[p] - bd[p]);
            }
            old[p] + dt * rhs
        });
    }

    let curl = curl_b(grid, &b);
    let cpl = coupling_on_e(grid, &c, &b, &state.b_d);
    let mut e = state.e.clone();
    for k in 0..e.len() {
        let (old, ed) = (&state.e[k], &state.e_d[k]);
        let rate_k = c.rate_e.as_ref().map(|r| &r[k]);
        exec::fill(&mut e[k], |p| {
            let mut rhs = curl[k][p] + cpl[k][p];
            if let Some(r) = rate_k {
                rhs -= r[p] * (old[p] - ed[p]);
            }
            old[p] + dt * rhs
        });
    }
    let next = EMState { e, b, t: state.t + dt, steps: state.steps + 1, ..state.clone() };
    check_finite(&next)?;
    Ok(next)
}

/// Plain Yee / collocated leapfrog with no homothetic terms.
pub fn classical_maxwell_step(state: &EMState, dt: f64) -> Result<EMState> {
    let grid = &state.grid;
    let h = grid.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let limit = 0.9 * h / (grid.dim as f64).sqrt();
    if !(dt > 0.0) || dt > limit {
        return Err(Error::Cfl { dt, limit });
    }
    let mut b = state.b.clone();
    let ce = curl_e(grid, &state.e);
    for k in 0..b.len() {
        let old = &state.b[k];
        exec::fill(&mut b[k], |p| old[p] + dt * -ce[k][p]);
    }
    let mut e = state.e.clone();
    let cb = curl_b(grid, &b);
    for k in 0..e.len() {
        let old = &state.e[k];
        exec::fill(&mut e[k], |p| old[p] + dt * cb[k][p]);
    }
    let next = EMState { e, b, t: state.t + dt, steps: state.steps + 1, ..state.clone() };
    check_finite(&next)?;
    Ok(next)
}

/// Divergence of E at nodes (2D Yee layout).
fn divergence_e(grid: &Grid, e: &[Vec<f64>]) -> Vec<f64> {
    let a = bwd(grid, &e[0], 0);
    let b = bwd(grid, &e[1], 1);
    a.iter().zip(&b).map(|(x, y)| x + y).collect()
}

/// Divergence of B at cell centres (2D Yee layout).
fn divergence_b(grid: &Grid, b: &[Vec<f64>]) -> Vec<f64> {
    let x = fwd(grid, &b[0], 0);
    let y = fwd(grid, &b[1], 1);
    x.iter().zip(&y).map(|(p, q)| p + q).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussResiduals {
    pub electric: f64,
    pub magnetic: f64,
}

fn rms(v: &[f64]) -> f64 {
    (exec::sum(v.iter().map(|x| x * x)) / v.len() as f64).sqrt()
}

/// Pointwise `div E + grad(lambda) . (E - E_d)` at nodes.
pub fn electric_gauss_array(state: &EMState, lambda: &LambdaField) -> Vec<f64> {
    let grid = &state.grid;
    if grid.dim == 1 {
        return vec![0.0; grid.len()];
    }
    let div = divergence_e(grid, &state.e);
    let vx = avg_to(grid, &diff(&state.e[0], &state.e_d[0]), E_MASKS[0], 0);
    let vy = avg_to(grid, &diff(&state.e[1], &state.e_d[1]), E_MASKS[1], 0);
    (0..grid.len()).map(|p| div[p] + lambda.gradient[0][p] * vx[p] + lambda.gradient[1][p] * vy[p]).collect()
}

/// RMS norms of the generalized electric Gauss law and of `div B`. The 1D
/// transverse pair has no longitudinal component, so both vanish there.
pub fn gauss_residuals(state: &EMState, lambda: &LambdaField) -> GaussResiduals {
    let grid = &state.grid;
    if grid.dim == 1 {
        return GaussResiduals { electric: 0.0, magnetic: 0.0 };
    }
    GaussResiduals { electric: rms(&electric_gauss_array(state, lambda)), magnetic: rms(&divergence_b(grid, &state.b)) }
}

/// `(E_x, E_y)` for a transverse-electric state: `e^{-lambda}` times the
/// discrete curl of a stream function sampled at cell centres. `E_z = 0`.
pub fn te_fields(grid: &Grid, stream: &[f64], lambda: Option<&LambdaField>) -> Vec<Vec<f64>> {
    let mut ex = bwd(grid, stream, 1);
    let mut ey: Vec<f64> = bwd(grid, stream, 0).into_iter().map(|v| -v).collect();
    if let Some(l) = lambda {
        let lx = avg_to(grid, &l.values, 0, E_MASKS[0]);
        let ly = avg_to(grid, &l.values, 0, E_MASKS[1]);
        ex.iter_mut().zip(&lx).for_each(|(v, l)| *v *= decay(*l));
        ey.iter_mut().zip(&ly).for_each(|(v, l)| *v *= decay(*l));
    }
    vec![ex, ey, vec![0.0; grid.len()]]
}

/// `(B_x, B_y)` as the discrete curl of a nodal stream function, so
/// `div B = 0` to rounding.
pub fn tm_magnetic(grid: &Grid, stream: &[f64]) -> Vec<Vec<f64>> {
    let bx = fwd(grid, stream, 1);
    let by: Vec<f64> = fwd(grid, stream, 0).into_iter().map(|v| -v).collect();
    vec![bx, by, vec![0.0; grid.len()]]
}

/// Potentials for the conservation diagnostic, all collocated at nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeState {
    pub grid: Grid,
    pub a: Vec<Vec<f64>>,
    pub a_d: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub phi_d: Vec<f64>,
}

impl GaugeState {
    pub fn new(grid: &Grid, a: Vec<Vec<f64>>, a_d: Vec<Vec<f64>>, phi: Vec<f64>, phi_d: Vec<f64>) -> Result<Self> {
        let ok = a.len() == grid.dim
            && a_d.len() == grid.dim
            && a.iter().chain(&a_d).all(|c| c.len() == grid.len())
            && phi.len() == grid.len()
            && phi_d.len() == grid.len();
        if !ok {
            return Err(Error::ShapeMismatch("gauge state components do not match the grid".into()));
        }
        Ok(GaugeState { grid: grid.clone(), a, a_d, phi, phi_d })
    }

    /// Offsets identified with the fields themselves.
    pub fn identified(grid: &Grid, a: Vec<Vec<f64>>, phi: Vec<f64>) -> Result<Self> {
        let (ad, pd) = (a.clone(), phi.clone());
        Self::new(grid, a, ad, phi, pd)
    }
}

/// Central divergence of the nodal vector potential.
pub fn plain_divergence(grid: &Grid, a: &[Vec<f64>]) -> Vec<f64> {
    let parts: Vec<Vec<f64>> = (0..grid.dim).map(|k| grid::derivative(grid, &a[k], k)).collect();
    (0..grid.len()).map(|p| parts.iter().fold(0.0, |acc, d| acc + d[p])).collect()
}

/// `div A - grad(lambda) . (A - A_d)` at every node.
pub fn conservation_residual(g: &GaugeState, lambda: &LambdaField) -> Result<Vec<f64>> {
    if !g.grid.same_shape(&lambda.grid) {
        return Err(Error::ShapeMismatch("lambda lives on a different grid".into()));
    }
    let div = plain_divergence(&g.grid, &g.a);
    let mut out = vec![0.0; g.grid.len()];
    exec::fill(&mut out, |p| {
        let pen = (0..g.grid.dim).fold(0.0, |acc, k| acc + lambda.gradient[k][p] * (g.a[k][p] - g.a_d[k][p]));
        div[p] - pen
    });
    Ok(out)
}

/// Two time levels of a doubled scalar for the leapfrog wave update.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    /// `(phi, phi_d)` at the current time.
    pub field: DoubledForm,
    /// `phi` one step earlier.
    pub previous: Vec<f64>,
    pub t: f64,
    pub steps: usize,
    /// Linear damping rate, used only to relax toward the static limit.
    pub damping: f64,
}

impl WaveState {
    /// Start at rest.
    pub fn at_rest(field: DoubledForm) -> Result<Self> {
        if field.k() != 0 {
            return Err(Error::Degree { k: field.k(), what: "wave field (must be a 0-form)" });
        }
        let previous = field.top.values().to_vec();
        Ok(WaveState { field, previous, t: 0.0, steps: 0, damping: 0.0 })
    }

    /// Start with a given velocity using a second-order Taylor back-step
    /// `phi(-dt) = phi - dt v + dt^2/2 accel` where the acceleration is the
    /// plain Laplacian.
    pub fn with_velocity(field: DoubledForm, velocity: &[f64], dt: f64) -> Result<Self> {
        let mut s = Self::at_rest(field)?;
        let grid = s.field.grid().clone();
        let phi = s.field.top.values();
        let lap = grid::laplacian(&grid, phi);
        s.previous = (0..phi.len())
            .map(|p| if grid.is_boundary(p) { phi[p] } else { phi[p] - dt * velocity[p] + 0.5 * dt * dt * lap[p] })
            .collect();
        Ok(s)
    }

    pub fn energy(&self, dt: f64) -> f64 {
        let grid = self.field.grid();
        let phi = self.field.top.values();
        let w = grid.quadrature_weights();
        let grad = grid::gradient(grid, phi);
        0.5 * exec::sum((0..phi.len()).map(|p| {
            let v = (phi[p] - self.previous[p]) / dt;
            w[p] * (v * v + grad.iter().map(|g| g[p] * g[p]).sum::<f64>())
        }))
    }
}

/// Energy of `v = e^{lambda} (phi - phi_d)`. For static lambda and a static
/// harmonic offset, `v` obeys the plain wave equation, so this is the
/// conserved quantity of the homothetic wave equation.
pub fn transformed_energy(state: &WaveState, lambda: &LambdaField, dt: f64) -> f64 {
    let grid = state.field.grid();
    let phi = state.field.top.values();
    let phi_d = state.field.offset.values();
    let scale: Vec<f64> = lambda.values.iter().map(|l| l.exp()).collect();
    let v: Vec<f64> = (0..phi.len()).map(|p| scale[p] * (phi[p] - phi_d[p])).collect();
    let w = grid.quadrature_weights();
    let grad = grid::gradient(grid, &v);
    0.5 * exec::sum((0..phi.len()).map(|p| {
        let vt = scale[p] * (phi[p] - state.previous[p]) / dt;
        w[p] * (vt * vt + grad.iter().map(|g| g[p] * g[p]).sum::<f64>())
    }))
}

/// Time derivatives of lambda at the nodes for the time-dependent terms.
#[derive(Debug, Clone, Copy)]
pub struct LambdaRates<'a> {
    pub first: &'a [f64],
    pub second: &'a [f64],
}

/// Spatial part of the static operator,
/// `lap(phi) + 2 grad(lambda) . grad(phi - phi_d) + (lap lambda + |grad lambda|^2)(phi - phi_d)`.
pub fn wave_operator(lambda: &LambdaField, phi: &[f64], phi_d: &[f64]) -> Vec<f64> {
    let grid = &lambda.grid;
    let lap = grid::laplacian(grid, phi);
    let gp = grid::gradient(grid, phi);
    let gd = grid::gradient(grid, phi_d);
    let react = lambda.reaction_coefficient();
    let mut out = vec![0.0; phi.len()];
    exec::fill(&mut out, |p| {
        let mut v = lap[p];
        for a in 0..grid.dim {
            let q = lambda.gradient[a][p];
            v += 2.0 * q * gp[a][p] - 2.0 * q * gd[a][p];
        }
        v + react[p] * phi[p] - react[p] * phi_d[p]
    });
    out
}

/// One leapfrog step of the homothetic wave equation with static lambda.
/// Nodes on bounded faces keep their values.
pub fn wave_step(state: &WaveState, lambda: &LambdaField, dt: f64) -> Result<WaveState> {
    wave_step_with_rates(state, lambda, None, dt)
}

pub fn wave_step_with_rates(state: &WaveState, lambda: &LambdaField, rates: Option<LambdaRates>, dt: f64) -> Result<WaveState> {
    let grid = state.field.grid();
    if !grid.same_shape(&lambda.grid) {
        return Err(Error::ShapeMismatch("lambda lives on a different grid".into()));
    }
    check_cfl(grid, lambda, dt)?;
    let phi = state.field.top.values();
    let phi_d = state.field.offset.values();
    let accel = wave_operator(lambda, phi, phi_d);
    let g = 0.5 * state.damping * dt;
    let mut next = vec![0.0; phi.len()];
    exec::fill(&mut next, |p| {
        if grid.is_boundary(p) && !grid.is_periodic() {
            return phi[p];
        }
        let mut a = accel[p];
        if let Some(r) = rates {
            let dev = phi[p] - phi_d[p];
            let vel = (phi[p] - state.previous[p]) / dt;
            a += -2.0 * r.first[p] * vel - (r.second[p] + r.first[p] * r.first[p]) * dev;
        }
        (2.0 * phi[p] - (1.0 - g) * state.previous[p] + dt * dt * a) / (1.0 + g)
    });
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: state.steps + 1 });
    }
    let top = FormField::scalar(grid, next);
    Ok(WaveState {
        field: DoubledForm { top, offset: state.field.offset.clone() },
        previous: phi.to_vec(),
        t: state.t + dt,
        steps: state.steps + 1,
        damping: state.damping,
    })
}

/// March a damped wave until the largest per-step change falls below
/// `tol * dt * max|phi|` or `max_steps` is reached.
pub fn relax_to_steady(state: &WaveState, lambda: &LambdaField, dt: f64, tol: f64, max_steps: usize) -> Result<WaveState> {
    let mut s = state.clone();
    for _ in 0..max_steps {
        s = wave_step(&s, lambda, dt)?;
        let phi = s.field.top.values();
        let scale = exec::max_abs(phi.iter().copied()).max(f64::MIN_POSITIVE);
        let change = exec::max_abs(phi.iter().zip(&s.previous).map(|(a, b)| a - b));
        if s.steps > 1 && change <= tol * dt * scale {
            return Ok(s);
        }
    }
    Err(Error::NoConvergence { solver: "wave relaxation", iterations: max_steps, residual: f64::NAN })
}

/// Undamped leapfrog of `phi_tt = lap(phi)` with fixed bounded faces.
pub fn classical_wave_step(state: &WaveState, dt: f64) -> Result<WaveState> {
    let grid = state.field.grid();
    let phi = state.field.top.values();
    let lap = grid::laplacian(grid, phi);
    let mut next = vec![0.0; phi.len()];
    exec::fill(&mut next, |p| {
        if grid.is_boundary(p) && !grid.is_periodic() {
            return phi[p];
        }
        2.0 * phi[p] - state.previous[p] + dt * dt * lap[p]
    });
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: state.steps + 1 });
    }
    Ok(WaveState {
        field: DoubledForm { top: FormField::scalar(grid, next), offset: state.field.offset.clone() },
        previous: phi.to_vec(),
        t: state.t + dt,
        steps: state.steps + 1,
        damping: state.damping,
    })
}

/// `e^{-lambda} q F^{mu nu} u_nu` with indices lowered by `sig`.
pub fn lorentz_force(lambda_value: f64, field: &[[f64; 4]; 4], u: &[f64; 4], charge: f64, sig: Signature) -> [f64; 4] {
    let u_low = sig.flat(u);
    let s = decay(lambda_value) * charge;
    let mut f = [0.0; 4];
    for (mu, row) in field.iter().enumerate() {
        f[mu] = s * (0..4).map(|nu| row[nu] * u_low[nu]).sum::<f64>();
    }
    f
}

/// Field tensor `F^{mu nu}` from `E` and `B` for signature `(-, +, +, +)`:
/// `F^{0i} = E_i`, `F^{ij} = eps_{ijk} B_k`, so a charge at rest feels `q E`.
pub fn field_tensor(e: [f64; 3], b: [f64; 3]) -> [[f64; 4]; 4] {
    let mut f = [[0.0; 4]; 4];
    for i in 0..3 {
        f[0][i + 1] = e[i];
        f[i + 1][0] = -e[i];
    }
    f[1][2] = b[2];
    f[2][1] = -b[2];
    f[2][3] = b[0];
    f[3][2] = -b[0];
    f[3][1] = b[1];
    f[1][3] = -b[1];
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    fn torus(n: usize) -> Grid {
        build_grid(&GridSpec::periodic(&[1.0, 1.0], &[n, n])).unwrap()
    }

    #[test]
    fn rejects_cfl_violation() {
        let g = build_grid(&GridSpec::periodic(&[1.0], &[32])).unwrap();
        let z = vec![vec![0.0; 32]];
        let s = EMState::with_zero_offsets(&g, z.clone(), z).unwrap();
        let l = LambdaField::zero(&g);
        assert!(matches!(maxwell_step(&s, &l, 1.0), Err(Error::Cfl { .. })));
    }

    #[test]
    fn rejects_divergent_offset() {
        let g = torus(16);
        let n = g.len();
        let z = vec![vec![0.0; n]; 3];
        let bad = vec![(0..n).map(|p| g.coords(p)[0].sin()).collect(), vec![0.0; n], vec![0.0; n]];
        assert!(EMState::new(&g, z.clone(), z.clone(), z, bad).is_err());
    }

    #[test]
    fn classical_2d_preserves_divergence() {
        let g = torus(24);
        let tau = std::f64::consts::TAU;
        let psi: Vec<f64> = (0..g.len()).map(|p| {
            let x = g.coords(p);
            (tau * x[0]).sin() * (tau * x[1]).cos() + 0.3 * (2.0 * tau * x[1]).sin()
        }).collect();
        let e = te_fields(&g, &psi, None);
        let b = tm_magnetic(&g, &psi);
        let mut s = EMState::with_zero_offsets(&g, e, b).unwrap();
        let l = LambdaField::zero(&g);
        let dt = 0.5 * cfl_limit(&g, &l);
        for _ in 0..200 {
            s = maxwell_step(&s, &l, dt).unwrap();
        }
        let r = gauss_residuals(&s, &l);
        assert!(r.electric < 1e-10 && r.magnetic < 1e-10, "{r:?}");
    }

    #[test]
    fn spatially_uniform_rate_damps_exponentially() {
        let g = build_grid(&GridSpec::periodic(&[1.0], &[16])).unwrap();
        let one = vec![vec![1.0; 16]];
        let zero = vec![vec![0.0; 16]];
        let mut s = EMState::new(&g, one.clone(), zero.clone(), zero.clone(), zero).unwrap();
        let l = LambdaField::zero(&g);
        let rate = vec![0.5; 16];
        let dt = 1e-3;
        for _ in 0..1000 {
            s = maxwell_step_with_rate(&s, &l, Some(&rate), dt).unwrap();
        }
        let expect = (-0.5f64).exp();
        assert!((s.e[0][3] - expect).abs() < 1e-3, "{}", s.e[0][3]);
    }

    #[test]
    fn manufactured_time_dependent_lambda_in_wave() {
        // lambda = t/2 everywhere, phi_d = 0: phi = e^{-t/2} solves the equation.
        let g = build_grid(&GridSpec::periodic(&[1.0], &[8])).unwrap();
        let dt: f64 = 1e-3;
        let f = DoubledForm::new(FormField::constant(&g, 1.0), FormField::constant(&g, 0.0)).unwrap();
        let mut s = WaveState::at_rest(f).unwrap();
        s.previous = vec![(0.5f64 * dt).exp(); 8];
        let l = LambdaField::zero(&g);
        let (first, second) = (vec![0.5; 8], vec![0.0; 8]);
        for _ in 0..1000 {
            s = wave_step_with_rates(&s, &l, Some(LambdaRates { first: &first, second: &second }), dt).unwrap();
        }
        let expect = (-0.5 * s.t).exp();
        assert!((s.field.top.values()[0] - expect).abs() < 1e-3);
    }

    #[test]
    fn lorentz_scaling() {
        let f = field_tensor([0.3, -1.0, 0.5], [0.2, 0.1, -0.7]);
        let u = [1.2, 0.3, -0.4, 0.5];
        let base = lorentz_force(0.0, &f, &u, 2.0, Signature::Lorentzian);
        let half = lorentz_force(2f64.ln(), &f, &u, 2.0, Signature::Lorentzian);
        for i in 0..4 {
            assert!((half[i] - 0.5 * base[i]).abs() < 1e-15);
        }
    }
}
