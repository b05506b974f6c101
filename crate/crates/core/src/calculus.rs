//! Discrete exterior calculus on periodic cubical grids and its doubled
//! homothetic extension.
//!
//! The underlying `d` is the forward-difference coboundary of the staggered
//! layout (see [`crate::grid`]), so `d d = 0` up to roundoff. Writing
//! `E = diag(e^lambda)` at component locations, the doubled derivative is
//!
//! ```text
//!   d^ = [[A, d - A], [0, d]],   A = E^-1 d E,
//! ```
//!
//! which is `Lambda d Lambda^-1` fibre-wise, so it is nilpotent and commutes
//! with the homothety exactly. `A` is `d + dlambda^` with the wedge realised
//! as the discrete commutator `E^-1 [d, E]`. The doubled inner product is the
//! push-forward of the flat one, `W = vol * Lambda^-T Lambda^-1` per
//! location, and `delta^ = W^-1 d^T W`.
//!
//! A second family multiplies by the interpolated gradient pointwise
//! (`d + g^`, `delta - i_g`). It differs from the first at O(h^2) and is
//! the one whose commutation defect is a Leibniz-order truncation error.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{binomial, complement_sign, insertion_sign, subsets, DoubledForm, FormField, Grid, LambdaField, Layout};
use crate::homothety::{act, decay};
use crate::linalg;
use crate::sparse::Csr;

/// Coboundary `d_k` on a periodic grid.
pub fn exterior_derivative(grid: &Grid, k: usize) -> Result<Csr> {
    if !grid.is_periodic() {
        return Err(Error::InvalidGrid("exterior calculus needs a fully periodic grid".into()));
    }
    if k >= grid.dim {
        return Err(Error::Degree { k, what: "exterior derivative" });
    }
    let n = grid.len();
    let from = subsets(grid.dim, k);
    let to = subsets(grid.dim, k + 1);
    let mut triplets = Vec::new();
    for (ci, &s) in from.iter().enumerate() {
        for a in 0..grid.dim {
            if s & (1 << a) != 0 {
                continue;
            }
            let t = s | (1 << a);
            let co = to.iter().position(|&m| m == t).expect("subset present");
            let w = insertion_sign(s, a) / grid.spacing[a];
            for p in 0..n {
                let q = grid.shift(p, a, 1).expect("periodic");
                triplets.push((co * n + p, ci * n + q, w));
                triplets.push((co * n + p, ci * n + p, -w));
            }
        }
    }
    Ok(Csr::from_triplets(to.len() * n, from.len() * n, &triplets))
}

/// Pointwise Hodge star from primal `k`-forms to dual `(dim-k)`-forms.
pub fn hodge_star(grid: &Grid, k: usize) -> Csr {
    let n = grid.len();
    let full = ((1u16 << grid.dim) - 1) as u8;
    let from = subsets(grid.dim, k);
    let to = subsets(grid.dim, grid.dim - k);
    let mut triplets = Vec::new();
    for (ci, &s) in from.iter().enumerate() {
        let co = to.iter().position(|&m| m == full & !s).expect("complement present");
        let sign = complement_sign(grid.dim, s);
        for p in 0..n {
            triplets.push((co * n + p, ci * n + p, sign));
        }
    }
    Csr::from_triplets(to.len() * n, from.len() * n, &triplets)
}

fn block_diag(m: &Csr) -> Csr {
    Csr::block2([[Some(m), None], [None, Some(m)]])
}

/// Assembled operators for one grid and gauge field.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub grid: Grid,
    pub lambda: LambdaField,
    /// `d[k]`: k-forms to (k+1)-forms.
    pub d: Vec<Csr>,
    /// `star[k]`: primal k-forms to dual (dim-k)-forms.
    pub star: Vec<Csr>,
    /// `e^{lambda}` at every k-form component location, flattened.
    pub scale: Vec<Vec<f64>>,
    /// Single-fibre mass `vol * e^{-2 lambda}` per k.
    pub mass: Vec<Vec<f64>>,
    pub d_hat: Vec<Csr>,
    /// `delta_hat[k]`: (k+1)-forms to k-forms.
    pub delta_hat: Vec<Csr>,
    pub laplacian_hat: Vec<Csr>,
    pub star_hat: Vec<Csr>,
    pub weight: Vec<Csr>,
    pub weight_inv: Vec<Csr>,
    /// Forward-difference gradient of lambda as a primal 1-form.
    pub dlambda: Vec<f64>,
}

impl OperatorSet {
    pub fn new(lambda: &LambdaField) -> Result<Self> {
        let grid = lambda.grid.clone();
        if !grid.is_periodic() {
            return Err(Error::InvalidGrid("operator sets need a fully periodic grid".into()));
        }
        let dim = grid.dim;
        let n = grid.len();
        let vol = grid.cell_volume();
        let d: Vec<Csr> = (0..dim).map(|k| exterior_derivative(&grid, k)).collect::<Result<_>>()?;
        let star: Vec<Csr> = (0..=dim).map(|k| hodge_star(&grid, k)).collect();
        let lam_loc: Vec<Vec<f64>> = (0..=dim)
            .map(|k| subsets(dim, k).iter().flat_map(|&m| lambda.at_location(m)).collect())
            .collect();
        let scale: Vec<Vec<f64>> = lam_loc.iter().map(|l| l.iter().map(|v| v.exp()).collect()).collect();
        let mass: Vec<Vec<f64>> = lam_loc.iter().map(|l| l.iter().map(|v| vol * (-2.0 * v).exp()).collect()).collect();

        let mut d_hat = Vec::with_capacity(dim);
        for k in 0..dim {
            let dk = &d[k];
            let (ek, ek1) = (&scale[k], &scale[k + 1]);
            let mut a = dk.clone();
            let mut rest = dk.clone();
            for r in 0..dk.nrows {
                for idx in dk.indptr[r]..dk.indptr[r + 1] {
                    let ratio = ek[dk.indices[idx]] / ek1[r];
                    a.data[idx] = dk.data[idx] * ratio;
                    rest.data[idx] = dk.data[idx] * (1.0 - ratio);
                }
            }
            d_hat.push(Csr::block2([[Some(&a), Some(&rest)], [None, Some(dk)]]));
        }

        let mut weight = Vec::with_capacity(dim + 1);
        let mut weight_inv = Vec::with_capacity(dim + 1);
        for k in 0..=dim {
            let m = binomial(dim, k) * n;
            let mut w = Vec::with_capacity(4 * m);
            let mut wi = Vec::with_capacity(4 * m);
            for (i, &l) in lam_loc[k].iter().enumerate() {
                let a = l.exp();
                let b = decay(l);
                w.extend([
                    (i, i, vol * a * a),
                    (i, m + i, vol * a * (1.0 - a)),
                    (m + i, i, vol * a * (1.0 - a)),
                    (m + i, m + i, vol * ((1.0 - a) * (1.0 - a) + 1.0)),
                ]);
                wi.extend([
                    (i, i, (b * b + (1.0 - b) * (1.0 - b)) / vol),
                    (i, m + i, (1.0 - b) / vol),
                    (m + i, i, (1.0 - b) / vol),
                    (m + i, m + i, 1.0 / vol),
                ]);
            }
            weight.push(Csr::from_triplets(2 * m, 2 * m, &w));
            weight_inv.push(Csr::from_triplets(2 * m, 2 * m, &wi));
        }

        let delta_hat: Vec<Csr> =
            (0..dim).map(|k| weight_inv[k].matmul(&d_hat[k].transpose()).matmul(&weight[k + 1])).collect();
        let laplacian_hat = (0..=dim)
            .map(|k| {
                let up = (k < dim).then(|| delta_hat[k].matmul(&d_hat[k]));
                let down = (k > 0).then(|| d_hat[k - 1].matmul(&delta_hat[k - 1]));
                match (up, down) {
                    (Some(u), Some(v)) => u.add(&v),
                    (Some(u), None) => u,
                    (None, Some(v)) => v,
                    (None, None) => unreachable!("dim >= 1"),
                }
            })
            .collect();
        let star_hat = star.iter().map(block_diag).collect();
        let dlambda = d[0].matvec(&lambda.values);
        Ok(OperatorSet {
            grid,
            lambda: lambda.clone(),
            d,
            star,
            scale,
            mass,
            d_hat,
            delta_hat,
            laplacian_hat,
            star_hat,
            weight,
            weight_inv,
            dlambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    fn check_form(&self, f: &DoubledForm) -> Result<()> {
        if !f.grid().same_shape(&self.grid) {
            return Err(Error::ShapeMismatch("form lives on a different grid".into()));
        }
        if f.top.layout != Layout::Primal {
            return Err(Error::ShapeMismatch("operators act on primal forms".into()));
        }
        Ok(())
    }

    fn doubled(&self, k: usize, flat: &[f64]) -> DoubledForm {
        DoubledForm::zeros(&self.grid, k).with_flat(flat)
    }

    /// Doubled inner product `x^T W_k y`.
    pub fn inner(&self, k: usize, x: &[f64], y: &[f64]) -> f64 {
        let wy = self.weight[k].matvec(y);
        exec::sum(x.iter().zip(&wy).map(|(a, b)| a * b))
    }

    pub fn inner_forms(&self, x: &DoubledForm, y: &DoubledForm) -> f64 {
        self.inner(x.k(), &x.flat(), &y.flat())
    }

    pub fn norm(&self, x: &DoubledForm) -> f64 {
        self.inner_forms(x, x).max(0.0).sqrt()
    }

    pub fn d_hat(&self, f: &DoubledForm) -> Result<DoubledForm> {
        self.check_form(f)?;
        let k = f.k();
        if k >= self.dim() {
            return Err(Error::Degree { k, what: "d_hat" });
        }
        Ok(self.doubled(k + 1, &self.d_hat[k].matvec(&f.flat())))
    }

    pub fn delta_hat(&self, f: &DoubledForm) -> Result<DoubledForm> {
        self.check_form(f)?;
        let k = f.k();
        if k == 0 || k > self.dim() {
            return Err(Error::Degree { k, what: "delta_hat" });
        }
        Ok(self.doubled(k - 1, &self.delta_hat[k - 1].matvec(&f.flat())))
    }

    pub fn laplacian_hat(&self, f: &DoubledForm) -> Result<DoubledForm> {
        self.check_form(f)?;
        let k = f.k();
        if k > self.dim() {
            return Err(Error::Degree { k, what: "laplacian_hat" });
        }
        Ok(self.doubled(k, &self.laplacian_hat[k].matvec(&f.flat())))
    }

    pub fn star_hat(&self, f: &DoubledForm) -> Result<DoubledForm> {
        self.check_form(f)?;
        let k = f.k();
        let out = self.star_hat[k].matvec(&f.flat());
        let mut g = self.doubled(self.dim() - k, &out);
        g.top.layout = Layout::Dual;
        g.offset.layout = Layout::Dual;
        Ok(g)
    }

    /// Plain operator applied to both fibres.
    pub fn plain(&self, f: &DoubledForm, which: Op) -> Result<DoubledForm> {
        self.check_form(f)?;
        let k = f.k();
        let apply = |v: &[f64]| -> Result<Vec<f64>> {
            match which {
                Op::D => Ok(self.d.get(k).ok_or(Error::Degree { k, what: "d" })?.matvec(v)),
                Op::Delta => {
                    if k == 0 {
                        return Err(Error::Degree { k, what: "delta" });
                    }
                    Ok(self.codifferential(k, v))
                }
                Op::Laplacian => Ok(self.plain_laplacian(k, v)),
                Op::Star => Ok(self.star[k].matvec(v)),
            }
        };
        let top = apply(&f.top.flat())?;
        let off = apply(&f.offset.flat())?;
        let k_out = match which {
            Op::D => k + 1,
            Op::Delta => k - 1,
            Op::Laplacian => k,
            Op::Star => self.dim() - k,
        };
        let mut out = DoubledForm::zeros(&self.grid, k_out);
        out.top = out.top.with_flat(&top);
        out.offset = out.offset.with_flat(&off);
        if which == Op::Star {
            out.top.layout = Layout::Dual;
            out.offset.layout = Layout::Dual;
        }
        Ok(out)
    }

    /// Plain codifferential `d_{k-1}^T` (unit weights cancel).
    pub fn codifferential(&self, k: usize, v: &[f64]) -> Vec<f64> {
        transpose_apply(&self.d[k - 1], v)
    }

    fn plain_laplacian(&self, k: usize, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        if k < self.dim() {
            let up = self.codifferential(k + 1, &self.d[k].matvec(v));
            for (o, u) in out.iter_mut().zip(up) {
                *o += u;
            }
        }
        if k > 0 {
            let down = self.d[k - 1].matvec(&self.codifferential(k, v));
            for (o, u) in out.iter_mut().zip(down) {
                *o += u;
            }
        }
        out
    }

    /// `g ^ u` with `g` the forward-difference gradient of lambda; both
    /// factors are averaged to the target location.
    pub fn wedge_dlambda(&self, k: usize, u: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let (dim, n) = (grid.dim, grid.len());
        let from = subsets(dim, k);
        let to = subsets(dim, k + 1);
        let mut out = vec![0.0; to.len() * n];
        for (ci, &s) in from.iter().enumerate() {
            let us = &u[ci * n..(ci + 1) * n];
            for a in 0..dim {
                if s & (1 << a) != 0 {
                    continue;
                }
                let co = to.iter().position(|&m| m == s | (1 << a)).expect("subset present");
                let ga = &self.dlambda[a * n..(a + 1) * n];
                let sign = insertion_sign(s, a);
                let s_axes: Vec<usize> = (0..dim).filter(|b| s & (1 << b) != 0).collect();
                for p in 0..n {
                    let g = corner_average(grid, ga, p, &s_axes, None);
                    let q = grid.shift(p, a, 1).expect("periodic");
                    let uv = 0.5 * (us[p] + us[q]);
                    out[co * n + p] += sign * g * uv;
                }
            }
        }
        out
    }

    /// Interior product `i_g u`, averaged like [`Self::wedge_dlambda`].
    pub fn interior_dlambda(&self, k: usize, u: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let (dim, n) = (grid.dim, grid.len());
        let from = subsets(dim, k);
        let to = subsets(dim, k - 1);
        let mut out = vec![0.0; to.len() * n];
        for (ci, &s) in from.iter().enumerate() {
            let us = &u[ci * n..(ci + 1) * n];
            for a in 0..dim {
                if s & (1 << a) == 0 {
                    continue;
                }
                let r = s & !(1 << a);
                let co = to.iter().position(|&m| m == r).expect("subset present");
                let ga = &self.dlambda[a * n..(a + 1) * n];
                let sign = insertion_sign(r, a);
                let r_axes: Vec<usize> = (0..dim).filter(|b| r & (1 << b) != 0).collect();
                for p in 0..n {
                    let g = corner_average(grid, ga, p, &r_axes, Some(a));
                    let m = grid.shift(p, a, -1).expect("periodic");
                    let uv = 0.5 * (us[p] + us[m]);
                    out[co * n + p] += sign * g * uv;
                }
            }
        }
        out
    }

    /// Pointwise-coefficient operator family, applied matrix-free.
    pub fn literal(&self, f: &DoubledForm, which: Op) -> Result<DoubledForm> {
        self.check_form(f)?;
        let k = f.k();
        match which {
            Op::D => {
                if k >= self.dim() {
                    return Err(Error::Degree { k, what: "literal d" });
                }
                let (t, o) = (f.top.flat(), f.offset.flat());
                let diff: Vec<f64> = t.iter().zip(&o).map(|(a, b)| a - b).collect();
                let dt = self.d[k].matvec(&t);
                let w = self.wedge_dlambda(k, &diff);
                let top: Vec<f64> = dt.iter().zip(&w).map(|(a, b)| a + b).collect();
                let off = self.d[k].matvec(&o);
                Ok(self.doubled(k + 1, &[top, off].concat()))
            }
            Op::Delta => {
                if k == 0 || k > self.dim() {
                    return Err(Error::Degree { k, what: "literal delta" });
                }
                let (t, o) = (f.top.flat(), f.offset.flat());
                let diff: Vec<f64> = t.iter().zip(&o).map(|(a, b)| a - b).collect();
                let dt = self.codifferential(k, &t);
                let w = self.interior_dlambda(k, &diff);
                let top: Vec<f64> = dt.iter().zip(&w).map(|(a, b)| a - b).collect();
                let off = self.codifferential(k, &o);
                Ok(self.doubled(k - 1, &[top, off].concat()))
            }
            Op::Laplacian => {
                let mut acc: Option<DoubledForm> = None;
                if k < self.dim() {
                    acc = Some(self.literal(&self.literal(f, Op::D)?, Op::Delta)?);
                }
                if k > 0 {
                    let down = self.literal(&self.literal(f, Op::Delta)?, Op::D)?;
                    acc = Some(match acc {
                        Some(up) => self.doubled(k, &up.flat().iter().zip(down.flat()).map(|(a, b)| a + b).collect::<Vec<_>>()),
                        None => down,
                    });
                }
                Ok(acc.expect("dim >= 1"))
            }
            Op::Star => self.star_hat(f),
        }
    }

    /// Single-fibre operator `E^-1 d E` (the top-left block of `d_hat`).
    pub fn fiber_d(&self, k: usize) -> Csr {
        self.d[k].scale_cols(&self.scale[k]).scale_rows(&self.scale[k + 1].iter().map(|e| 1.0 / e).collect::<Vec<_>>())
    }

    /// Adjoint of [`Self::fiber_d`] under the `e^{-2 lambda}` mass.
    pub fn fiber_delta(&self, k: usize) -> Csr {
        let inv: Vec<f64> = self.mass[k].iter().map(|m| 1.0 / m).collect();
        self.fiber_d(k).transpose().scale_rows(&inv).scale_cols(&self.mass[k + 1])
    }

    pub fn fiber_laplacian(&self, k: usize) -> Csr {
        let dim = self.dim();
        let up = (k < dim).then(|| self.fiber_delta(k).matmul(&self.fiber_d(k)));
        let down = (k > 0).then(|| self.fiber_d(k - 1).matmul(&self.fiber_delta(k - 1)));
        match (up, down) {
            (Some(u), Some(v)) => u.add(&v),
            (Some(u), None) => u,
            (None, Some(v)) => v,
            (None, None) => unreachable!("dim >= 1"),
        }
    }
}

fn transpose_apply(m: &Csr, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.ncols];
    for r in 0..m.nrows {
        let vr = v[r];
        for (c, w) in m.row(r) {
            out[c] += w * vr;
        }
    }
    out
}

/// Average of `field` over `p + e_B` for every subset `B` of `axes`, and
/// additionally over `p - e_back` when `back` is set.
fn corner_average(grid: &Grid, field: &[f64], p: usize, axes: &[usize], back: Option<usize>) -> f64 {
    let starts: Vec<usize> = match back {
        Some(a) => vec![p, grid.shift(p, a, -1).expect("periodic")],
        None => vec![p],
    };
    let count = starts.len() * (1usize << axes.len());
    let mut acc = 0.0;
    for &s in &starts {
        for corner in 0..(1usize << axes.len()) {
            let mut q = s;
            for (bit, &b) in axes.iter().enumerate() {
                if corner & (1 << bit) != 0 {
                    q = grid.shift(q, b, 1).expect("periodic");
                }
            }
            acc += field[q];
        }
    }
    acc / count as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    D,
    Delta,
    Laplacian,
    Star,
}

/// Commutation defects `|| O^(Lambda f) - Lambda(O f) ||` for both operator
/// families, in the cell-volume L2 norm.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CommutationResidual {
    pub op: Op,
    pub structural: f64,
    pub literal: f64,
    /// Norm of `Lambda[lambda] (plain op) f`, for relative residuals.
    pub scale: f64,
}

pub fn check_commutation(ops: &OperatorSet, f: &DoubledForm, which: Op) -> Result<CommutationResidual> {
    let lam = &ops.lambda;
    let lf = act(lam, f)?;
    let rhs = act(lam, &ops.plain(f, which)?)?;
    let structural = match which {
        Op::D => ops.d_hat(&lf)?,
        Op::Delta => ops.delta_hat(&lf)?,
        Op::Laplacian => ops.laplacian_hat(&lf)?,
        Op::Star => ops.star_hat(&lf)?,
    };
    let literal = ops.literal(&lf, which)?;
    Ok(CommutationResidual {
        op: which,
        structural: structural.sub(&rhs).l2_norm(),
        literal: literal.sub(&rhs).l2_norm(),
        scale: rhs.l2_norm(),
    })
}

/// Orthogonal split `f = d^ alpha + delta^ beta + gamma`.
#[derive(Debug, Clone)]
pub struct HodgeSplit {
    pub exact: DoubledForm,
    pub coexact: DoubledForm,
    pub harmonic: DoubledForm,
    /// `||f - sum|| / ||f||` in the doubled weighted norm.
    pub reconstruction: f64,
    /// `|<exact,coexact>|, |<exact,harmonic>|, |<coexact,harmonic>|`, each
    /// divided by `||f||^2`.
    pub orthogonality: [f64; 3],
    /// `||Lap^ gamma|| / ||Lap^ f||`, or the absolute norm when `f` is harmonic.
    pub harmonic_residual: f64,
    pub iterations: [usize; 2],
}

pub const HODGE_TOL: f64 = 1e-12;

/// A right-hand side made only of cancellation noise (such as `d^` of an
/// exact form) is zero; CG cannot reach a relative tolerance on it.
fn floor_rounding(rhs: Vec<f64>, op: &Csr, f: &[f64]) -> Vec<f64> {
    let noise = 64.0 * f64::EPSILON * op.max_abs() * f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rhs.iter().all(|v| v.abs() <= noise) { vec![0.0; rhs.len()] } else { rhs }
}

pub fn hodge_decompose(ops: &OperatorSet, f: &DoubledForm) -> Result<HodgeSplit> {
    ops.check_form(f)?;
    let k = f.k();
    let dim = ops.dim();
    let flat = f.flat();
    let zero = vec![0.0; flat.len()];
    let mut iterations = [0, 0];

    let exact = if k > 0 {
        let dh = &ops.d_hat[k - 1];
        let th = &ops.delta_hat[k - 1];
        let rhs = floor_rounding(th.matvec(&flat), th, &flat);
        let cap = 10 * rhs.len();
        let out = linalg::cg(|x| th.matvec(&dh.matvec(x)), |x, y| ops.inner(k - 1, x, y), &rhs, HODGE_TOL, cap)?;
        iterations[0] = out.iterations;
        dh.matvec(&out.x)
    } else {
        zero.clone()
    };
    let coexact = if k < dim {
        let dh = &ops.d_hat[k];
        let th = &ops.delta_hat[k];
        let rhs = floor_rounding(dh.matvec(&flat), dh, &flat);
        let cap = 10 * rhs.len();
        let out = linalg::cg(|x| dh.matvec(&th.matvec(x)), |x, y| ops.inner(k + 1, x, y), &rhs, HODGE_TOL, cap)?;
        iterations[1] = out.iterations;
        th.matvec(&out.x)
    } else {
        zero
    };
    let harmonic: Vec<f64> = (0..flat.len()).map(|i| flat[i] - exact[i] - coexact[i]).collect();

    let fnorm2 = ops.inner(k, &flat, &flat);
    let scale = if fnorm2 > 0.0 { fnorm2 } else { 1.0 };
    let sum: Vec<f64> = (0..flat.len()).map(|i| flat[i] - (exact[i] + coexact[i] + harmonic[i])).collect();
    let reconstruction = ops.inner(k, &sum, &sum).max(0.0).sqrt() / scale.sqrt();
    let orthogonality = [
        ops.inner(k, &exact, &coexact).abs() / scale,
        ops.inner(k, &exact, &harmonic).abs() / scale,
        ops.inner(k, &coexact, &harmonic).abs() / scale,
    ];
    let lap = &ops.laplacian_hat[k];
    let lg = lap.matvec(&harmonic);
    let lf = lap.matvec(&flat);
    let lgn = ops.inner(k, &lg, &lg).max(0.0).sqrt();
    let lfn = ops.inner(k, &lf, &lf).max(0.0).sqrt();
    let harmonic_residual = if lfn > 0.0 { lgn / lfn } else { lgn };
    Ok(HodgeSplit {
        exact: f.with_flat(&exact),
        coexact: f.with_flat(&coexact),
        harmonic: f.with_flat(&harmonic),
        reconstruction,
        orthogonality,
        harmonic_residual,
        iterations,
    })
}

/// Kernel dimensions found by singular values.
#[derive(Debug, Clone, Serialize)]
pub struct CohomologyDims {
    pub k: usize,
    /// `dim ker` of the single-fibre Laplacian.
    pub fiber: usize,
    /// `dim ker` of the assembled doubled Laplacian.
    pub doubled: usize,
    /// True when a singular value sits in the ambiguity band.
    pub indeterminate: bool,
    /// Smallest singular value counted as nonzero, relative to the largest.
    pub gap: f64,
}

pub const RANK_TOL: f64 = 1e-8;
/// Relative band `[RANK_TOL / AMBIGUITY, RANK_TOL * AMBIGUITY]`.
const AMBIGUITY: f64 = 100.0;

fn kernel_dim(m: DMatrix<f64>) -> (usize, bool, f64) {
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return (sv.len(), false, 0.0);
    }
    let rel: Vec<f64> = sv.iter().map(|s| s / smax).collect();
    let zeros = rel.iter().filter(|&&s| s < RANK_TOL).count();
    let ambiguous = rel.iter().any(|s| (RANK_TOL / AMBIGUITY..=RANK_TOL * AMBIGUITY).contains(s));
    let gap = rel.iter().cloned().filter(|&s| s >= RANK_TOL).fold(f64::INFINITY, f64::min);
    (zeros, ambiguous, gap)
}

pub fn cohomology_dims(ops: &OperatorSet, k: usize) -> Result<CohomologyDims> {
    if k > ops.dim() {
        return Err(Error::Degree { k, what: "cohomology" });
    }
    let (fiber, amb1, gap1) = kernel_dim(ops.fiber_laplacian(k).to_dense());
    let (doubled, amb2, gap2) = kernel_dim(ops.laplacian_hat[k].to_dense());
    Ok(CohomologyDims { k, fiber, doubled, indeterminate: amb1 || amb2, gap: gap1.min(gap2) })
}

/// Betti numbers of the flat torus of the grid's dimension.
pub fn torus_betti(dim: usize, k: usize) -> usize {
    binomial(dim, k)
}

/// `|| d(d lambda) ||_inf` with the staggered coboundary.
pub fn connection_curvature(lambda: &LambdaField) -> Result<f64> {
    let grid = &lambda.grid;
    let d0 = exterior_derivative(grid, 0)?;
    if grid.dim < 2 {
        return Ok(0.0);
    }
    let d1 = exterior_derivative(grid, 1)?;
    Ok(exec::max_abs(d1.matvec(&d0.matvec(&lambda.values))))
}

/// `6 [ |grad lambda|^2 - lap lambda ]` from the cached stencils.
pub fn curvature_scalar(lambda: &LambdaField) -> FormField {
    let values = (0..lambda.grid.len())
        .map(|p| {
            let g2: f64 = lambda.gradient.iter().map(|g| g[p] * g[p]).sum();
            6.0 * (g2 - lambda.laplacian[p])
        })
        .collect();
    FormField::scalar(&lambda.grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};
    use std::f64::consts::PI;

    fn torus(n: usize) -> Grid {
        build_grid(&GridSpec::periodic(&[2.0 * PI, 2.0 * PI], &[n, n])).unwrap()
    }

    fn smooth_lambda(g: &Grid) -> LambdaField {
        LambdaField::from_fn(g, |x| 0.4 * x[0].sin() * x[1].cos() + 0.2 * (2.0 * x[1]).sin())
    }

    #[test]
    fn d_squared_vanishes_on_3d_grid() {
        let g = build_grid(&GridSpec::periodic(&[1.0, 2.0, 3.0], &[4, 5, 6])).unwrap();
        let d0 = exterior_derivative(&g, 0).unwrap();
        let d1 = exterior_derivative(&g, 1).unwrap();
        let d2 = exterior_derivative(&g, 2).unwrap();
        assert!(d1.matmul(&d0).max_abs() < 1e-12);
        assert!(d2.matmul(&d1).max_abs() < 1e-12);
    }

    #[test]
    fn bounded_grid_rejected() {
        let g = build_grid(&GridSpec::bounded(&[0.0], &[1.0], &[5])).unwrap();
        assert!(OperatorSet::new(&LambdaField::zero(&g)).is_err());
    }

    #[test]
    fn zero_lambda_is_block_diagonal() {
        let g = torus(6);
        let ops = OperatorSet::new(&LambdaField::zero(&g)).unwrap();
        let dh = &ops.d_hat[0];
        let n0 = g.len();
        let n1 = 2 * g.len();
        for r in 0..n1 {
            for (c, v) in dh.row(r) {
                assert!(c < n0 || v == 0.0, "off-diagonal block entry");
            }
        }
    }

    #[test]
    fn star_squared_is_signed_identity() {
        let g = build_grid(&GridSpec::periodic(&[1.0, 1.0, 1.0], &[3, 3, 3])).unwrap();
        for k in 0..=3 {
            let s = hodge_star(&g, k);
            let back = hodge_star(&g, 3 - k);
            let sq = back.matmul(&s);
            let sign = if (k * (3 - k)) % 2 == 0 { 1.0 } else { -1.0 };
            assert!(sq.sub(&Csr::identity(sq.nrows).scale_rows(&vec![sign; sq.nrows])).max_abs() == 0.0);
        }
    }

    #[test]
    fn structural_and_literal_delta_agree_to_second_order() {
        let mut errs = Vec::new();
        for n in [16, 32] {
            let g = torus(n);
            let ops = OperatorSet::new(&smooth_lambda(&g)).unwrap();
            let f = DoubledForm::new(
                FormField::from_fn(&g, 1, |c, x| if c == 0 { x[1].sin() } else { (x[0] + x[1]).cos() }),
                FormField::from_fn(&g, 1, |c, x| if c == 0 { x[0].cos() } else { 0.5 * x[1].sin() }),
            )
            .unwrap();
            let a = ops.delta_hat(&f).unwrap();
            let b = ops.literal(&f, Op::Delta).unwrap();
            errs.push(a.sub(&b).l2_norm());
        }
        let ratio = errs[0] / errs[1];
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}, errors {errs:?}");
    }

    #[test]
    fn curvature_of_flat_gauge_is_zero() {
        let g = torus(8);
        assert_eq!(connection_curvature(&LambdaField::zero(&g)).unwrap(), 0.0);
        let c = curvature_scalar(&LambdaField::zero(&g));
        assert!(c.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn curvature_scalar_of_linear_lambda_is_constant() {
        let g = build_grid(&GridSpec::bounded(&[0.0, 0.0], &[1.0, 1.0], &[9, 9])).unwrap();
        let lam = LambdaField::from_fn(&g, |x| 2.0 * x[0] - x[1]);
        let c = curvature_scalar(&lam);
        assert!(c.values().iter().all(|v| (v - 30.0).abs() < 1e-11));
    }
}
