//! The homothety group acting on doubled fibres, the rescaled metric, the
//! position-dependent light speed and the contraction picture.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{DoubledForm, FormField, LambdaField};

/// `e^{-lambda}`, exactly 0 past the double underflow threshold.
pub fn decay(lambda: f64) -> f64 {
    if lambda > 745.0 { 0.0 } else { (-lambda).exp() }
}

/// `((e^{-l}, 1-e^{-l}), (0, 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomothetyMatrix {
    pub lambda_value: f64,
    pub entries: [[f64; 2]; 2],
}

impl HomothetyMatrix {
    pub fn new(lambda_value: f64) -> Self {
        let e = decay(lambda_value);
        HomothetyMatrix { lambda_value, entries: [[e, 1.0 - e], [0.0, 1.0]] }
    }

    pub fn determinant(&self) -> f64 {
        self.entries[0][0] * self.entries[1][1] - self.entries[0][1] * self.entries[1][0]
    }

    /// Plain 2x2 product `self * other`.
    pub fn mul(&self, other: &HomothetyMatrix) -> [[f64; 2]; 2] {
        let (a, b) = (self.entries, other.entries);
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    /// Apply to a single `(top, offset)` pair.
    pub fn apply(&self, top: f64, offset: f64) -> (f64, f64) {
        (act_value(self.entries[0][0], top, offset), offset)
    }
}

/// `offset + e (top - offset)`; the identity and the fixed point are exact.
#[inline]
pub fn act_value(e: f64, top: f64, offset: f64) -> f64 {
    if e == 1.0 { top } else { offset + e * (top - offset) }
}

/// Fibre-wise homothety with lambda sampled at each component location.
pub fn act(lambda: &LambdaField, f: &DoubledForm) -> Result<DoubledForm> {
    f.top.check_compatible(&f.offset)?;
    if !f.grid().same_shape(&lambda.grid) {
        return Err(Error::ShapeMismatch("lambda and form live on different grids".into()));
    }
    let lam = lambda.for_form(&f.top);
    let mut top = f.top.clone();
    for (c, comp) in top.comps.iter_mut().enumerate() {
        let (l, o) = (&lam[c], &f.offset.comps[c]);
        let src = &f.top.comps[c];
        exec::fill(comp, |p| act_value(decay(l[p]), src[p], o[p]));
    }
    Ok(DoubledForm { top, offset: f.offset.clone() })
}

/// `|| act(l1, act(l2, f)) - act(l1 + l2, f) ||_inf`.
pub fn compose_check(l1: &LambdaField, l2: &LambdaField, f: &DoubledForm) -> Result<f64> {
    if !l1.grid.same_shape(&l2.grid) {
        return Err(Error::ShapeMismatch("lambda fields live on different grids".into()));
    }
    let two_step = act(l1, &act(l2, f)?)?;
    let one_step = act(&l1.sum(l2), f)?;
    Ok(two_step.sub(&one_step).max_abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    /// `diag(-1, +1, ..., +1)`, time first.
    #[default]
    Lorentzian,
    Euclidean,
}

impl Signature {
    pub fn eta(self, i: usize) -> f64 {
        match self {
            Signature::Lorentzian if i == 0 => -1.0,
            _ => 1.0,
        }
    }

    pub fn dot(self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).enumerate().map(|(i, (a, b))| self.eta(i) * a * b).sum()
    }

    /// Index lowering with the flat metric.
    pub fn flat(self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, v)| self.eta(i) * v).collect()
    }
}

/// Rescaled metric with an explicit offset vector:
/// `e^{-2l} eta(X,Y) + (1-e^{-l})^2 eta(Xd,Xd) + e^{-l}(1-e^{-l}) [eta(X,Xd) + eta(Y,Xd)]`.
pub fn effective_metric(lambda_value: f64, x: &[f64], y: &[f64], x_d: &[f64], sig: Signature) -> Result<f64> {
    if x.len() != y.len() || x.len() != x_d.len() {
        return Err(Error::ShapeMismatch(format!(
            "vector lengths {}, {}, {} differ",
            x.len(),
            y.len(),
            x_d.len()
        )));
    }
    let e = decay(lambda_value);
    let g = 1.0 - e;
    let xy = sig.dot(x, y);
    if x_d.iter().all(|v| *v == 0.0) {
        return Ok(e * e * xy);
    }
    Ok(e * e * xy + g * g * sig.dot(x_d, x_d) + e * g * (sig.dot(x, x_d) + sig.dot(y, x_d)))
}

/// `c(x) = e^{-lambda(x)}`.
pub fn vsl_speed(lambda: &LambdaField) -> FormField {
    FormField::scalar(&lambda.grid, lambda.values.iter().map(|&l| decay(l)).collect())
}

/// One application of `T(a) = a_d + e^{-l} (a - a_d)`.
fn contract(e: f64, alpha: &FormField, alpha_d: &FormField) -> FormField {
    alpha.zip_with(alpha_d, |a, d| act_value(e, a, d))
}

/// Iterate the contraction `steps` times.
pub fn contraction_iterate(lambda_value: f64, alpha: &FormField, alpha_d: &FormField, steps: usize) -> Result<FormField> {
    Ok(contraction_trace(lambda_value, alpha, alpha_d, steps)?.0)
}

/// Iterate and record the L2 distance to `alpha_d` after every step
/// (entry 0 is the starting distance).
pub fn contraction_trace(
    lambda_value: f64,
    alpha: &FormField,
    alpha_d: &FormField,
    steps: usize,
) -> Result<(FormField, Vec<f64>)> {
    if !(lambda_value > 0.0) {
        return Err(Error::InvalidArgument(format!("contraction needs lambda > 0, got {lambda_value}")));
    }
    alpha.check_compatible(alpha_d)?;
    let e = decay(lambda_value);
    let mut cur = alpha.clone();
    let mut dist = vec![cur.sub(alpha_d).l2_norm()];
    for _ in 0..steps {
        cur = contract(e, &cur, alpha_d);
        dist.push(cur.sub(alpha_d).l2_norm());
    }
    Ok((cur, dist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    fn grid() -> crate::grid::Grid {
        build_grid(&GridSpec::periodic(&[1.0], &[8])).unwrap()
    }

    #[test]
    fn matrix_basics() {
        let m = HomothetyMatrix::new(0.0);
        assert_eq!(m.entries, [[1.0, 0.0], [0.0, 1.0]]);
        let m = HomothetyMatrix::new(0.7);
        assert!((m.determinant() - (-0.7f64).exp()).abs() < 1e-16);
        let prod = HomothetyMatrix::new(0.3).mul(&HomothetyMatrix::new(0.4));
        let direct = HomothetyMatrix::new(0.7).entries;
        for i in 0..2 {
            for j in 0..2 {
                assert!((prod[i][j] - direct[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn overflow_guard() {
        assert_eq!(decay(800.0), 0.0);
        let m = HomothetyMatrix::new(1000.0);
        assert_eq!(m.apply(5.0, 2.0), (2.0, 2.0));
    }

    #[test]
    fn act_on_constants() {
        let g = grid();
        let f = DoubledForm::new(FormField::constant(&g, 4.0), FormField::constant(&g, 2.0)).unwrap();
        let out = act(&LambdaField::constant(&g, 2f64.ln()), &f).unwrap();
        assert!(out.top.values().iter().all(|v| (v - 3.0).abs() < 1e-15));
        assert_eq!(out.offset, f.offset);
        assert_eq!(act(&LambdaField::zero(&g), &f).unwrap(), f);
    }

    #[test]
    fn metric_limits() {
        let (x, y, xd) = ([1.0, 2.0, 0.0, 1.0], [0.5, -1.0, 3.0, 0.0], [1.0, 0.2, 0.0, 0.0]);
        let sig = Signature::Lorentzian;
        assert_eq!(effective_metric(0.0, &x, &y, &xd, sig).unwrap(), sig.dot(&x, &y));
        let r = effective_metric(2f64.ln(), &x, &y, &[0.0; 4], sig).unwrap();
        assert!((r - sig.dot(&x, &y) / 4.0).abs() < 1e-15);
        let big = effective_metric(40.0, &x, &y, &xd, sig).unwrap();
        assert!((big - sig.dot(&xd, &xd)).abs() < 1e-12);
        assert!(effective_metric(1.0, &x, &y[..3], &xd, sig).is_err());
    }

    #[test]
    fn contraction_rejects_non_positive_lambda() {
        let g = grid();
        let a = FormField::constant(&g, 1.0);
        assert!(contraction_iterate(0.0, &a, &a, 3).is_err());
    }

    #[test]
    fn contraction_fixed_point() {
        let g = grid();
        let a = FormField::from_fn(&g, 0, |_, x| x[0].cos());
        let (_, d) = contraction_trace(1.0, &a, &a, 5).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }
}
