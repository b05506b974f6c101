//! Seeded smooth random fields.
//!
//! Streams come from ChaCha8 seeded with a 64-bit value. A smooth field is
//! a sum of low Fourier modes `a cos(2 pi k.x / L) + b sin(2 pi k.x / L)`
//! over wavevectors with `|k_a| <= modes`, coefficients uniform in
//! `[-1, 1]` scaled by `amplitude / (1 + |k|^2)`, drawn in lexicographic
//! wavevector order (cos coefficient first).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{DoubledForm, FormField, Grid, LambdaField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn wavevectors(dim: usize, modes: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|v| (-modes..=modes).map(move |k| {
                let mut w = v.clone();
                w.push(k);
                w
            }))
            .collect();
    }
    out
}

/// Samples of a band-limited field at arbitrary points.
#[derive(Debug, Clone)]
pub struct SmoothField {
    extent: Vec<f64>,
    terms: Vec<(Vec<i64>, f64, f64)>,
}

impl SmoothField {
    pub fn draw(rng: &mut ChaCha8Rng, grid: &Grid, modes: usize, amplitude: f64) -> Self {
        let terms = wavevectors(grid.dim, modes as i64)
            .into_iter()
            .map(|k| {
                let k2: i64 = k.iter().map(|v| v * v).sum();
                let s = amplitude / (1.0 + k2 as f64);
                let a = rng.random_range(-1.0..1.0) * s;
                let b = rng.random_range(-1.0..1.0) * s;
                (k, a, b)
            })
            .collect();
        SmoothField { extent: grid.extent.clone(), terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let tau = std::f64::consts::TAU;
        self.terms
            .iter()
            .map(|(k, a, b)| {
                let phase: f64 = k.iter().enumerate().map(|(i, &ki)| tau * ki as f64 * x[i] / self.extent[i]).sum();
                a * phase.cos() + b * phase.sin()
            })
            .sum()
    }
}

pub fn smooth_scalar(rng: &mut ChaCha8Rng, grid: &Grid, modes: usize, amplitude: f64) -> Vec<f64> {
    let f = SmoothField::draw(rng, grid, modes, amplitude);
    (0..grid.len()).map(|p| f.eval(&grid.coords(p))).collect()
}

pub fn smooth_lambda(rng: &mut ChaCha8Rng, grid: &Grid, amplitude: f64) -> LambdaField {
    LambdaField::from_values(grid, smooth_scalar(rng, grid, 2, amplitude))
}

/// Every component sampled at its own staggered location.
pub fn smooth_form(rng: &mut ChaCha8Rng, grid: &Grid, k: usize, modes: usize) -> FormField {
    let shape = FormField::zeros(grid, k);
    let comps = (0..shape.comps.len())
        .map(|c| {
            let f = SmoothField::draw(rng, grid, modes, 1.0);
            (0..grid.len()).map(|p| f.eval(&shape.location(c, p))).collect()
        })
        .collect();
    FormField { comps, ..shape }
}

pub fn smooth_doubled(rng: &mut ChaCha8Rng, grid: &Grid, k: usize, modes: usize) -> DoubledForm {
    let top = smooth_form(rng, grid, k, modes);
    let offset = smooth_form(rng, grid, k, modes);
    DoubledForm { top, offset }
}

/// Independent uniform `[-1, 1]` values per entry (not smooth).
pub fn noise_form(rng: &mut ChaCha8Rng, grid: &Grid, k: usize) -> FormField {
    let shape = FormField::zeros(grid, k);
    let comps = shape.comps.iter().map(|c| c.iter().map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    FormField { comps, ..shape }
}

pub fn noise_doubled(rng: &mut ChaCha8Rng, grid: &Grid, k: usize) -> DoubledForm {
    let top = noise_form(rng, grid, k);
    let offset = noise_form(rng, grid, k);
    DoubledForm { top, offset }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};

    #[test]
    fn same_seed_same_stream() {
        let g = build_grid(&GridSpec::periodic(&[1.0, 1.0], &[8, 8])).unwrap();
        let a = smooth_scalar(&mut rng(7), &g, 2, 1.0);
        let b = smooth_scalar(&mut rng(7), &g, 2, 1.0);
        let c = smooth_scalar(&mut rng(8), &g, 2, 1.0);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn smooth_field_is_periodic() {
        let g = build_grid(&GridSpec::periodic(&[2.0], &[16])).unwrap();
        let f = SmoothField::draw(&mut rng(1), &g, 3, 1.0);
        assert!((f.eval(&[0.3]) - f.eval(&[2.3])).abs() < 1e-12);
    }
}
