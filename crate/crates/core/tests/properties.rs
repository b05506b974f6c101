use std::f64::consts::PI;

use homothetic::calculus::OperatorSet;
use homothetic::em::{conservation_residual, field_tensor, lorentz_force, plain_divergence, GaugeState};
use homothetic::grid::{build_grid, DeltaFamily, DeltaSpec, DoubledForm, FormField, Grid, GridSpec, LambdaField, Surface};
use homothetic::homothety::{act, effective_metric, Signature};
use homothetic::linalg::Banded;
use homothetic::penalty::{dtn_extract, solve, Mode, OuterBc, PenaltyProblem};
use homothetic::point_charge::field_energy;
use homothetic::random::{noise_doubled, rng, smooth_lambda, smooth_scalar};
use homothetic::sparse::Csr;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn line(n: usize) -> Grid {
    build_grid(&GridSpec::periodic(&[1.0], &[n])).unwrap()
}

fn square(n: usize) -> Grid {
    build_grid(&GridSpec::periodic(&[1.0, 1.0], &[n, n])).unwrap()
}

fn doubled(g: &Grid, top: &[f64], off: &[f64]) -> DoubledForm {
    DoubledForm::new(FormField::scalar(g, top.to_vec()), FormField::scalar(g, off.to_vec())).unwrap()
}

fn minkowski(x: &[f64], y: &[f64], sig: Signature) -> f64 {
    let first = if sig == Signature::Lorentzian { -1.0 } else { 1.0 };
    first * x[0] * y[0] + x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum::<f64>()
}

fn samples(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

fn vec4() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-3.0..3.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn act_matches_closed_form(l in samples(16, -4.0, 4.0), top in samples(16, -5.0, 5.0), off in samples(16, -5.0, 5.0)) {
        let g = line(16);
        let out = act(&LambdaField::from_values(&g, l.clone()), &doubled(&g, &top, &off)).unwrap();
        for i in 0..16 {
            let expect = off[i] + (-l[i]).exp() * (top[i] - off[i]);
            prop_assert!((out.top.values()[i] - expect).abs() <= 1e-13 * (1.0 + expect.abs()));
            prop_assert_eq!(out.offset.values()[i].to_bits(), off[i].to_bits());
        }
    }

    #[test]
    fn act_composes_and_inverts(a in samples(16, -3.0, 3.0), b in samples(16, -3.0, 3.0), top in samples(16, -5.0, 5.0), off in samples(16, -5.0, 5.0)) {
        let g = line(16);
        let (la, lb) = (LambdaField::from_values(&g, a.clone()), LambdaField::from_values(&g, b.clone()));
        let f = doubled(&g, &top, &off);
        let two = act(&la, &act(&lb, &f).unwrap()).unwrap();
        let sum = LambdaField::from_values(&g, a.iter().zip(&b).map(|(x, y)| x + y).collect());
        let one = act(&sum, &f).unwrap();
        prop_assert!(two.sub(&one).max_abs() <= 1e-12 * (1.0 + f.max_abs()));
        let back = act(&LambdaField::from_values(&g, a.iter().map(|x| -x).collect()), &act(&la, &f).unwrap()).unwrap();
        prop_assert!(back.sub(&f).max_abs() <= 1e-12 * (1.0 + f.max_abs()));
    }

    #[test]
    fn offset_is_a_fixed_point(l in samples(16, -30.0, 30.0), off in samples(16, -5.0, 5.0)) {
        let g = line(16);
        let out = act(&LambdaField::from_values(&g, l), &doubled(&g, &off, &off)).unwrap();
        prop_assert_eq!(out.top.values(), &off[..]);
    }

    #[test]
    fn metric_is_the_pullback_of_the_flat_one(lam in -3.0..3.0f64, x in vec4(), y in vec4(), xd in vec4(), lorentz in any::<bool>()) {
        let sig = if lorentz { Signature::Lorentzian } else { Signature::Euclidean };
        let (e, g) = ((-lam).exp(), 1.0 - (-lam).exp());
        let xs: Vec<f64> = (0..4).map(|i| e * x[i] + g * xd[i]).collect();
        let ys: Vec<f64> = (0..4).map(|i| e * y[i] + g * xd[i]).collect();
        let expect = minkowski(&xs, &ys, sig);
        let got = effective_metric(lam, &x, &y, &xd, sig).unwrap();
        prop_assert!((got - expect).abs() <= 1e-11 * (1.0 + expect.abs()));
    }

    #[test]
    fn lorentz_force_is_classical_at_zero(e in prop::array::uniform3(-2.0..2.0f64), b in prop::array::uniform3(-2.0..2.0f64), v in prop::array::uniform3(-0.5..0.5f64), q in -3.0..3.0f64) {
        let gamma = 1.0 / (1.0 - v.iter().map(|c| c * c).sum::<f64>()).sqrt();
        let u = [gamma, gamma * v[0], gamma * v[1], gamma * v[2]];
        let f = lorentz_force(0.0, &field_tensor(e, b), &u, q, Signature::Lorentzian);
        let cross = [v[1] * b[2] - v[2] * b[1], v[2] * b[0] - v[0] * b[2], v[0] * b[1] - v[1] * b[0]];
        for i in 0..3 {
            let expect = q * gamma * (e[i] + cross[i]);
            prop_assert!((f[i + 1] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
        let power = q * gamma * (0..3).map(|i| e[i] * v[i]).sum::<f64>();
        prop_assert!((f[0] - power).abs() <= 1e-12 * (1.0 + power.abs()));
        prop_assert!(minkowski(&f, &u, Signature::Lorentzian).abs() <= 1e-11 * (1.0 + gamma * gamma));
    }

    #[test]
    fn lorentz_force_scales_by_decay(lam in -2.0..2.0f64, e in prop::array::uniform3(-2.0..2.0f64), b in prop::array::uniform3(-2.0..2.0f64), u in vec4()) {
        let f0 = lorentz_force(0.0, &field_tensor(e, b), &u, 1.5, Signature::Lorentzian);
        let f = lorentz_force(lam, &field_tensor(e, b), &u, 1.5, Signature::Lorentzian);
        for i in 0..4 {
            prop_assert!((f[i] - (-lam).exp() * f0[i]).abs() <= 1e-13 * (1.0 + f0[i].abs()));
        }
    }

    #[test]
    fn laplacian_is_nonnegative(seed in 0u64..1000, k in 0usize..3) {
        let g = square(10);
        let mut r = rng(seed);
        let ops = OperatorSet::new(&smooth_lambda(&mut r, &g, 0.5)).unwrap();
        let f = noise_doubled(&mut r, &g, k);
        let lf = ops.laplacian_hat(&f).unwrap();
        let q = ops.inner_forms(&f, &lf);
        prop_assert!(q >= -1e-10 * ops.inner_forms(&f, &f));
    }

    #[test]
    fn identified_offsets_reduce_to_the_divergence(seed in 0u64..1000) {
        let g = square(16);
        let mut r = rng(seed);
        let lambda = smooth_lambda(&mut r, &g, 1.0);
        let a: Vec<Vec<f64>> = (0..2).map(|_| smooth_scalar(&mut r, &g, 3, 1.0)).collect();
        let phi = smooth_scalar(&mut r, &g, 3, 1.0);
        let res = conservation_residual(&GaugeState::identified(&g, a.clone(), phi).unwrap(), &lambda).unwrap();
        let div = plain_divergence(&g, &a);
        prop_assert!(res.iter().zip(&div).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn banded_lu_matches_dense_lu(seed in 0u64..500, n in 4usize..24, kl in 0usize..3, ku in 0usize..3) {
        let vals = smooth_scalar(&mut rng(seed), &line(n * n), 6, 1.0);
        let mut band = Banded::new(n, kl, ku);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                let v = vals[i * n + j] + if i == j { 4.0 } else { 0.0 };
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = band.factor().unwrap().solve(&rhs);
        let expect = dense.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for i in 0..n {
            prop_assert!((x[i] - expect[i]).abs() <= 1e-10 * (1.0 + expect[i].abs()));
        }
    }

    #[test]
    fn csr_products_match_dense(trips in prop::collection::vec((0usize..7, 0usize..5, -2.0..2.0f64), 0..30), other in prop::collection::vec((0usize..5, 0usize..6, -2.0..2.0f64), 0..30)) {
        let a = Csr::from_triplets(7, 5, &trips);
        let b = Csr::from_triplets(5, 6, &other);
        let mut da = DMatrix::<f64>::zeros(7, 5);
        for (i, j, v) in &trips {
            da[(*i, *j)] += v;
        }
        let mut db = DMatrix::<f64>::zeros(5, 6);
        for (i, j, v) in &other {
            db[(*i, *j)] += v;
        }
        prop_assert!((a.matmul(&b).to_dense() - &da * &db).abs().max() <= 1e-12);
        prop_assert!((a.transpose().to_dense() - da.transpose()).abs().max() <= 1e-15);
        let x: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let y = DVector::from_vec(a.matvec(&x));
        prop_assert!((y - &da * DVector::from_vec(x)).abs().max() <= 1e-12);
    }
}

#[test]
fn radial_energy_of_coulomb_potential() {
    let g = build_grid(&GridSpec::radial(0.1, 2.0, 4001)).unwrap();
    let c = 0.8;
    let phi = FormField::from_fn(&g, 0, |_, x| c / x[0]);
    for (a, b) in [(0.2, 1.5), (0.25, 1.9), (0.1234, 0.9876)] {
        let exact = 2.0 * PI * c * c * (1.0 / a - 1.0 / b);
        let got = field_energy(&phi, a, b).unwrap();
        assert!((got - exact).abs() <= 1e-4 * exact, "[{a}, {b}]: {got} vs {exact}");
    }
    assert!(field_energy(&phi, 0.05, 1.0).is_err());
    assert!(field_energy(&phi, 1.0, 0.5).is_err());
}

#[test]
fn trace_of_an_affine_solution() {
    let g = build_grid(&GridSpec::bounded(&[-1.0], &[2.0], &[257])).unwrap();
    let (c0, c1) = (0.4, -1.3);
    let target = FormField::from_fn(&g, 0, |_, x| c0 + c1 * x[0]);
    let delta = DeltaSpec::new(DeltaFamily::Gaussian, 16.0, Surface::Point { center: vec![0.3] });
    for mode in [Mode::Combined, Mode::DirichletPenalty] {
        let prob = PenaltyProblem::new(delta.clone(), target.clone(), OuterBc::ends(c0 - c1, c0 + c1), mode).unwrap();
        let rep = solve(&prob).unwrap();
        let t = dtn_extract(&rep, &delta).unwrap();
        assert!((t.value - (c0 + 0.3 * c1)).abs() < 1e-8, "{mode:?}: value {}", t.value);
        assert!((t.normal_derivative - c1).abs() < 1e-7, "{mode:?}: derivative {}", t.normal_derivative);
    }
}
