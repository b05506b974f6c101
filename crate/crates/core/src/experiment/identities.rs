//! Group law, operator identities, flat connection and curvature checks.

use std::f64::consts::{LN_2, PI, TAU};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::common::{csv, guarded, log2_ratio};
use super::{Artifact, ExperimentOutput};
use crate::calculus::{check_commutation, connection_curvature, curvature_scalar, OperatorSet, Op};
use crate::error::Result;
use crate::grid::{
    build_grid, evaluate_delta, gradient, weighted_inner_product, DeltaFamily, DeltaSpec, DoubledForm, FormField, Grid, GridSpec,
    LambdaField, Surface,
};
use crate::homothety::{act, compose_check, contraction_trace, effective_metric, vsl_speed, HomothetyMatrix, Signature};
use crate::random::{self, SmoothField};
use crate::report::{Bound, CheckRecord, VerificationSummary, CALCULUS, GRID_CORE, HOMOTHETY_GROUP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesParams {
    /// Nodes of the periodic line used for the group law.
    pub group_points: usize,
    pub pairs: usize,
    pub lambda_amplitude: f64,
    /// Side of the coarse periodic square for operator identities; the
    /// refinement step doubles it.
    pub operator_points: usize,
    pub forms: usize,
    pub flat_lambdas: usize,
    pub delta_sharpness: f64,
    pub curvature_sharpness: f64,
    /// Node counts on `[-1, 1]` for the curvature refinement.
    pub curvature_points: Vec<usize>,
}

impl Default for IdentitiesParams {
    fn default() -> Self {
        IdentitiesParams {
            group_points: 64,
            pairs: 100,
            lambda_amplitude: 0.5,
            operator_points: 32,
            forms: 20,
            flat_lambdas: 10,
            delta_sharpness: 16.0,
            curvature_sharpness: 64.0,
            curvature_points: vec![1025, 2049, 4097],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesRun {
    pub seed: u64,
    pub output: Option<String>,
    pub params: IdentitiesParams,
}

impl Default for IdentitiesRun {
    fn default() -> Self {
        IdentitiesRun { seed: 1, output: None, params: IdentitiesParams::default() }
    }
}

/// One line of the identity-check table.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityRow {
    pub check: String,
    pub grid: Vec<usize>,
    pub h: f64,
    pub residual: f64,
    pub order_estimate: Option<f64>,
}

fn torus(points: usize) -> Result<Grid> {
    build_grid(&GridSpec::periodic(&[TAU, TAU], &[points, points]))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Group law on random field pairs: composition, inverse and identity.
pub fn group_law(seed: u64, p: &IdentitiesParams) -> Result<Vec<CheckRecord>> {
    let grid = build_grid(&GridSpec::periodic(&[1.0], &[p.group_points]))?;
    let mut rng = random::rng(seed);
    let zero = LambdaField::zero(&grid);
    let (mut comp, mut inv, mut ident) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..p.pairs {
        let l1 = random::smooth_lambda(&mut rng, &grid, p.lambda_amplitude);
        let l2 = random::smooth_lambda(&mut rng, &grid, p.lambda_amplitude);
        let f = random::smooth_doubled(&mut rng, &grid, 0, 3);
        comp = comp.max(compose_check(&l1, &l2, &f)?);
        inv = inv.max(act(&l1, &act(&l1.negated(), &f)?)?.sub(&f).max_abs());
        ident = ident.max(act(&zero, &f)?.sub(&f).max_abs());
    }
    let anchor = "fiber-wise homothety obeys the group law of the scaling matrices";
    Ok(vec![
        CheckRecord::new("group composition residual", HOMOTHETY_GROUP, comp, Bound::AtMost(1e-12), anchor).criterion(1),
        CheckRecord::new("group inverse residual", HOMOTHETY_GROUP, inv, Bound::AtMost(1e-12), anchor).criterion(1),
        CheckRecord::new("group identity residual", HOMOTHETY_GROUP, ident, Bound::AtMost(1e-12), anchor).criterion(1),
    ])
}

/// Pointwise properties of the scaling matrices, metric, speed map and contraction.
pub fn homothety_properties(seed: u64) -> Result<Vec<CheckRecord>> {
    let m = HOMOTHETY_GROUP;
    let mut out = Vec::new();
    let mut worst = 0.0f64;
    let mut det = 0.0f64;
    for i in 0..25 {
        let (a, b) = (-3.0 + 0.25 * i as f64, 2.0 - 0.17 * i as f64);
        let prod = HomothetyMatrix::new(a).mul(&HomothetyMatrix::new(b));
        let direct = HomothetyMatrix::new(a + b).entries;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((prod[r][c] - direct[r][c]).abs() / direct[r][c].abs().max(1.0));
            }
        }
        det = det.max(rel_err(HomothetyMatrix::new(a).determinant(), (-a).exp()));
    }
    out.push(CheckRecord::new("matrix composition", m, worst, Bound::AtMost(1e-12), "pointwise matrix multiplication adds exponents"));
    out.push(CheckRecord::new("matrix determinant", m, det, Bound::AtMost(1e-14), "determinant equals e^-lambda"));

    let g = build_grid(&GridSpec::periodic(&[1.0], &[8]))?;
    let f = DoubledForm::new(FormField::constant(&g, 4.0), FormField::constant(&g, 2.0))?;
    let moved = act(&LambdaField::constant(&g, LN_2), &f)?;
    out.push(CheckRecord::new(
        "act at ln 2 on (4, 2)",
        m,
        moved.top.comps[0].iter().map(|v| (v - 3.0).abs()).fold(0.0, f64::max),
        Bound::AtMost(1e-15),
        "top' = e^-lambda top + (1 - e^-lambda) offset",
    ));
    let mut rng = random::rng(seed);
    let off = random::smooth_form(&mut rng, &g, 0, 2);
    let lam = random::smooth_lambda(&mut rng, &g, 2.0);
    let fixed = act(&lam, &DoubledForm::new(off.clone(), off.clone())?)?;
    out.push(CheckRecord::flag("offset is a fixed point", m, fixed.top == off, "alpha = alpha_d is invariant"));

    let x = [0.3, -1.2, 0.7, 2.0];
    let y = [1.1, 0.4, -0.5, 0.9];
    let xd = [1.0, 0.2, -0.1, 0.3];
    let sig = Signature::Lorentzian;
    let base = sig.dot(&x, &y);
    out.push(CheckRecord::new(
        "metric at lambda = 0",
        m,
        rel_err(effective_metric(0.0, &x, &y, &xd, sig)?, base),
        Bound::AtMost(1e-15),
        "the effective metric reduces to eta at lambda = 0",
    ));
    out.push(CheckRecord::new(
        "reduced metric at ln 2",
        m,
        rel_err(effective_metric(LN_2, &x, &y, &[0.0; 4], sig)?, base / 4.0),
        Bound::AtMost(1e-15),
        "with zero offset the metric is e^-2lambda eta",
    ));
    out.push(CheckRecord::new(
        "metric degenerates to the offset norm",
        m,
        (effective_metric(40.0, &x, &y, &xd, sig)? - sig.dot(&xd, &xd)).abs(),
        Bound::AtMost(1e-12),
        "for large lambda the metric tends to eta(X_d, X_d) independently of X and Y",
    ));
    let spacelike = [0.1, 1.0, 0.5, -0.3];
    let norms: Vec<f64> =
        (0..12).map(|i| effective_metric(i as f64, &spacelike, &spacelike, &[0.0; 4], sig)).collect::<Result<_>>()?;
    out.push(CheckRecord::flag(
        "metric shrinks monotonically",
        m,
        norms.windows(2).all(|w| w[1] < w[0]) && norms[11] < 1e-9,
        "with zero offset eta~(X, X) -> 0 as lambda grows",
    ));
    let musical = {
        let (t, o, e) = (x, xd, (-0.8f64).exp());
        let before: Vec<f64> = sig.flat(&t).iter().zip(sig.flat(&o)).map(|(a, b)| b + e * (a - b)).collect();
        let moved: Vec<f64> = t.iter().zip(&o).map(|(a, b)| b + e * (a - b)).collect();
        before == sig.flat(&moved)
    };
    out.push(CheckRecord::flag("act commutes with the flat map", m, musical, "the homothety and the musical isomorphism commute"));

    let c = vsl_speed(&LambdaField::constant(&g, 10f64.ln()));
    out.push(CheckRecord::new(
        "speed at ln 10",
        m,
        c.values().iter().map(|v| (v - 0.1).abs()).fold(0.0, f64::max),
        Bound::AtMost(1e-15),
        "c = e^-lambda",
    ));
    let line = build_grid(&GridSpec::bounded(&[-1.0], &[2.0], &[401]))?;
    let spec = DeltaSpec::new(DeltaFamily::Gaussian, 16.0, Surface::Point { center: vec![0.25] });
    let ld = LambdaField::from_delta(&evaluate_delta(&spec, &line)?, Some(spec))?;
    let speed = vsl_speed(&ld);
    let argmin = (0..line.len()).min_by(|&a, &b| speed.values()[a].total_cmp(&speed.values()[b])).unwrap_or(0);
    out.push(CheckRecord::new(
        "slowest point sits on the surface",
        m,
        (line.node_coord(0, argmin) - 0.25).abs(),
        Bound::AtMost(1e-12),
        "c = 1 / (1 + delta_n) is smallest on the surface",
    ));

    let alpha = random::smooth_form(&mut rng, &g, 0, 2);
    let alpha_d = random::smooth_form(&mut rng, &g, 0, 2);
    let (_, d) = contraction_trace(LN_2, &alpha, &alpha_d, 10)?;
    out.push(CheckRecord::new(
        "contraction at ln 2 over 10 steps",
        m,
        rel_err(d[10] / d[0], 2f64.powi(-10)),
        Bound::AtMost(1e-10),
        "T_lambda is a strict contraction with constant e^-lambda",
    ));
    let (_, d) = contraction_trace(1.0, &alpha, &FormField::zeros(&g, 0), 50)?;
    out.push(CheckRecord::new(
        "contraction at 1 over 50 steps",
        m,
        rel_err(d[50] / d[0], (-50f64).exp()),
        Bound::AtMost(1e-10),
        "T_lambda is a strict contraction with constant e^-lambda",
    ));
    let (_, d) = contraction_trace(0.5, &alpha_d, &alpha_d, 5)?;
    out.push(CheckRecord::flag("contraction fixed point", m, d.iter().all(|v| *v == 0.0), "the unique fixed point is alpha_d"));
    out.push(CheckRecord::flag(
        "non-positive lambda rejected",
        m,
        contraction_trace(0.0, &alpha, &alpha_d, 1).is_err(),
        "the map contracts only for lambda > 0",
    ));
    Ok(out)
}

/// Grid construction, delta normalization, inner product and stencils.
pub fn grid_properties(seed: u64) -> Result<Vec<CheckRecord>> {
    let m = GRID_CORE;
    let mut out = Vec::new();
    let b = build_grid(&GridSpec::bounded(&[0.0], &[2.0], &[5]))?;
    let p = build_grid(&GridSpec::periodic(&[2.0], &[4]))?;
    out.push(CheckRecord::flag("grid spacing rules", m, b.spacing[0] == 0.5 && p.spacing[0] == 0.5, "h = L/(N-1) bounded, L/N periodic"));
    let mut radial2 = GridSpec::radial(0.1, 1.0, 10);
    radial2.extent.push(1.0);
    radial2.points.push(10);
    radial2.topology.push(crate::grid::Topology::Bounded);
    radial2.origin.push(0.0);
    out.push(CheckRecord::flag("two-axis radial grid rejected", m, build_grid(&radial2).is_err(), "radial grids are one-dimensional"));

    let line = build_grid(&GridSpec::bounded(&[-1.0], &[2.0], &[2049]))?;
    let w = line.quadrature_weights();
    for family in [DeltaFamily::Gaussian, DeltaFamily::Bump] {
        let n = 16.0;
        let d = evaluate_delta(&DeltaSpec::new(family, n, Surface::Point { center: vec![0.0] }), &line)?;
        let mass: f64 = d.values().iter().zip(&w).map(|(a, b)| a * b).sum();
        out.push(CheckRecord::new(
            format!("{family:?} delta mass at n = 16").to_lowercase(),
            m,
            (mass - 1.0).abs(),
            Bound::AtMost(2.0 / n),
            "regularized delta integrates to one across the surface",
        ));
    }
    let peak = |n: f64| -> Result<f64> {
        let d = evaluate_delta(&DeltaSpec::new(DeltaFamily::Gaussian, n, Surface::Point { center: vec![0.0] }), &line)?;
        Ok(d.max_abs())
    };
    let (p16, p32) = (peak(16.0)?, peak(32.0)?);
    out.push(CheckRecord::new(
        "gaussian peak doubles with n",
        m,
        rel_err(p32 / p16, 2.0).max(rel_err(p16, 16.0 / (2.0 * PI).sqrt())),
        Bound::AtMost(1e-12),
        "gaussian peak n / sqrt(2 pi)",
    ));
    let far = evaluate_delta(&DeltaSpec::new(DeltaFamily::Gaussian, 64.0, Surface::Point { center: vec![-0.5] }), &line)?;
    let tail = (0..line.len()).filter(|&i| line.node_coord(0, i) > 0.0).map(|i| far.values()[i]).fold(0.0, f64::max);
    out.push(CheckRecord::new("gaussian tail", m, tail, Bound::AtMost(1e-12), "delta_n vanishes far from the surface"));

    let sq = build_grid(&GridSpec::periodic(&[1.0, 1.0], &[16, 16]))?;
    let ones = FormField::constant(&sq, 1.0);
    out.push(CheckRecord::new(
        "unweighted norm of one",
        m,
        (weighted_inner_product(&ones, &ones, &LambdaField::zero(&sq))? - 1.0).abs(),
        Bound::AtMost(1e-14),
        "lambda = 0 gives the plain L2 product",
    ));
    let mut rng = random::rng(seed);
    let (mut sym, mut pos) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let lam = random::smooth_lambda(&mut rng, &sq, 2.0);
        let a = random::noise_form(&mut rng, &sq, 1);
        let b = random::noise_form(&mut rng, &sq, 1);
        let ab = weighted_inner_product(&a, &b, &lam)?;
        let ba = weighted_inner_product(&b, &a, &lam)?;
        sym = sym.max((ab - ba).abs() / (weighted_inner_product(&a, &a, &lam)? * weighted_inner_product(&b, &b, &lam)?).sqrt());
        pos = pos.min(weighted_inner_product(&a, &a, &lam)?);
    }
    out.push(CheckRecord::new("inner product symmetry", m, sym, Bound::AtMost(1e-14), "the weighted product is symmetric"));
    out.push(CheckRecord::new("inner product positivity", m, pos, Bound::AtLeast(f64::MIN_POSITIVE), "weight e^-2lambda > 0"));

    let rect = build_grid(&GridSpec::bounded(&[-1.0, 0.5], &[2.0, 3.0], &[21, 31]))?;
    let lin: Vec<f64> = (0..rect.len()).map(|p| {
        let x = rect.coords(p);
        0.7 + 1.3 * x[0] - 2.1 * x[1]
    }).collect();
    let gr = gradient(&rect, &lin);
    let err = (0..rect.len()).filter(|&p| !rect.is_boundary(p)).map(|p| (gr[0][p] - 1.3).abs().max((gr[1][p] + 2.1).abs())).fold(0.0, f64::max);
    out.push(CheckRecord::new("gradient of a linear field", m, err, Bound::AtMost(1e-12), "central differences are exact on linear data"));
    let lam = random::smooth_lambda(&mut rng, &sq, 1.0);
    out.push(CheckRecord::flag("lambda cache is never stale", m, lam.is_consistent(), "re-deriving the stencils reproduces the cache"));
    Ok(out)
}

/// Nilpotency, adjointness and commutation on a periodic square, with the
/// literal-family refinement ratios. Returns the table rows as well.
pub fn operator_identities(seed: u64, p: &IdentitiesParams) -> Result<(Vec<CheckRecord>, Vec<IdentityRow>)> {
    let m = CALCULUS;
    let coarse = torus(p.operator_points)?;
    let fine = torus(2 * p.operator_points)?;
    let h = coarse.spacing[0];
    let lam_field = SmoothField::draw(&mut random::rng(seed), &coarse, 2, p.lambda_amplitude);
    let lam_on = |g: &Grid| LambdaField::from_fn(g, |x| lam_field.eval(x));
    let ops = OperatorSet::new(&lam_on(&coarse))?;
    let mut rng = random::rng(seed.wrapping_add(1));
    let (mut dd, mut tt, mut adj, mut sym) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut noisy = 0.0f64;
    let stencil = 1.0 / (h * h);
    for _ in 0..p.forms {
        let f0 = random::smooth_doubled(&mut rng, &coarse, 0, 3);
        dd = dd.max(ops.norm(&ops.d_hat(&ops.d_hat(&f0)?)?) / ops.norm(&f0));
        let f2 = random::smooth_doubled(&mut rng, &coarse, 2, 3);
        tt = tt.max(ops.norm(&ops.delta_hat(&ops.delta_hat(&f2)?)?) / ops.norm(&f2));
        let n0 = random::noise_doubled(&mut rng, &coarse, 0);
        noisy = noisy.max(ops.norm(&ops.d_hat(&ops.d_hat(&n0)?)?) / (stencil * ops.norm(&n0)));
        let n2 = random::noise_doubled(&mut rng, &coarse, 2);
        noisy = noisy.max(ops.norm(&ops.delta_hat(&ops.delta_hat(&n2)?)?) / (stencil * ops.norm(&n2)));
        let a = random::noise_doubled(&mut rng, &coarse, 1);
        let b = random::noise_doubled(&mut rng, &coarse, 2);
        let lhs = ops.inner_forms(&ops.d_hat(&a)?, &b);
        let rhs = ops.inner_forms(&a, &ops.delta_hat(&b)?);
        adj = adj.max((lhs - rhs).abs() / (ops.norm(&a) * ops.norm(&b)));
        let c = random::noise_doubled(&mut rng, &coarse, 1);
        let l1 = ops.inner_forms(&ops.laplacian_hat(&a)?, &c);
        let l2 = ops.inner_forms(&a, &ops.laplacian_hat(&c)?);
        sym = sym.max((l1 - l2).abs() / (ops.norm(&ops.laplacian_hat(&a)?) * ops.norm(&c)).max(f64::MIN_POSITIVE));
    }
    let mut out = vec![
        CheckRecord::new("d^ d^ vanishes", m, dd, Bound::AtMost(1e-12), "d^ is nilpotent").criterion(2),
        CheckRecord::new("delta^ delta^ vanishes", m, tt, Bound::AtMost(1e-12), "delta^ is nilpotent").criterion(2),
        CheckRecord::new("adjointness defect", m, adj, Bound::AtMost(1e-12), "delta^ is the weighted adjoint of d^").criterion(2),
        CheckRecord::new("nilpotency on noise, relative to the stencil scale", m, noisy, Bound::AtMost(1e-14), "d^ and delta^ are nilpotent"),
        CheckRecord::new("Laplacian symmetry", m, sym, Bound::AtMost(1e-12), "Lap^ = delta^ d^ + d^ delta^ is self-adjoint"),
    ];
    let mut rows = vec![
        IdentityRow { check: "d_hat_nilpotent".into(), grid: coarse.points.clone(), h, residual: dd, order_estimate: None },
        IdentityRow { check: "delta_hat_nilpotent".into(), grid: coarse.points.clone(), h, residual: tt, order_estimate: None },
        IdentityRow { check: "adjointness".into(), grid: coarse.points.clone(), h, residual: adj, order_estimate: None },
    ];

    let cases = [(0, Op::D), (1, Op::D), (1, Op::Delta), (2, Op::Delta), (0, Op::Laplacian), (1, Op::Laplacian), (2, Op::Laplacian), (1, Op::Star)];
    let fine_ops = OperatorSet::new(&lam_on(&fine))?;
    for (k, op) in cases {
        let form_seed = seed.wrapping_add(100 + k as u64);
        let on = |g: &Grid| random::smooth_doubled(&mut random::rng(form_seed), g, k, 2);
        let rc = check_commutation(&ops, &on(&coarse), op)?;
        let rf = check_commutation(&fine_ops, &on(&fine), op)?;
        let label = format!("{op:?} on {k}-forms").to_lowercase();
        if op == Op::Star {
            let r = rc.structural.max(rc.literal);
            out.push(CheckRecord::new("star commutation", m, r, Bound::AtMost(1e-12), "the block star commutes with the homothety").criterion(2));
            rows.push(IdentityRow { check: "star_commutation".into(), grid: coarse.points.clone(), h, residual: r, order_estimate: None });
            continue;
        }
        out.push(CheckRecord::new(
            format!("structural commutation, {label}"),
            m,
            rc.structural / rc.scale.max(f64::MIN_POSITIVE),
            Bound::AtMost(1e-12),
            "the homothety commutes with the block operators",
        ));
        let ratio = rc.literal / rf.literal;
        out.push(
            CheckRecord::new(
                format!("literal commutation refinement ratio, {label}"),
                m,
                ratio,
                Bound::Within([3.2, 4.8]),
                "the pointwise-coupled operators commute up to a second-order Leibniz defect",
            )
            .criterion(2),
        );
        let name = format!("literal_{}_k{k}", format!("{op:?}").to_lowercase());
        rows.push(IdentityRow { check: name.clone(), grid: coarse.points.clone(), h, residual: rc.literal, order_estimate: None });
        rows.push(IdentityRow {
            check: name,
            grid: fine.points.clone(),
            h: fine.spacing[0],
            residual: rf.literal,
            order_estimate: Some(log2_ratio(rc.literal, rf.literal)),
        });
    }

    let zero_ops = OperatorSet::new(&LambdaField::zero(&coarse))?;
    let f = random::noise_doubled(&mut rng, &coarse, 1);
    let hat = zero_ops.d_hat(&f)?;
    let plain = zero_ops.plain(&f, Op::D)?;
    out.push(CheckRecord::new(
        "d^ at lambda = 0 is plain d",
        m,
        hat.sub(&plain).max_abs(),
        Bound::AtMost(1e-12),
        "with d lambda = 0 the block operator is diagonal",
    ));
    let t = random::noise_form(&mut rng, &coarse, 1);
    let same = DoubledForm::new(t.clone(), t)?;
    let img = ops.d_hat(&same)?;
    out.push(CheckRecord::new(
        "d^ on invariant forms",
        m,
        img.top.sub(&img.offset).max_abs(),
        Bound::AtMost(1e-12),
        "top = offset makes the coupling vanish",
    ));
    Ok((out, rows))
}

/// Discrete curl of the discrete gradient for random and delta-built lambda.
pub fn flat_connection(seed: u64, p: &IdentitiesParams) -> Result<Vec<CheckRecord>> {
    let g = torus(p.operator_points)?;
    let mut rng = random::rng(seed.wrapping_add(7));
    let mut worst = 0.0f64;
    for _ in 0..p.flat_lambdas {
        worst = worst.max(connection_curvature(&random::smooth_lambda(&mut rng, &g, p.lambda_amplitude))?);
    }
    let spec = DeltaSpec::new(DeltaFamily::Gaussian, p.delta_sharpness, Surface::Sphere { center: vec![PI, PI], radius: 1.0 });
    let ld = LambdaField::from_delta(&evaluate_delta(&spec, &g)?, Some(spec))?;
    let anchor = "the connection d lambda is flat: d(d lambda) = 0";
    Ok(vec![
        CheckRecord::new("flat connection, random lambda", CALCULUS, worst, Bound::AtMost(1e-12), anchor).criterion(4),
        CheckRecord::new("flat connection, delta lambda", CALCULUS, connection_curvature(&ld)?, Bound::AtMost(1e-12), anchor).criterion(4),
        CheckRecord::new(
            "flat connection, zero lambda",
            CALCULUS,
            connection_curvature(&LambdaField::zero(&g))?,
            Bound::Equals(0.0),
            anchor,
        ),
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureRung {
    pub points: usize,
    pub h: f64,
    pub max_abs: f64,
}

/// Sup of `|v|` on a uniform line: the node maximum refined by the peak of
/// the quartic through the five nearest nodes, so that the estimate is not
/// limited by where the nodes happen to fall.
pub fn interpolated_peak(v: &[f64]) -> f64 {
    let Some(i) = (0..v.len()).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())) else {
        return 0.0;
    };
    if i < 2 || i + 2 >= v.len() {
        return v[i].abs();
    }
    let f: Vec<f64> = v[i - 2..=i + 2].iter().map(|x| x.abs()).collect();
    let c1 = (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / 12.0;
    let c2 = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / 24.0;
    let c3 = (-f[0] + 2.0 * f[1] - 2.0 * f[3] + f[4]) / 12.0;
    let c4 = (f[0] - 4.0 * f[1] + 6.0 * f[2] - 4.0 * f[3] + f[4]) / 24.0;
    let poly = |t: f64| f[2] + t * (c1 + t * (c2 + t * (c3 + t * c4)));
    let slope = |t: f64| c1 + t * (2.0 * c2 + t * (3.0 * c3 + t * 4.0 * c4));
    let bend = |t: f64| 2.0 * c2 + t * (6.0 * c3 + t * 12.0 * c4);
    let mut t = 0.0f64;
    for _ in 0..50 {
        let step = slope(t) / bend(t);
        if !step.is_finite() {
            break;
        }
        t = (t - step).clamp(-1.0, 1.0);
        if step.abs() < 1e-14 {
            break;
        }
    }
    poly(t).max(f[2])
}

/// Sup of the curvature scalar for `ln(1 + delta_n)` under refinement.
pub fn curvature_refinement(p: &IdentitiesParams) -> Result<(Vec<CheckRecord>, Vec<CurvatureRung>)> {
    let m = CALCULUS;
    let mut rungs = Vec::new();
    for &n in &p.curvature_points {
        let g = build_grid(&GridSpec::bounded(&[-1.0], &[2.0], &[n]))?;
        let spec = DeltaSpec::new(DeltaFamily::Gaussian, p.curvature_sharpness, Surface::Point { center: vec![0.0] });
        let lam = LambdaField::from_delta(&evaluate_delta(&spec, &g)?, Some(spec))?;
        rungs.push(CurvatureRung { points: n, h: g.spacing[0], max_abs: interpolated_peak(curvature_scalar(&lam).values()) });
    }
    let mut out = Vec::new();
    let changes: Vec<f64> = rungs.windows(2).map(|w| (w[1].max_abs - w[0].max_abs).abs()).collect();
    for (i, w) in changes.windows(2).enumerate() {
        out.push(
            CheckRecord::new(
                format!("curvature scalar change ratio {}", i + 1),
                m,
                w[1] / w[0],
                Bound::AtMost(0.5),
                "curvature scalars stay finite for lambda = ln(1 + delta_n)",
            )
            .criterion(5),
        );
    }
    if changes.len() < 2 {
        out.push(CheckRecord::flag("curvature refinement has three grids", m, false, "refinement needs three grids"));
    }
    let bounded = build_grid(&GridSpec::bounded(&[0.0], &[1.0], &[33]))?;
    let linear = curvature_scalar(&LambdaField::from_fn(&bounded, |x| 0.5 * x[0]));
    let spread = linear.values().iter().map(|v| (v - 1.5).abs()).fold(0.0, f64::max);
    out.push(CheckRecord::new("curvature of linear lambda", m, spread, Bound::AtMost(1e-12), "6 |grad lambda|^2 for linear lambda"));
    out.push(CheckRecord::new(
        "curvature of zero lambda",
        m,
        curvature_scalar(&LambdaField::zero(&bounded)).max_abs(),
        Bound::Equals(0.0),
        "zero lambda has zero curvature",
    ));
    Ok((out, rungs))
}

pub fn run(cfg: &IdentitiesRun) -> Result<ExperimentOutput> {
    let p = &cfg.params;
    if p.group_points < 3 || p.operator_points < 3 || p.pairs == 0 || p.forms == 0 {
        return Err(crate::Error::Config("identities needs at least 3 points per axis, one pair and one form".into()));
    }
    let mut records = guarded("group law", HOMOTHETY_GROUP, "group law", || group_law(cfg.seed, p));
    records.extend(guarded("homothety properties", HOMOTHETY_GROUP, "scaling matrices", || homothety_properties(cfg.seed)));
    records.extend(guarded("grid properties", GRID_CORE, "grids and deltas", || grid_properties(cfg.seed)));
    let mut rows = Vec::new();
    records.extend(guarded("operator identities", CALCULUS, "block operators", || {
        let (r, t) = operator_identities(cfg.seed, p)?;
        rows = t;
        Ok(r)
    }));
    records.extend(guarded("flat connection", CALCULUS, "flat connection", || flat_connection(cfg.seed, p)));
    let mut rungs = Vec::new();
    records.extend(guarded("curvature refinement", CALCULUS, "curvature scalar", || {
        let (r, c) = curvature_refinement(p)?;
        rungs = c;
        Ok(r)
    }));
    let curvature_csv = csv(&["points", "h", "max_abs"], rungs.iter().map(|r| vec![r.points as f64, r.h, r.max_abs]));
    let report: Value = json!({ "identity_checks": rows, "curvature": rungs });
    Ok(ExperimentOutput::new(
        "identities",
        VerificationSummary::from_records(records),
        report,
        vec![Artifact::new("curvature.csv", curvature_csv)],
    ))
}
