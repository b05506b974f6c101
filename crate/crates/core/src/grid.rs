//! Structured grids, discrete forms, regularized deltas and the log-delta
//! gauge field.
//!
//! Node `i` on axis `a` sits at `origin[a] + i*h[a]`. Flat indices are
//! row-major with axis 0 slowest. Forms of degree `k > 0` use a staggered
//! layout: a primal component with axis set `S` lives at the node shifted
//! by `h/2` along every axis in `S`; a dual component `T` lives where the
//! primal component `T^c` lives, so the Hodge star is pointwise.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Periodic,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoordKind {
    #[default]
    Cartesian,
    Radial1d,
}

/// Parameters for [`build_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
    pub topology: Vec<Topology>,
    #[serde(default)]
    pub coord: CoordKind,
    /// Coordinate of node 0 per axis; the inner radius for radial grids.
    #[serde(default)]
    pub origin: Vec<f64>,
}

impl GridSpec {
    pub fn periodic(extent: &[f64], points: &[usize]) -> Self {
        GridSpec {
            extent: extent.to_vec(),
            points: points.to_vec(),
            topology: vec![Topology::Periodic; points.len()],
            coord: CoordKind::Cartesian,
            origin: vec![0.0; points.len()],
        }
    }

    pub fn bounded(origin: &[f64], extent: &[f64], points: &[usize]) -> Self {
        GridSpec {
            extent: extent.to_vec(),
            points: points.to_vec(),
            topology: vec![Topology::Bounded; points.len()],
            coord: CoordKind::Cartesian,
            origin: origin.to_vec(),
        }
    }

    pub fn radial(r_min: f64, r_max: f64, points: usize) -> Self {
        GridSpec {
            extent: vec![r_max - r_min],
            points: vec![points],
            topology: vec![Topology::Bounded],
            coord: CoordKind::Radial1d,
            origin: vec![r_min],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub dim: usize,
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
    pub topology: Vec<Topology>,
    pub coord: CoordKind,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    #[serde(skip)]
    strides: Vec<usize>,
}

/// Validate a [`GridSpec`] and derive spacings.
pub fn build_grid(spec: &GridSpec) -> Result<Grid> {
    let dim = spec.points.len();
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
    }
    if spec.extent.len() != dim || spec.topology.len() != dim {
        return Err(Error::InvalidGrid("extent/points/topology lengths differ".into()));
    }
    let origin = if spec.origin.is_empty() { vec![0.0; dim] } else { spec.origin.clone() };
    if origin.len() != dim {
        return Err(Error::InvalidGrid("origin length differs from dimension".into()));
    }
    for a in 0..dim {
        if !(spec.extent[a] > 0.0) || !spec.extent[a].is_finite() {
            return Err(Error::InvalidGrid(format!("extent on axis {a} must be positive, got {}", spec.extent[a])));
        }
        if spec.points[a] < 3 {
            return Err(Error::InvalidGrid(format!("axis {a} needs at least 3 points, got {}", spec.points[a])));
        }
        if !origin[a].is_finite() {
            return Err(Error::InvalidGrid(format!("origin on axis {a} is not finite")));
        }
    }
    if spec.coord == CoordKind::Radial1d {
        if dim != 1 {
            return Err(Error::InvalidGrid(format!("radial grids are one-dimensional, got dim {dim}")));
        }
        if !(origin[0] > 0.0) {
            return Err(Error::InvalidGrid("radial grid needs a positive inner radius".into()));
        }
        if spec.topology[0] != Topology::Bounded {
            return Err(Error::InvalidGrid("radial grid must be bounded".into()));
        }
    }
    let spacing = (0..dim)
        .map(|a| match spec.topology[a] {
            Topology::Periodic => spec.extent[a] / spec.points[a] as f64,
            Topology::Bounded => spec.extent[a] / (spec.points[a] - 1) as f64,
        })
        .collect();
    let mut strides = vec![1; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * spec.points[a + 1];
    }
    Ok(Grid {
        dim,
        extent: spec.extent.clone(),
        points: spec.points.clone(),
        topology: spec.topology.clone(),
        coord: spec.coord,
        origin,
        spacing,
        strides,
    })
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_periodic(&self) -> bool {
        self.topology.iter().all(|t| *t == Topology::Periodic)
    }

    pub fn is_radial(&self) -> bool {
        self.coord == CoordKind::Radial1d
    }

    pub fn index_on(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.points[axis]
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unravel(&self, flat: usize) -> Vec<usize> {
        (0..self.dim).map(|a| self.index_on(flat, a)).collect()
    }

    /// Neighbour `flat + delta*e_axis`; wraps on periodic axes, `None`
    /// past a bounded edge.
    pub fn shift(&self, flat: usize, axis: usize, delta: isize) -> Option<usize> {
        let n = self.points[axis] as isize;
        let i = self.index_on(flat, axis) as isize;
        let j = i + delta;
        let j = match self.topology[axis] {
            Topology::Periodic => j.rem_euclid(n),
            Topology::Bounded => {
                if j < 0 || j >= n {
                    return None;
                }
                j
            }
        };
        Some((flat as isize + (j - i) * self.strides[axis] as isize) as usize)
    }

    /// Shift that clamps at bounded edges.
    pub fn shift_clamped(&self, flat: usize, axis: usize, delta: isize) -> usize {
        self.shift(flat, axis, delta).unwrap_or(flat)
    }

    pub fn node_coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        (0..self.dim).map(|a| self.node_coord(a, self.index_on(flat, a))).collect()
    }

    /// Coordinates of every node along one axis.
    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis]).map(|i| self.node_coord(axis, i)).collect()
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        (0..self.dim).any(|a| {
            self.topology[a] == Topology::Bounded && {
                let i = self.index_on(flat, a);
                i == 0 || i + 1 == self.points[a]
            }
        })
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Second-order quadrature weights: trapezoid on bounded axes, uniform
    /// on periodic ones, with the `4 pi r^2` shell factor on radial grids.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|p| {
                let mut w = 1.0;
                for a in 0..self.dim {
                    w *= self.spacing[a];
                    if self.topology[a] == Topology::Bounded {
                        let i = self.index_on(p, a);
                        if i == 0 || i + 1 == self.points[a] {
                            w *= 0.5;
                        }
                    }
                }
                if self.is_radial() {
                    let r = self.node_coord(0, p);
                    w *= 4.0 * std::f64::consts::PI * r * r;
                }
                w
            })
            .collect()
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self == other
    }
}

/// Axis subsets of size `k` as bitmasks, in lexicographic order of their
/// sorted axis lists.
pub fn subsets(dim: usize, k: usize) -> Vec<u8> {
    let mut out: Vec<u8> = (0u8..(1u8 << dim)).filter(|m| m.count_ones() as usize == k).collect();
    out.sort_by_key(|m| (0..dim).filter(|a| m & (1 << a) != 0).collect::<Vec<_>>());
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// `(-1)^{#{b in mask : b < axis}}`.
pub fn insertion_sign(mask: u8, axis: usize) -> f64 {
    let below = (mask & ((1u8 << axis) - 1)).count_ones();
    if below.is_multiple_of(2) { 1.0 } else { -1.0 }
}

/// Sign of the permutation that sorts the concatenation `(S, S^c)`.
pub fn complement_sign(dim: usize, mask: u8) -> f64 {
    let mut inversions = 0;
    for a in 0..dim {
        if mask & (1 << a) == 0 {
            inversions += (mask >> a).count_ones();
        }
    }
    if inversions % 2 == 0 { 1.0 } else { -1.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Primal,
    Dual,
}

/// A discrete k-form: one coefficient array per axis subset.
#[derive(Debug, Clone, PartialEq)]
pub struct FormField {
    pub k: usize,
    pub grid: Grid,
    pub layout: Layout,
    pub comps: Vec<Vec<f64>>,
}

impl FormField {
    pub fn zeros(grid: &Grid, k: usize) -> Self {
        let ncomp = binomial(grid.dim, k);
        FormField { k, grid: grid.clone(), layout: Layout::Primal, comps: vec![vec![0.0; grid.len()]; ncomp] }
    }

    pub fn scalar(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "scalar field length");
        FormField { k: 0, grid: grid.clone(), layout: Layout::Primal, comps: vec![values] }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self::scalar(grid, vec![value; grid.len()])
    }

    pub fn from_components(grid: &Grid, k: usize, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != binomial(grid.dim, k) {
            return Err(Error::ShapeMismatch(format!(
                "{}-form on a {}D grid needs {} components, got {}",
                k,
                grid.dim,
                binomial(grid.dim, k),
                comps.len()
            )));
        }
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::ShapeMismatch("component length differs from grid size".into()));
        }
        Ok(FormField { k, grid: grid.clone(), layout: Layout::Primal, comps })
    }

    /// Sample `f(component, location)` at every component location.
    pub fn from_fn(grid: &Grid, k: usize, f: impl Fn(usize, &[f64]) -> f64) -> Self {
        let masks = subsets(grid.dim, k);
        let comps = masks
            .iter()
            .enumerate()
            .map(|(c, &m)| (0..grid.len()).map(|p| f(c, &location(grid, p, m))).collect())
            .collect();
        FormField { k, grid: grid.clone(), layout: Layout::Primal, comps }
    }

    pub fn values(&self) -> &[f64] {
        &self.comps[0]
    }

    pub fn masks(&self) -> Vec<u8> {
        let full = ((1u16 << self.grid.dim) - 1) as u8;
        let primal = subsets(self.grid.dim, self.k);
        match self.layout {
            Layout::Primal => primal,
            Layout::Dual => primal.iter().map(|m| full & !m).collect(),
        }
    }

    /// Mask of the primal component whose location component `c` shares.
    pub fn location_mask(&self, c: usize) -> u8 {
        let full = ((1u16 << self.grid.dim) - 1) as u8;
        let m = subsets(self.grid.dim, self.k)[c];
        match self.layout {
            Layout::Primal => m,
            Layout::Dual => full & !m,
        }
    }

    pub fn location(&self, c: usize, flat: usize) -> Vec<f64> {
        location(&self.grid, flat, self.location_mask(c))
    }

    pub fn check_compatible(&self, other: &FormField) -> Result<()> {
        if self.k != other.k {
            return Err(Error::ShapeMismatch(format!("degrees {} and {}", self.k, other.k)));
        }
        if self.layout != other.layout {
            return Err(Error::ShapeMismatch("primal/dual layouts differ".into()));
        }
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::ShapeMismatch("fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.comps.concat()
    }

    pub fn with_flat(&self, data: &[f64]) -> Self {
        let n = self.grid.len();
        assert_eq!(data.len(), n * self.comps.len(), "flat length");
        FormField { comps: data.chunks(n).map(<[f64]>::to_vec).collect(), ..self.clone() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        FormField { comps: self.comps.iter().map(|c| c.iter().map(|&v| f(v)).collect()).collect(), ..self.clone() }
    }

    pub fn zip_with(&self, other: &FormField, f: impl Fn(f64, f64) -> f64) -> Self {
        FormField {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
            ..self.clone()
        }
    }

    pub fn sub(&self, other: &FormField) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &FormField) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| exec::max_abs(c.iter().copied())).fold(0.0, f64::max)
    }

    /// Unweighted discrete L2 norm with the cell volume as measure.
    pub fn l2_norm(&self) -> f64 {
        let vol = self.grid.cell_volume();
        (vol * exec::sum(self.comps.iter().flat_map(|c| c.iter().map(|v| v * v)))).sqrt()
    }

    /// CSV with header `axis0,...,component,value`; coordinates are the
    /// component locations.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.grid.dim).map(|a| format!("axis{a}")).collect();
        writeln!(w, "{},component,value", header.join(","))?;
        for (c, comp) in self.comps.iter().enumerate() {
            for (p, v) in comp.iter().enumerate() {
                let loc = self.location(c, p);
                let coords: Vec<String> = loc.iter().map(|x| format!("{x}")).collect();
                writeln!(w, "{},{},{}", coords.join(","), c, v)?;
            }
        }
        Ok(())
    }
}

/// Physical location of the primal component `mask` attached to node `flat`.
pub fn location(grid: &Grid, flat: usize, mask: u8) -> Vec<f64> {
    (0..grid.dim)
        .map(|a| {
            let x = grid.node_coord(a, grid.index_on(flat, a));
            if mask & (1 << a) != 0 { x + 0.5 * grid.spacing[a] } else { x }
        })
        .collect()
}

/// Ordered pair `(top, offset)` of same-degree forms.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubledForm {
    pub top: FormField,
    pub offset: FormField,
}

impl DoubledForm {
    pub fn new(top: FormField, offset: FormField) -> Result<Self> {
        top.check_compatible(&offset)?;
        Ok(DoubledForm { top, offset })
    }

    pub fn zeros(grid: &Grid, k: usize) -> Self {
        DoubledForm { top: FormField::zeros(grid, k), offset: FormField::zeros(grid, k) }
    }

    pub fn k(&self) -> usize {
        self.top.k
    }

    pub fn grid(&self) -> &Grid {
        &self.top.grid
    }

    /// `[top..., offset...]`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.top.flat();
        v.extend(self.offset.flat());
        v
    }

    pub fn with_flat(&self, data: &[f64]) -> Self {
        let half = data.len() / 2;
        DoubledForm { top: self.top.with_flat(&data[..half]), offset: self.offset.with_flat(&data[half..]) }
    }

    pub fn sub(&self, other: &DoubledForm) -> Self {
        DoubledForm { top: self.top.sub(&other.top), offset: self.offset.sub(&other.offset) }
    }

    pub fn max_abs(&self) -> f64 {
        self.top.max_abs().max(self.offset.max_abs())
    }

    pub fn l2_norm(&self) -> f64 {
        self.top.l2_norm().hypot(self.offset.l2_norm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaFamily {
    #[default]
    Gaussian,
    Bump,
    TanhRamp,
}

/// Normalization of `exp(-1/(1-t^2))` over `(-1, 1)`.
pub const BUMP_MASS: f64 = 0.443_993_816_168_079_4;

impl DeltaFamily {
    /// Unit-mass profile of the family.
    pub fn profile(self, t: f64) -> f64 {
        match self {
            DeltaFamily::Gaussian => (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            DeltaFamily::Bump => {
                if t.abs() < 1.0 {
                    (-1.0 / (1.0 - t * t)).exp() / BUMP_MASS
                } else {
                    0.0
                }
            }
            DeltaFamily::TanhRamp => {
                let c = t.abs().min(350.0).cosh();
                0.5 / (c * c)
            }
        }
    }

    /// Half-width of the support in units of `1/n`, if compact.
    pub fn support(self) -> Option<f64> {
        match self {
            DeltaFamily::Bump => Some(1.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Surface {
    Point { center: Vec<f64> },
    Sphere { center: Vec<f64>, radius: f64 },
    Hyperplane { axis: usize, offset: f64 },
}

/// Regularized surface delta `delta_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSpec {
    #[serde(default)]
    pub family: DeltaFamily,
    pub sharpness: f64,
    pub surface: Surface,
}

impl DeltaSpec {
    pub fn new(family: DeltaFamily, sharpness: f64, surface: Surface) -> Self {
        DeltaSpec { family, sharpness, surface }
    }

    pub fn with_sharpness(&self, n: f64) -> Self {
        DeltaSpec { sharpness: n, ..self.clone() }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let n = self.sharpness;
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidDelta(format!("sharpness must be positive and finite, got {n}")));
        }
        let inside = |a: usize, x: f64| {
            let lo = grid.origin[a];
            x >= lo && x <= lo + grid.extent[a]
        };
        match &self.surface {
            Surface::Point { center } => {
                if grid.is_radial() {
                    return Err(Error::InvalidDelta("radial grids carry spheres, not points".into()));
                }
                if center.len() != grid.dim {
                    return Err(Error::InvalidDelta("point dimension differs from grid".into()));
                }
                if let Some(a) = (0..grid.dim).find(|&a| !inside(a, center[a])) {
                    return Err(Error::InvalidDelta(format!("point lies outside the grid on axis {a}")));
                }
            }
            Surface::Sphere { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidDelta("sphere radius must be positive".into()));
                }
                if grid.is_radial() {
                    if !inside(0, *radius) {
                        return Err(Error::InvalidDelta(format!("radius {radius} outside the radial grid")));
                    }
                } else {
                    if center.len() != grid.dim {
                        return Err(Error::InvalidDelta("sphere centre dimension differs from grid".into()));
                    }
                    if let Some(a) = (0..grid.dim).find(|&a| !inside(a, center[a])) {
                        return Err(Error::InvalidDelta(format!("sphere centre outside the grid on axis {a}")));
                    }
                }
            }
            Surface::Hyperplane { axis, offset } => {
                if *axis >= grid.dim {
                    return Err(Error::InvalidDelta(format!("hyperplane axis {axis} out of range")));
                }
                if !inside(*axis, *offset) {
                    return Err(Error::InvalidDelta("hyperplane outside the grid".into()));
                }
            }
        }
        Ok(())
    }

    /// Signed distance to the surface at a physical location. For a point in
    /// 1D this is `x - c`; in higher dimensions it is the distance.
    pub fn signed_distance(&self, grid: &Grid, x: &[f64]) -> f64 {
        let disp = |a: usize, c: f64| wrapped(grid, a, x[a] - c);
        match &self.surface {
            Surface::Point { center } => {
                if grid.dim == 1 {
                    disp(0, center[0])
                } else {
                    (0..grid.dim).map(|a| disp(a, center[a]).powi(2)).sum::<f64>().sqrt()
                }
            }
            Surface::Sphere { center, radius } => {
                if grid.is_radial() {
                    x[0] - radius
                } else {
                    (0..grid.dim).map(|a| disp(a, center[a]).powi(2)).sum::<f64>().sqrt() - radius
                }
            }
            Surface::Hyperplane { axis, offset } => disp(*axis, *offset),
        }
    }

    /// Unit normal (gradient of the signed distance), where defined.
    pub fn normal(&self, grid: &Grid, x: &[f64]) -> Option<Vec<f64>> {
        match &self.surface {
            Surface::Point { center } if grid.dim == 1 => {
                let s = wrapped(grid, 0, x[0] - center[0]);
                Some(vec![if s >= 0.0 { 1.0 } else { -1.0 }])
            }
            Surface::Point { .. } => None,
            Surface::Sphere { center, .. } => {
                if grid.is_radial() {
                    return Some(vec![1.0]);
                }
                let d: Vec<f64> = (0..grid.dim).map(|a| wrapped(grid, a, x[a] - center[a])).collect();
                let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                (r > 0.0).then(|| d.iter().map(|v| v / r).collect())
            }
            Surface::Hyperplane { axis, .. } => {
                let mut n = vec![0.0; grid.dim];
                n[*axis] = 1.0;
                Some(n)
            }
        }
    }

    /// `delta_n` at a physical location.
    pub fn value_at(&self, grid: &Grid, x: &[f64]) -> f64 {
        let n = self.sharpness;
        match &self.surface {
            Surface::Point { center } => (0..grid.dim)
                .map(|a| n * self.family.profile(n * wrapped(grid, a, x[a] - center[a])))
                .product(),
            _ => n * self.family.profile(n * self.signed_distance(grid, x)),
        }
    }

    /// Half-width of the band treated as the interface layer.
    pub fn band_half_width(&self) -> f64 {
        2.0 / self.sharpness
    }
}

fn wrapped(grid: &Grid, axis: usize, d: f64) -> f64 {
    match grid.topology[axis] {
        Topology::Periodic => {
            let l = grid.extent[axis];
            d - l * (d / l).round()
        }
        Topology::Bounded => d,
    }
}

/// Sample `delta_n` on the grid nodes.
pub fn evaluate_delta(spec: &DeltaSpec, grid: &Grid) -> Result<FormField> {
    spec.validate(grid)?;
    let mut values = vec![0.0; grid.len()];
    exec::fill(&mut values, |p| spec.value_at(grid, &grid.coords(p)));
    Ok(FormField::scalar(grid, values))
}

/// Central first derivative along `axis`; second-order one-sided at
/// bounded edges.
pub fn derivative(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing[axis];
    let mut out = vec![0.0; f.len()];
    exec::fill(&mut out, |p| match (grid.shift(p, axis, -1), grid.shift(p, axis, 1)) {
        (Some(m), Some(q)) => (f[q] - f[m]) / (2.0 * h),
        (None, Some(q)) => {
            let q2 = grid.shift(q, axis, 1).expect("axis has at least 3 points");
            (-3.0 * f[p] + 4.0 * f[q] - f[q2]) / (2.0 * h)
        }
        (Some(m), None) => {
            let m2 = grid.shift(m, axis, -1).expect("axis has at least 3 points");
            (3.0 * f[p] - 4.0 * f[m] + f[m2]) / (2.0 * h)
        }
        (None, None) => unreachable!("axis has at least 3 points"),
    });
    out
}

/// Central second derivative along `axis`; second-order one-sided
/// (four-point) at bounded edges.
pub fn second_derivative(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let h2 = grid.spacing[axis] * grid.spacing[axis];
    let mut out = vec![0.0; f.len()];
    exec::fill(&mut out, |p| match (grid.shift(p, axis, -1), grid.shift(p, axis, 1)) {
        (Some(m), Some(q)) => (f[m] - 2.0 * f[p] + f[q]) / h2,
        (None, Some(q)) => {
            let q2 = grid.shift_clamped(q, axis, 1);
            let q3 = grid.shift_clamped(q2, axis, 1);
            (2.0 * f[p] - 5.0 * f[q] + 4.0 * f[q2] - f[q3]) / h2
        }
        (Some(m), None) => {
            let m2 = grid.shift_clamped(m, axis, -1);
            let m3 = grid.shift_clamped(m2, axis, -1);
            (2.0 * f[p] - 5.0 * f[m] + 4.0 * f[m2] - f[m3]) / h2
        }
        (None, None) => unreachable!("axis has at least 3 points"),
    });
    out
}

pub fn gradient(grid: &Grid, f: &[f64]) -> Vec<Vec<f64>> {
    (0..grid.dim).map(|a| derivative(grid, f, a)).collect()
}

/// Laplacian; on radial grids `f'' + (2/r) f'`.
pub fn laplacian(grid: &Grid, f: &[f64]) -> Vec<f64> {
    if grid.is_radial() {
        let d1 = derivative(grid, f, 0);
        let d2 = second_derivative(grid, f, 0);
        return (0..f.len()).map(|p| d2[p] + 2.0 / grid.node_coord(0, p) * d1[p]).collect();
    }
    let mut out = second_derivative(grid, f, 0);
    for a in 1..grid.dim {
        let d2 = second_derivative(grid, f, a);
        for (o, v) in out.iter_mut().zip(d2) {
            *o += v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Recipe {
    Stencil,
    DeltaQuotient { delta: Vec<f64> },
}

/// Scalar gauge field with cached gradient and Laplacian.
///
/// Fields built from values cache the grid stencils of the values. Fields
/// built from a delta cache `grad(delta)/(1+delta)` as the gradient (never
/// differencing the logarithm at the peak) and the stencil Laplacian of the
/// values.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub gradient: Vec<Vec<f64>>,
    pub laplacian: Vec<f64>,
    pub source: Option<DeltaSpec>,
    recipe: Recipe,
}

impl LambdaField {
    pub fn zero(grid: &Grid) -> Self {
        Self::from_values(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self::from_values(grid, vec![value; grid.len()])
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "lambda length");
        let gradient = gradient(grid, &values);
        let laplacian = laplacian(grid, &values);
        LambdaField { grid: grid.clone(), values, gradient, laplacian, source: None, recipe: Recipe::Stencil }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_values(grid, (0..grid.len()).map(|p| f(&grid.coords(p))).collect())
    }

    /// `lambda = ln(1 + delta)`; rejects negative or non-finite delta.
    pub fn from_delta(delta: &FormField, source: Option<DeltaSpec>) -> Result<Self> {
        if delta.k != 0 {
            return Err(Error::Degree { k: delta.k, what: "delta field (must be a 0-form)" });
        }
        let d = delta.values();
        if let Some(p) = d.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be finite and >= 0, got {} at node {p}", d[p])));
        }
        let grid = &delta.grid;
        let values: Vec<f64> = d.iter().map(|v| v.ln_1p()).collect();
        let gradient = quotient_gradient(grid, d);
        let laplacian = laplacian(grid, &values);
        Ok(LambdaField {
            grid: grid.clone(),
            values,
            gradient,
            laplacian,
            source,
            recipe: Recipe::DeltaQuotient { delta: d.to_vec() },
        })
    }

    pub fn delta_values(&self) -> Option<&[f64]> {
        match &self.recipe {
            Recipe::DeltaQuotient { delta } => Some(delta),
            Recipe::Stencil => None,
        }
    }

    /// Recompute the caches from scratch with the same recipe.
    pub fn rederive(&self) -> Self {
        match &self.recipe {
            Recipe::Stencil => LambdaField { source: self.source.clone(), ..Self::from_values(&self.grid, self.values.clone()) },
            Recipe::DeltaQuotient { delta } => {
                Self::from_delta(&FormField::scalar(&self.grid, delta.clone()), self.source.clone())
                    .expect("stored delta was validated")
            }
        }
    }

    /// True when the caches equal a fresh derivation bit for bit.
    pub fn is_consistent(&self) -> bool {
        let fresh = self.rederive();
        let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        same(&self.values, &fresh.values)
            && same(&self.laplacian, &fresh.laplacian)
            && self.gradient.iter().zip(&fresh.gradient).all(|(a, b)| same(a, b))
    }

    /// Pointwise sum, re-derived with the stencil recipe.
    pub fn sum(&self, other: &LambdaField) -> Self {
        Self::from_values(&self.grid, self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    pub fn negated(&self) -> Self {
        Self::from_values(&self.grid, self.values.iter().map(|v| -v).collect())
    }

    /// `lap(lambda) + |grad lambda|^2`, which equals `lap(delta)/(1+delta)`
    /// for log-delta fields; that quotient is used directly for them.
    pub fn reaction_coefficient(&self) -> Vec<f64> {
        match &self.recipe {
            Recipe::DeltaQuotient { delta } => {
                let lap = laplacian(&self.grid, delta);
                lap.iter().zip(delta).map(|(l, d)| l / (1.0 + d)).collect()
            }
            Recipe::Stencil => (0..self.grid.len())
                .map(|p| self.laplacian[p] + self.gradient.iter().map(|g| g[p] * g[p]).sum::<f64>())
                .collect(),
        }
    }

    /// Lambda averaged onto the location of primal component `mask`.
    pub fn at_location(&self, mask: u8) -> Vec<f64> {
        let grid = &self.grid;
        let axes: Vec<usize> = (0..grid.dim).filter(|a| mask & (1 << a) != 0).collect();
        if axes.is_empty() {
            return self.values.clone();
        }
        let scale = 1.0 / (1usize << axes.len()) as f64;
        (0..grid.len())
            .map(|p| {
                let mut acc = 0.0;
                for corner in 0..(1usize << axes.len()) {
                    let mut q = p;
                    for (bit, &a) in axes.iter().enumerate() {
                        if corner & (1 << bit) != 0 {
                            q = grid.shift_clamped(q, a, 1);
                        }
                    }
                    acc += self.values[q];
                }
                acc * scale
            })
            .collect()
    }

    /// Lambda at the location of every component of a form of this shape.
    pub fn for_form(&self, f: &FormField) -> Vec<Vec<f64>> {
        (0..f.comps.len()).map(|c| self.at_location(f.location_mask(c))).collect()
    }
}

fn quotient_gradient(grid: &Grid, delta: &[f64]) -> Vec<Vec<f64>> {
    gradient(grid, delta)
        .into_iter()
        .map(|g| g.iter().zip(delta).map(|(gv, d)| gv / (1.0 + d)).collect())
        .collect()
}

/// `sum w(x) e^{-2 lambda(x)} a(x) b(x)` with the grid quadrature weights.
pub fn weighted_inner_product(a: &FormField, b: &FormField, lambda: &LambdaField) -> Result<f64> {
    a.check_compatible(b)?;
    if !a.grid.same_shape(&lambda.grid) {
        return Err(Error::ShapeMismatch("lambda lives on a different grid".into()));
    }
    let w = a.grid.quadrature_weights();
    let lam = lambda.for_form(a);
    let mut total = 0.0;
    for c in 0..a.comps.len() {
        total += exec::sum(
            (0..w.len()).map(|p| w[p] * (-2.0 * lam[c][p]).exp() * a.comps[c][p] * b.comps[c][p]),
        );
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: usize) -> Grid {
        build_grid(&GridSpec::bounded(&[-1.0], &[2.0], &[points])).unwrap()
    }

    #[test]
    fn spacing_rules() {
        let b = build_grid(&GridSpec::bounded(&[0.0], &[2.0], &[5])).unwrap();
        assert_eq!(b.spacing[0], 0.5);
        let p = build_grid(&GridSpec::periodic(&[2.0], &[4])).unwrap();
        assert_eq!(p.spacing[0], 0.5);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut radial2 = GridSpec::bounded(&[1.0, 0.0], &[1.0, 1.0], &[5, 5]);
        radial2.coord = CoordKind::Radial1d;
        assert!(build_grid(&radial2).is_err());
        assert!(build_grid(&GridSpec::bounded(&[0.0], &[0.0], &[5])).is_err());
        assert!(build_grid(&GridSpec::bounded(&[0.0], &[1.0], &[2])).is_err());
        assert!(build_grid(&GridSpec::radial(0.0, 1.0, 10)).is_err());
    }

    #[test]
    fn row_major_indexing_round_trips() {
        let g = build_grid(&GridSpec::periodic(&[1.0, 2.0, 3.0], &[3, 4, 5])).unwrap();
        for p in 0..g.len() {
            assert_eq!(g.ravel(&g.unravel(p)), p);
        }
        assert_eq!(g.shift(0, 2, -1), Some(4));
        assert_eq!(g.shift(0, 0, 1), Some(20));
    }

    #[test]
    fn subsets_are_lexicographic() {
        assert_eq!(subsets(3, 2), vec![0b011, 0b101, 0b110]);
        assert_eq!(subsets(2, 1), vec![0b01, 0b10]);
        assert_eq!(binomial(3, 2), 3);
    }

    #[test]
    fn complement_signs_in_3d() {
        // dx ^ (dy ^ dz) = +vol, dy ^ (dx ^ dz) = -vol, dz ^ (dx ^ dy) = +vol
        assert_eq!(complement_sign(3, 0b001), 1.0);
        assert_eq!(complement_sign(3, 0b010), -1.0);
        assert_eq!(complement_sign(3, 0b100), 1.0);
        assert_eq!(complement_sign(2, 0b10), -1.0);
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        let g = build_grid(&GridSpec::bounded(&[0.0, -1.0], &[1.0, 2.0], &[7, 9])).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|p| {
            let x = g.coords(p);
            3.0 * x[0] - 2.0 * x[1] + 0.5
        }).collect();
        let grad = gradient(&g, &f);
        assert!(grad[0].iter().all(|v| (v - 3.0).abs() < 1e-13));
        assert!(grad[1].iter().all(|v| (v + 2.0).abs() < 1e-13));
    }

    #[test]
    fn gaussian_far_tail_vanishes() {
        let g = line(2001);
        let spec = DeltaSpec::new(DeltaFamily::Gaussian, 64.0, Surface::Point { center: vec![0.0] });
        let d = evaluate_delta(&spec, &g).unwrap();
        let far = d.values()[0];
        assert!(far < 1e-12);
        assert!(d.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn delta_validation() {
        let g = line(11);
        let bad = DeltaSpec::new(DeltaFamily::Gaussian, -1.0, Surface::Point { center: vec![0.0] });
        assert!(evaluate_delta(&bad, &g).is_err());
        let outside = DeltaSpec::new(DeltaFamily::Gaussian, 4.0, Surface::Point { center: vec![3.0] });
        assert!(evaluate_delta(&outside, &g).is_err());
    }

    #[test]
    fn lambda_caches_are_reproducible() {
        let g = line(101);
        let spec = DeltaSpec::new(DeltaFamily::Gaussian, 8.0, Surface::Point { center: vec![0.0] });
        let d = evaluate_delta(&spec, &g).unwrap();
        let lam = LambdaField::from_delta(&d, Some(spec)).unwrap();
        assert!(lam.is_consistent());
        let plain = LambdaField::from_fn(&g, |x| x[0].sin());
        assert!(plain.is_consistent());
        let mut stale = plain.clone();
        stale.laplacian[3] += 1e-9;
        assert!(!stale.is_consistent());
    }

    #[test]
    fn negative_delta_rejected() {
        let g = line(11);
        let mut v = vec![0.0; 11];
        v[4] = -0.1;
        assert!(LambdaField::from_delta(&FormField::scalar(&g, v), None).is_err());
    }

    #[test]
    fn inner_product_of_ones_is_volume() {
        let g = build_grid(&GridSpec::bounded(&[0.0, 0.0], &[1.0, 1.0], &[11, 6])).unwrap();
        let one = FormField::constant(&g, 1.0);
        let v = weighted_inner_product(&one, &one, &LambdaField::zero(&g)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        let p = build_grid(&GridSpec::periodic(&[1.0], &[16])).unwrap();
        let one = FormField::constant(&p, 1.0);
        assert!((weighted_inner_product(&one, &one, &LambdaField::zero(&p)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inner_product_rejects_mismatch() {
        let g = line(11);
        let a = FormField::zeros(&g, 0);
        let b = FormField::zeros(&g, 1);
        assert!(weighted_inner_product(&a, &b, &LambdaField::zero(&g)).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let g = build_grid(&GridSpec::periodic(&[1.0, 1.0], &[3, 3])).unwrap();
        let f = FormField::from_fn(&g, 1, |c, x| c as f64 + x[0]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("axis0,axis1,component,value"));
        assert_eq!(text.lines().count(), 1 + 2 * 9);
    }
}
