//! Banded LU with partial pivoting and two Krylov solvers.

use crate::error::{Error, Result};
use crate::exec;
use crate::sparse::Csr;

/// General band matrix in LAPACK `gb` layout, with room for pivoting fill.
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
}

impl Banded {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Banded { n, kl, ku, ld, ab: vec![0.0; ld * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ld
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i <= j + self.kl && j <= i + self.ku
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band kl={} ku={}", self.kl, self.ku);
        let s = self.slot(i, j);
        self.ab[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.slot(i, j)]
        } else {
            0.0
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        exec::fill(&mut y, |i| {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            (lo..=hi).fold(0.0, |acc, j| acc + self.ab[self.slot(i, j)] * x[j])
        });
        y
    }

    /// Factor in place; returns the factorization ready for solves.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kv = self.kl + self.ku;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        let mut pmax = 0.0_f64;
        let mut pmin = f64::INFINITY;
        for j in 0..n {
            let km = self.kl.min(n - 1 - j);
            let base = j * self.ld + kv;
            let mut jp = 0;
            let mut best = self.ab[base].abs();
            for p in 1..=km {
                let v = self.ab[base + p].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(Error::Singular { pivot_ratio: 0.0 });
            }
            pmax = pmax.max(best);
            pmin = pmin.min(best);
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = kv + j - c + c * self.ld;
                    let b = kv + j + jp - c + c * self.ld;
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[base];
            for p in 1..=km {
                self.ab[base + p] /= pivot;
            }
            for c in j + 1..=ju {
                let u = self.ab[kv + j - c + c * self.ld];
                if u != 0.0 {
                    for p in 1..=km {
                        let l = self.ab[base + p];
                        self.ab[kv + j + p - c + c * self.ld] -= l * u;
                    }
                }
            }
        }
        let pivot_ratio = pmin / pmax;
        if pivot_ratio < 1e-15 {
            return Err(Error::Singular { pivot_ratio });
        }
        Ok(BandedLu { m: self, ipiv, pivot_ratio })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    m: Banded,
    ipiv: Vec<usize>,
    pub pivot_ratio: f64,
}

impl BandedLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let a = &self.m;
        let n = a.n;
        let kv = a.kl + a.ku;
        let mut b = rhs.to_vec();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = a.kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for q in 1..=km {
                    b[j + q] -= a.ab[j * a.ld + kv + q] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= a.ab[j * a.ld + kv];
            let bj = b[j];
            let lo = j.saturating_sub(kv);
            for i in lo..j {
                b[i] -= a.ab[kv + i - j + j * a.ld] * bj;
            }
        }
        b
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for an operator that is self-adjoint in the inner
/// product `dot`. Starts from zero.
pub fn cg<A, D>(apply: A, dot: D, b: &[f64], tol: f64, max_iter: usize) -> Result<KrylovOutcome>
where
    A: Fn(&[f64]) -> Vec<f64>,
    D: Fn(&[f64], &[f64]) -> f64,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(KrylovOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NoConvergence { solver: "cg", iterations: it, residual: rr.sqrt() / bnorm });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / bnorm;
        if rel <= tol {
            return Ok(KrylovOutcome { x, iterations: it, relative_residual: rel });
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::NoConvergence { solver: "cg", iterations: max_iter, residual: rr.sqrt() / bnorm })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    exec::sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Incomplete LU with the sparsity pattern of `a` (rows must hold their
/// diagonal).
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let n = a.nrows;
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in lu.indptr[i]..lu.indptr[i + 1] {
                if lu.indices[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::Singular { pivot_ratio: 0.0 });
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (lo, hi) = (lu.indptr[i], lu.indptr[i + 1]);
            for k in lo..hi {
                pos[lu.indices[k]] = k;
            }
            for k in lo..hi {
                let col = lu.indices[k];
                if col >= i {
                    break;
                }
                let pivot = lu.data[diag[col]];
                if pivot == 0.0 {
                    return Err(Error::Singular { pivot_ratio: 0.0 });
                }
                let l = lu.data[k] / pivot;
                lu.data[k] = l;
                for m in diag[col] + 1..lu.indptr[col + 1] {
                    let p = pos[lu.indices[m]];
                    if p != usize::MAX {
                        lu.data[p] -= l * lu.data[m];
                    }
                }
            }
            for k in lo..hi {
                pos[lu.indices[k]] = usize::MAX;
            }
            if lu.data[diag[i]] == 0.0 {
                return Err(Error::Singular { pivot_ratio: 0.0 });
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    /// `(LU)^{-1} r`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let a = &self.lu;
        let n = a.nrows;
        let mut z = r.to_vec();
        for i in 0..n {
            let mut v = z[i];
            for k in a.indptr[i]..self.diag[i] {
                v -= a.data[k] * z[a.indices[k]];
            }
            z[i] = v;
        }
        for i in (0..n).rev() {
            let mut v = z[i];
            for k in self.diag[i] + 1..a.indptr[i + 1] {
                v -= a.data[k] * z[a.indices[k]];
            }
            z[i] = v / a.data[self.diag[i]];
        }
        z
    }
}

/// BiCGStab on a sparse matrix, ILU(0) preconditioned.
pub fn bicgstab(a: &Csr, b: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> Result<KrylovOutcome> {
    let n = b.len();
    let ilu = Ilu0::new(a)?;
    let precond = |v: &[f64]| ilu.apply(v);
    let bnorm = dot(b, b).sqrt();
    let mut x = x0.to_vec();
    if bnorm == 0.0 {
        return Ok(KrylovOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    if rel <= tol {
        return Ok(KrylovOutcome { x, iterations: 0, relative_residual: rel });
    }
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond(&p);
        v = a.matvec(&p_hat);
        alpha = rho_new / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        let s_hat = precond(&s);
        let t = a.matvec(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        rho = rho_new;
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return Ok(KrylovOutcome { x, iterations: it, relative_residual: rel });
        }
        if omega == 0.0 {
            break;
        }
    }
    Err(Error::NoConvergence { solver: "bicgstab", iterations: max_iter, residual: rel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn banded_lu_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, kl, ku) = (40, 3, 2);
        let mut band = Banded::new(n, kl, ku);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v: f64 = rng.random_range(-1.0..1.0);
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let x = band.factor().unwrap().solve(&b);
        let oracle = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert!((x[i] - oracle[i]).abs() < 1e-9 * (1.0 + oracle[i].abs()));
        }
    }

    #[test]
    fn singular_band_is_reported() {
        let band = Banded::new(3, 1, 1);
        assert!(matches!(band.factor(), Err(Error::Singular { .. })));
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 50;
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let l = if i > 0 { x[i - 1] } else { 0.0 };
                    let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                    2.5 * x[i] - l - r
                })
                .collect()
        };
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let out = cg(apply, dot, &b, 1e-13, 500).unwrap();
        let ax = apply(&out.x);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let n = 60;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((i, i - 1, -1.5));
            }
            if i + 1 < n {
                t.push((i, i + 1, -0.5));
            }
        }
        let a = Csr::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.2).sin()).collect();
        let out = bicgstab(&a, &b, &vec![0.0; n], 1e-12, 1000).unwrap();
        let ax = a.matvec(&out.x);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn ilu_is_exact_on_tridiagonal() {
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0 + i as f64 * 0.01));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -0.7));
            }
        }
        let a = Csr::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = Ilu0::new(&a).unwrap().apply(&b);
        let ax = a.matvec(&x);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-13);
        }
    }
}
