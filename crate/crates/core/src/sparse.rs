//! Compressed sparse row matrices.
//!
//! Only what the operator assembly needs: triplet construction with a fixed
//! duplicate-summation order, products, transposes and block layouts.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Csr {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Csr {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: diag.to_vec(),
        }
    }

    /// Build from (row, col, value) triplets. Duplicates are summed in the
    /// order they were pushed, so assembly is reproducible.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = row[i].1;
                i += 1;
                while i < row.len() && row[i].0 == c {
                    v += row[i].1;
                    i += 1;
                }
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Csr { nrows, ncols, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.data[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension");
        let mut y = vec![0.0; self.nrows];
        crate::exec::fill(&mut y, |r| self.row(r).fold(0.0, |acc, (c, v)| acc + v * x[c]));
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                triplets.push((c, r, v));
            }
        }
        Csr::from_triplets(self.ncols, self.nrows, &triplets)
    }

    /// Row-by-row product with a dense accumulator; column order is fixed.
    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.ncols, other.nrows, "matmul dimension");
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut seen = vec![false; other.ncols];
        let mut cols: Vec<usize> = Vec::new();
        indptr.push(0);
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !seen[c] {
                        seen[c] = true;
                        cols.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                indices.push(c);
                data.push(acc[c]);
                acc[c] = 0.0;
                seen[c] = false;
            }
            cols.clear();
            indptr.push(indices.len());
        }
        Csr { nrows: self.nrows, ncols: other.ncols, indptr, indices, data }
    }

    pub fn add(&self, other: &Csr) -> Csr {
        self.axpby(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Csr) -> Csr {
        self.axpby(1.0, other, -1.0)
    }

    /// `a*self + b*other`.
    pub fn axpby(&self, a: f64, other: &Csr, b: f64) -> Csr {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "add dimension");
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                triplets.push((r, c, a * v));
            }
            for (c, v) in other.row(r) {
                triplets.push((r, c, b * v));
            }
        }
        Csr::from_triplets(self.nrows, self.ncols, &triplets)
    }

    pub fn scale_rows(&self, s: &[f64]) -> Csr {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for idx in out.indptr[r]..out.indptr[r + 1] {
                out.data[idx] *= s[r];
            }
        }
        out
    }

    pub fn scale_cols(&self, s: &[f64]) -> Csr {
        let mut out = self.clone();
        for idx in 0..out.data.len() {
            out.data[idx] *= s[out.indices[idx]];
        }
        out
    }

    /// Assemble a 2x2 block matrix; `None` blocks are zero.
    pub fn block2(blocks: [[Option<&Csr>; 2]; 2]) -> Csr {
        let rows = [0, 1].map(|i| {
            blocks[i].iter().flatten().map(|b| b.nrows).next().expect("empty block row")
        });
        let cols = [0, 1].map(|j| {
            (0..2).filter_map(|i| blocks[i][j]).map(|b| b.ncols).next().expect("empty block column")
        });
        let mut triplets = Vec::new();
        for bi in 0..2 {
            for bj in 0..2 {
                if let Some(b) = blocks[bi][bj] {
                    assert_eq!((b.nrows, b.ncols), (rows[bi], cols[bj]), "block shape");
                    let (r0, c0) = (if bi == 0 { 0 } else { rows[0] }, if bj == 0 { 0 } else { cols[0] });
                    for r in 0..b.nrows {
                        for (c, v) in b.row(r) {
                            triplets.push((r0 + r, c0 + c, v));
                        }
                    }
                }
            }
        }
        Csr::from_triplets(rows[0] + rows[1], cols[0] + cols[1], &triplets)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        crate::exec::max_abs(self.data.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Csr {
        Csr::from_triplets(3, 3, &[(0, 0, 2.0), (0, 2, 1.0), (1, 1, -1.0), (2, 0, 4.0), (2, 0, 1.0)])
    }

    #[test]
    fn duplicates_sum() {
        assert_eq!(sample().get(2, 0), 5.0);
        assert_eq!(sample().nnz(), 4);
    }

    #[test]
    fn products_match_dense() {
        let a = sample();
        let b = a.transpose();
        let c = a.matmul(&b).to_dense();
        let d = a.to_dense() * b.to_dense();
        assert!((c - d).abs().max() < 1e-15);
    }

    #[test]
    fn block_layout() {
        let a = sample();
        let i = Csr::identity(3);
        let m = Csr::block2([[Some(&a), Some(&i)], [None, Some(&a)]]);
        assert_eq!((m.nrows, m.ncols), (6, 6));
        assert_eq!(m.get(0, 3), 1.0);
        assert_eq!(m.get(5, 3), 5.0);
        assert_eq!(m.get(3, 0), 0.0);
    }
}
