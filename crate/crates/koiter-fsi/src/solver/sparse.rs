//! Minimal CSR matrix: assemble once from triplets, multiply, transpose.
//! The fluid operators are products of constant sparse stencils with
//! per-step diagonal coefficient transforms, so this is all that is needed.

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols);
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let nnz = counts[nrows];
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut cursor = counts.clone();
        for &(r, c, v) in triplets {
            let p = cursor[r];
            col_idx[p] = c;
            values[p] = v;
            cursor[r] += 1;
        }
        // sort each row and merge duplicates
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut out_cols = Vec::with_capacity(nnz);
        let mut out_vals = Vec::with_capacity(nnz);
        for r in 0..nrows {
            let lo = counts[r];
            let hi = counts[r + 1];
            let mut entries: Vec<(usize, f64)> =
                (lo..hi).map(|p| (col_idx[p], values[p])).collect();
            entries.sort_by_key(|e| e.0);
            for (c, v) in entries {
                if let Some(last) = out_cols.last() {
                    if *last == c && out_cols.len() > row_ptr[r] {
                        *out_vals.last_mut().unwrap() += v;
                        continue;
                    }
                }
                out_cols.push(c);
                out_vals.push(v);
            }
            row_ptr[r + 1] = out_cols.len();
        }
        Csr { nrows, ncols, row_ptr, col_idx: out_cols, values: out_vals }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut s = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            y[r] = s;
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut cursor = counts;
        for r in 0..self.nrows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[p];
                let q = cursor[c];
                col_idx[q] = r;
                values[q] = self.values[p];
                cursor[c] += 1;
            }
        }
        Csr { nrows: self.ncols, ncols: self.nrows, row_ptr, col_idx, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_roundtrip_and_transpose_adjoint() {
        let t = vec![(0, 1, 2.0), (0, 1, 0.5), (2, 0, -1.0), (1, 3, 4.0), (2, 2, 3.0)];
        let a = Csr::from_triplets(3, 4, &t);
        assert_eq!(a.nnz(), 4); // duplicate merged
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut y = [0.0; 3];
        a.mul_vec(&x, &mut y);
        assert_eq!(y, [5.0, 16.0, 8.0]);
        let at = a.transpose();
        let w = [0.5, -1.0, 2.0];
        let mut z = [0.0; 4];
        at.mul_vec(&w, &mut z);
        // ⟨Ax, w⟩ = ⟨x, Aᵀw⟩
        let lhs: f64 = y.iter().zip(&w).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&z).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
