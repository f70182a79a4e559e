//! Compressed sparse row matrices over f64.
//!
//! Column indices are strictly increasing within each row and accumulation
//! always runs in ascending column order, so results are deterministic.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    /// Build from (row, col, value) triplets. Duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut per_row: Vec<Vec<(u32, f64)>> = vec![Vec::new(); rows];
        for (r, c, v) in triplets {
            per_row[r].push((c as u32, v));
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut per_row {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = row[i].1;
                let mut j = i + 1;
                while j < row.len() && row[j].0 == c {
                    v += row[j].1;
                    j += 1;
                }
                col_idx.push(c);
                values.push(v);
                i = j;
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.values[s..e].iter().sum()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    /// Check the CSR structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.row_ptr.len() != self.rows + 1 || *self.row_ptr.last().unwrap() != self.nnz() {
            return Err(Error::InvalidArgument("bad row_ptr".into()));
        }
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidArgument(format!(
                        "row {r}: columns not strictly increasing"
                    )));
                }
            }
            if cols.iter().any(|&c| c as usize >= self.cols) {
                return Err(Error::InvalidArgument(format!("row {r}: column out of range")));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("row {r}")));
            }
        }
        Ok(())
    }

    /// Scale each row by a factor: result[r, :] = self[r, :] * factors[r].
    pub fn scale_rows(&self, factors: &[f64]) -> CsrMatrix {
        assert_eq!(factors.len(), self.rows);
        let mut out = self.clone();
        for r in 0..self.rows {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.values[i] *= factors[r];
            }
        }
        out
    }

    /// CSR x dense product. Accumulates in ascending column order.
    pub fn spmm(&self, b: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.cols != b.nrows() {
            return Err(Error::Dim(format!(
                "spmm: {}x{} * {}x{}",
                self.rows,
                self.cols,
                b.nrows(),
                b.ncols()
            )));
        }
        let mut out = Array2::zeros((self.rows, b.ncols()));
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let mut out_row = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let b_row = b.row(c as usize);
                for (o, &x) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// Product of selected rows: self[sel, :] x dense.
    pub fn spmm_rows(&self, sel: &[u32], b: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.cols != b.nrows() {
            return Err(Error::Dim(format!(
                "spmm_rows: inner {} vs {}",
                self.cols,
                b.nrows()
            )));
        }
        let mut out = Array2::zeros((sel.len(), b.ncols()));
        for (k, &r) in sel.iter().enumerate() {
            let (cols, vals) = self.row(r as usize);
            let mut out_row = out.row_mut(k);
            for (&c, &v) in cols.iter().zip(vals) {
                let b_row = b.row(c as usize);
                for (o, &x) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// Transposed product over selected rows: (self[sel, :])^T x d,
    /// where d has one row per entry of `sel`. Result is cols x d.ncols().
    pub fn spmm_rows_t(&self, sel: &[u32], d: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if d.nrows() != sel.len() {
            return Err(Error::Dim(format!(
                "spmm_rows_t: {} selected rows vs {} dense rows",
                sel.len(),
                d.nrows()
            )));
        }
        let mut out = Array2::zeros((self.cols, d.ncols()));
        for (k, &r) in sel.iter().enumerate() {
            let (cols, vals) = self.row(r as usize);
            let d_row = d.row(k);
            for (&c, &v) in cols.iter().zip(vals) {
                let mut out_row = out.row_mut(c as usize);
                for (o, &x) in out_row.iter_mut().zip(d_row.iter()) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// CSR x CSR product with merged duplicates and sorted columns.
    pub fn sp_sp_mul(&self, b: &CsrMatrix) -> Result<CsrMatrix> {
        if self.cols != b.rows {
            return Err(Error::Dim(format!(
                "sp_sp_mul: {}x{} * {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut acc = vec![0.0f64; b.cols];
        let mut touched: Vec<u32> = Vec::new();
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..self.rows {
            touched.clear();
            let (a_cols, a_vals) = self.row(r);
            for (&k, &av) in a_cols.iter().zip(a_vals) {
                let (b_cols, b_vals) = b.row(k as usize);
                for (&c, &bv) in b_cols.iter().zip(b_vals) {
                    if acc[c as usize] == 0.0 && !touched.contains(&c) {
                        touched.push(c);
                    }
                    acc[c as usize] += av * bv;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                col_idx.push(c);
                values.push(acc[c as usize]);
                acc[c as usize] = 0.0;
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            rows: self.rows,
            cols: b.cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[[r, c as usize]] = v;
            }
        }
        out
    }

    /// Vertically stack matrices with equal column counts.
    pub fn vstack(blocks: &[&CsrMatrix]) -> Result<CsrMatrix> {
        let cols = blocks.first().map(|b| b.cols).unwrap_or(0);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::Dim("vstack: column counts differ".into()));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let nnz = blocks.iter().map(|b| b.nnz()).sum();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for b in blocks {
            for r in 0..b.rows {
                let (cs, vs) = b.row(r);
                col_idx.extend_from_slice(cs);
                values.extend_from_slice(vs);
                row_ptr.push(col_idx.len());
            }
        }
        Ok(CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::child_rng;
    use ndarray::Array2;
    use rand::Rng;

    fn random_sparse(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> CsrMatrix {
        let mut triplets = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if rng.gen::<f64>() < 0.4 {
                    triplets.push((r, c, rng.gen::<f64>() * 2.0 - 1.0));
                }
            }
        }
        CsrMatrix::from_triplets(rows, cols, triplets)
    }

    fn random_dense(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn spmm_identity_returns_input() {
        let mut rng = child_rng(1, "spmm", 0);
        let b = random_dense(&mut rng, 5, 3);
        let i = CsrMatrix::identity(5);
        let out = i.spmm(&b.view()).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn spmm_zero_rows_stay_zero() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(1, 0, 2.0)]);
        let b = Array2::from_elem((3, 2), 1.0);
        let out = a.spmm(&b.view()).unwrap();
        assert_eq!(out.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!(out.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!(out[[1, 0]], 2.0);
    }

    #[test]
    fn spmm_matches_dense_oracle() {
        let mut rng = child_rng(2, "spmm", 0);
        let a = random_sparse(&mut rng, 4, 4);
        let b = random_dense(&mut rng, 4, 2);
        let got = a.spmm(&b.view()).unwrap();
        let want = a.to_dense().dot(&b);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    #[test]
    fn spmm_dimension_mismatch_errors() {
        let a = CsrMatrix::identity(3);
        let b = Array2::zeros((4, 2));
        assert!(a.spmm(&b.view()).is_err());
    }

    #[test]
    fn sp_sp_mul_by_identity_is_noop() {
        let mut rng = child_rng(3, "spsp", 0);
        let a = random_sparse(&mut rng, 5, 5);
        let got = a.sp_sp_mul(&CsrMatrix::identity(5)).unwrap();
        assert_eq!(got, a);
    }

    #[test]
    fn sp_sp_mul_matches_dense_oracle() {
        for seed in 0..20 {
            let mut rng = child_rng(seed, "spsp-rand", 0);
            let n = 2 + (rng.gen::<u32>() % 15) as usize;
            let a = random_sparse(&mut rng, n, n);
            let b = random_sparse(&mut rng, n, n);
            let got = a.sp_sp_mul(&b).unwrap().to_dense();
            let want = a.to_dense().dot(&b.to_dense());
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "seed {seed}");
            }
        }
    }

    #[test]
    fn spmm_rows_t_matches_dense_oracle() {
        let mut rng = child_rng(4, "spmmt", 0);
        let a = random_sparse(&mut rng, 6, 5);
        let sel = vec![1u32, 3, 4];
        let d = random_dense(&mut rng, 3, 2);
        let got = a.spmm_rows_t(&sel, &d.view()).unwrap();
        let ad = a.to_dense();
        let mut want = Array2::<f64>::zeros((5, 2));
        for (k, &r) in sel.iter().enumerate() {
            for c in 0..5 {
                for j in 0..2 {
                    want[[c, j]] += ad[[r as usize, c]] * d[[k, j]];
                }
            }
        }
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn validate_rejects_unsorted_columns() {
        let m = CsrMatrix {
            rows: 1,
            cols: 3,
            row_ptr: vec![0, 2],
            col_idx: vec![2, 1],
            values: vec![1.0, 1.0],
        };
        assert!(m.validate().is_err());
    }
}
