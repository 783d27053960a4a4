//! Small dense matrices: element tensors, Vandermonde systems and the
//! densified direct solve all live here.

use super::LaError;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let nrows = rows.len();
        let ncols = if nrows > 0 { rows[0].len() } else { 0 };
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols);
            data.extend_from_slice(r);
        }
        DenseMatrix { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.ncols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.ncols + c] = v;
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.ncols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.ncols..(r + 1) * self.ncols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            y[r] = super::dot(self.row(r), x);
        }
        y
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.ncols, self.nrows);
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// LU factorization with partial pivoting, in place. Returns the row
    /// permutation. A pivot below `1e-14 * max_abs` of the original matrix is
    /// treated as singular.
    pub fn lu_factor(&mut self) -> Result<Vec<usize>, LaError> {
        assert_eq!(self.nrows, self.ncols);
        let n = self.nrows;
        let tol = 1e-14 * self.max_abs();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..n {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= tol {
                return Err(LaError::SingularMatrix { pivot: best });
            }
            if p != k {
                perm.swap(p, k);
                for c in 0..n {
                    let a = self.get(k, c);
                    let b = self.get(p, c);
                    self.set(k, c, b);
                    self.set(p, c, a);
                }
            }
            let pivot = self.get(k, k);
            for r in k + 1..n {
                let factor = self.get(r, k) / pivot;
                self.set(r, k, factor);
                for c in k + 1..n {
                    let v = self.get(r, c) - factor * self.get(k, c);
                    self.set(r, c, v);
                }
            }
        }
        Ok(perm)
    }

    /// Back substitution against a previously computed `lu_factor` result.
    pub fn lu_solve(&self, perm: &[usize], b: &[f64]) -> Vec<f64> {
        let n = self.nrows;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
        for r in 1..n {
            for c in 0..r {
                x[r] -= self.get(r, c) * x[c];
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                x[r] -= self.get(r, c) * x[c];
            }
            x[r] /= self.get(r, r);
        }
        x
    }

    /// One-shot dense solve; the matrix is copied, `self` stays intact.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LaError> {
        let mut lu = self.clone();
        let perm = lu.lu_factor()?;
        Ok(lu.lu_solve(&perm, b))
    }

    /// Solve for several right-hand sides given as the columns of `rhs`.
    pub fn solve_many(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, LaError> {
        assert_eq!(self.nrows, rhs.nrows);
        let mut lu = self.clone();
        let perm = lu.lu_factor()?;
        let mut out = DenseMatrix::zeros(rhs.nrows, rhs.ncols);
        let mut col = vec![0.0; rhs.nrows];
        for c in 0..rhs.ncols {
            for r in 0..rhs.nrows {
                col[r] = rhs.get(r, c);
            }
            let x = lu.lu_solve(&perm, &col);
            for r in 0..rhs.nrows {
                out.set(r, c, x[r]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lu_solves_small_system() {
        let a = DenseMatrix::from_rows(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let x = a.solve(&[1.0, 2.0]).unwrap();
        // hand solution of [[4,1],[1,3]] x = (1,2)
        assert_relative_eq!(x[0], 1.0 / 11.0, epsilon = 1e-14);
        assert_relative_eq!(x[1], 7.0 / 11.0, epsilon = 1e-14);
    }

    #[test]
    fn lu_detects_singular() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(a.solve(&[1.0, 1.0]), Err(LaError::SingularMatrix { .. })));
    }

    #[test]
    fn lu_with_pivoting_handles_zero_leading_entry() {
        let a = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let x = a.solve(&[3.0, 5.0]).unwrap();
        assert_relative_eq!(x[0], 5.0, epsilon = 1e-14);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-14);
    }
}
