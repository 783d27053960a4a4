//! CSR matrix over a fixed sparsity pattern.

use super::{DenseMatrix, LaError, SparsityPattern};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: SparsityPattern,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_pattern(pattern: &SparsityPattern) -> Self {
        CsrMatrix { values: vec![0.0; pattern.nnz()], pattern: pattern.clone() }
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols()
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.position(r, c).map_or(0.0, |p| self.values[p])
    }

    /// Accumulate one entry. Insertion outside the pattern aborts the
    /// assembly: growing here would hide a sparsity prediction bug.
    pub fn add(&mut self, r: usize, c: usize, v: f64) -> Result<(), LaError> {
        match self.pattern.position(r, c) {
            Some(p) => {
                self.values[p] += v;
                Ok(())
            }
            None => Err(LaError::OutsidePattern { row: r, col: c }),
        }
    }

    /// Accumulate a dense row-major block addressed by global indices.
    pub fn add_block(&mut self, block: &[f64], rows: &[usize], cols: &[usize]) -> Result<(), LaError> {
        debug_assert_eq!(block.len(), rows.len() * cols.len());
        for (bi, &r) in rows.iter().enumerate() {
            if r >= self.nrows() {
                return Err(LaError::IndexOutOfRange { index: r, len: self.nrows() });
            }
            for (bj, &c) in cols.iter().enumerate() {
                self.add(r, c, block[bi * cols.len() + bj])?;
            }
        }
        Ok(())
    }

    /// Overwrite one stored entry (no-op value change, pattern untouched).
    pub fn set(&mut self, r: usize, c: usize, v: f64) -> Result<(), LaError> {
        match self.pattern.position(r, c) {
            Some(p) => {
                self.values[p] = v;
                Ok(())
            }
            None => Err(LaError::OutsidePattern { row: r, col: c }),
        }
    }

    /// Replace row `r` by the unit row e_r. The diagonal must be in the
    /// pattern, which square patterns guarantee by construction.
    pub fn zero_row_set_diagonal(&mut self, r: usize) -> Result<(), LaError> {
        let (start, end) = (self.pattern.offsets()[r], self.pattern.offsets()[r + 1]);
        self.values[start..end].fill(0.0);
        self.set(r, r, 1.0)
    }

    /// Zero all stored entries in column `c` (linear sweep; used by the
    /// symmetric boundary-condition path on small systems only).
    pub fn zero_column(&mut self, c: usize) {
        for r in 0..self.nrows() {
            if let Some(p) = self.pattern.position(r, c) {
                self.values[p] = 0.0;
            }
        }
    }

    pub fn zero(&mut self) {
        self.values.fill(0.0);
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        let mut y = vec![0.0; self.nrows()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let offsets = self.pattern.offsets();
        let cols = self.pattern.cols();
        for r in 0..self.nrows() {
            let mut acc = 0.0;
            for p in offsets[r]..offsets[r + 1] {
                acc += self.values[p] * x[cols[p]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows().min(self.ncols())).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows(), self.ncols());
        let offsets = self.pattern.offsets();
        let cols = self.pattern.cols();
        for r in 0..self.nrows() {
            for p in offsets[r]..offsets[r + 1] {
                d.set(r, cols[p], self.values[p]);
            }
        }
        d
    }

    /// Largest |A_ij - A_ji| over the stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let offsets = self.pattern.offsets();
        let cols = self.pattern.cols();
        for r in 0..self.nrows() {
            for p in offsets[r]..offsets[r + 1] {
                worst = worst.max((self.values[p] - self.get(cols[p], r)).abs());
            }
        }
        worst
    }
}
