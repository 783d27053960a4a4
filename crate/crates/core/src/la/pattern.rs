//! Sparsity patterns: predicted before assembly, frozen afterwards.

/// Accumulates (row, col) pairs; `finalize` sorts and deduplicates.
#[derive(Debug, Clone)]
pub struct PatternBuilder {
    nrows: usize,
    ncols: usize,
    rows: Vec<Vec<usize>>,
}

impl PatternBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        PatternBuilder { nrows, ncols, rows: vec![Vec::new(); nrows] }
    }

    pub fn insert(&mut self, row: usize, col: usize) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.rows[row].push(col);
    }

    /// Dense coupling of a local block: every row index against every column.
    pub fn insert_block(&mut self, rows: &[usize], cols: &[usize]) {
        for &r in rows {
            debug_assert!(r < self.nrows);
            self.rows[r].extend_from_slice(cols);
        }
    }

    pub fn finalize(mut self) -> SparsityPattern {
        // The diagonal is always present on square patterns so boundary
        // condition application can never miss it.
        if self.nrows == self.ncols {
            for (r, cols) in self.rows.iter_mut().enumerate() {
                cols.push(r);
            }
        }
        let mut offsets = Vec::with_capacity(self.nrows + 1);
        let mut cols = Vec::new();
        offsets.push(0);
        for row in &mut self.rows {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            offsets.push(cols.len());
        }
        SparsityPattern { nrows: self.nrows, ncols: self.ncols, offsets, cols }
    }
}

/// Compressed-row pattern with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
}

impl SparsityPattern {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.cols[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Position of (r, c) in the value array, if predicted.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let row = self.row(r);
        row.binary_search(&c).ok().map(|i| self.offsets[r] + i)
    }
}
