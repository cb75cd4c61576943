//! Compressed sparse row storage for the assembled operators.

use alloc::vec::Vec;

use nalgebra::DMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Row-by-row builder; entries within a row may arrive in any order and
/// repeated columns are summed.
pub struct CsrBuilder {
    nrows: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    row: Vec<(usize, f64)>,
}

impl CsrBuilder {
    pub fn new(nrows: usize) -> Self {
        CsrBuilder { nrows, row_ptr: alloc::vec![0], col_idx: Vec::new(), values: Vec::new(), row: Vec::new() }
    }

    pub fn push(&mut self, col: usize, value: f64) {
        debug_assert!(col < self.nrows);
        self.row.push((col, value));
    }

    pub fn finish_row(&mut self) {
        self.row.sort_by_key(|&(c, _)| c);
        let mut last: Option<usize> = None;
        for &(c, v) in &self.row {
            if last == Some(c) {
                *self.values.last_mut().unwrap() += v;
            } else {
                self.col_idx.push(c);
                self.values.push(v);
                last = Some(c);
            }
        }
        self.row.clear();
        self.row_ptr.push(self.col_idx.len());
    }

    pub fn build(self) -> CsrMatrix {
        assert_eq!(self.row_ptr.len(), self.nrows + 1, "every row must be finished");
        CsrMatrix { nrows: self.nrows, row_ptr: self.row_ptr, col_idx: self.col_idx, values: self.values }
    }
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// `(row, col, value)` triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = alloc::vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    /// Adds `shift[i]` to every diagonal entry (entries must already exist).
    pub fn add_diagonal(&mut self, shift: &[f64]) {
        for (i, s) in shift.iter().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            let p = self.col_idx[r.clone()].binary_search(&i).expect("diagonal entry present");
            self.values[r.start + p] += s;
        }
    }

    /// Exact entrywise symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.nrows);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}
