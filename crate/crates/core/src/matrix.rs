//! Dense row-major matrices and the few products the model needs.
//!
//! Left-operand zeros are skipped in every product, so sparse inputs
//! (bag-of-words features, dropped-out activations) stay cheap without a
//! sparse type. All products are bitwise-deterministic at any thread count:
//! parallel loops own disjoint output rows, and the one reduction
//! (`transposed_matmul`) sums fixed-size partials in a fixed order.

use rayon::prelude::*;

/// Row-major `rows x cols` matrix of f64. Rows are nodes, columns channels,
/// except where a weight matrix (in x out) is stored.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Row-chunk size for the deterministic partial reduction in
/// `transposed_matmul`. Fixed so chunk boundaries never depend on the
/// thread count.
const REDUCE_CHUNK: usize = 512;

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Wraps an existing row-major buffer. Panics if the length is not
    /// `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length must be rows*cols");
        Self { rows, cols, data }
    }

    /// Builds from row slices; handy in tests. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `self (n x k) * rhs (k x m)`. Inner loop walks the lhs row and skips
    /// zeros, accumulating scaled rhs rows; each output row is owned by one
    /// task, so the sum order per entry is fixed.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul: lhs cols != rhs rows");
        let m = rhs.cols;
        let mut out = Self::zeros(self.rows, m);
        out.data
            .par_chunks_mut(m.max(1))
            .zip(self.data.par_chunks(self.cols.max(1)))
            .for_each(|(out_row, lhs_row)| {
                for (k, &a) in lhs_row.iter().enumerate() {
                    if a != 0.0 {
                        let rhs_row = &rhs.data[k * m..(k + 1) * m];
                        for (o, &w) in out_row.iter_mut().zip(rhs_row) {
                            *o += a * w;
                        }
                    }
                }
            });
        out
    }

    /// `self (n x m) * rhs^T (k x m)^T -> n x k`. Used for gradients through
    /// a weight matrix without materializing the transpose.
    pub fn matmul_rhs_transposed(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols, "matmul_rhs_transposed: col mismatch");
        let k = rhs.rows;
        let mut out = Self::zeros(self.rows, k);
        out.data
            .par_chunks_mut(k.max(1))
            .zip(self.data.par_chunks(self.cols.max(1)))
            .for_each(|(out_row, lhs_row)| {
                for (kk, o) in out_row.iter_mut().enumerate() {
                    let rhs_row = &rhs.data[kk * rhs.cols..(kk + 1) * rhs.cols];
                    let mut acc = 0.0;
                    for (&a, &b) in lhs_row.iter().zip(rhs_row) {
                        acc += a * b;
                    }
                    *o = acc;
                }
            });
        out
    }

    /// `a^T (n x k)^T * b (n x m) -> k x m`. Rows are processed in fixed
    /// chunks whose partial results are reduced in chunk order, independent
    /// of thread count.
    pub fn transposed_matmul(a: &Self, b: &Self) -> Self {
        assert_eq!(a.rows, b.rows, "transposed_matmul: row mismatch");
        let (k, m) = (a.cols, b.cols);
        let starts: Vec<usize> = (0..a.rows).step_by(REDUCE_CHUNK).collect();
        let partials: Vec<Vec<f64>> = starts
            .par_iter()
            .map(|&s| {
                let e = (s + REDUCE_CHUNK).min(a.rows);
                let mut acc = vec![0.0; k * m];
                for i in s..e {
                    let (ar, br) = (a.row(i), b.row(i));
                    for (kk, &av) in ar.iter().enumerate() {
                        if av != 0.0 {
                            let dst = &mut acc[kk * m..(kk + 1) * m];
                            for (d, &bv) in dst.iter_mut().zip(br) {
                                *d += av * bv;
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = Self::zeros(k, m);
        for p in partials {
            for (o, v) in out.data.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }
}
