//! Dense row-major `f64` matrices and the few products the model needs.

use serde::{Deserialize, Serialize};

use crate::par;

/// Output rows per parallel work item.
pub(crate) const ROW_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn view(&self) -> View<'_> {
        View { data: &self.data, offset: 0, rows: self.rows, cols: self.cols, rs: self.cols, cs: 1 }
    }

    /// Rows `r0..r1` as a view.
    pub fn rows_view(&self, r0: usize, r1: usize) -> View<'_> {
        self.view().rows(r0, r1)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Strided read-only view; transposition is a stride swap.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    data: &'a [f64],
    offset: usize,
    pub rows: usize,
    pub cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> View<'a> {
    pub fn t(self) -> View<'a> {
        View { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    pub fn rows(self, r0: usize, r1: usize) -> View<'a> {
        assert!(r0 <= r1 && r1 <= self.rows, "row range");
        View { offset: self.offset + r0 * self.rs, rows: r1 - r0, ..self }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < self.data.len(), "view out of bounds");
        }
    }
}

/// `c[rows x cols] = beta * c + a * b` where `c` is a contiguous row-major slice.
fn gemm_into(a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "inner dimensions");
    assert_eq!(c.len(), a.rows * b.cols, "output size");
    a.check();
    b.check();
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: both views were bounds-checked above and `c` has exactly
    // `a.rows * b.cols` elements laid out with row stride `b.cols`.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

/// `out = a * b` (or `out += a * b` when `accumulate`), parallel over row chunks.
pub fn matmul_into(a: View<'_>, b: View<'_>, out: &mut Matrix, accumulate: bool) {
    assert_eq!((out.rows, out.cols), (a.rows, b.cols), "output shape");
    let cols = out.cols;
    let beta = if accumulate { 1.0 } else { 0.0 };
    par::for_each_chunk_mut(&mut out.data, ROW_CHUNK * cols.max(1), |ci, chunk| {
        let r0 = ci * ROW_CHUNK;
        let r1 = r0 + chunk.len() / cols.max(1);
        gemm_into(a.rows(r0, r1), b, beta, chunk);
    });
}

pub fn matmul(a: View<'_>, b: View<'_>) -> Matrix {
    let mut out = Matrix::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut out, false);
    out
}

/// Adds `bias` to every row.
pub fn add_row(m: &mut Matrix, bias: &[f64]) {
    assert_eq!(bias.len(), m.cols);
    let cols = m.cols;
    par::for_each_chunk_mut(&mut m.data, ROW_CHUNK * cols.max(1), |_, chunk| {
        for row in chunk.chunks_mut(cols) {
            for (x, b) in row.iter_mut().zip(bias) {
                *x += b;
            }
        }
    });
}

/// Column sums, accumulated in row order.
pub fn col_sums(m: &Matrix) -> Vec<f64> {
    let mut s = vec![0.0; m.cols];
    for row in m.data.chunks(m.cols.max(1)) {
        for (a, x) in s.iter_mut().zip(row) {
            *a += x;
        }
    }
    s
}
