//! Dense row-major f64 matrices.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix shape does not match data");
        Self { rows, cols, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in &mut self.data {
            *a *= k;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
struct View {
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

fn view(m: &Matrix, transposed: bool) -> View {
    if transposed {
        View {
            rows: m.cols,
            cols: m.rows,
            rs: 1,
            cs: m.cols as isize,
        }
    } else {
        View {
            rows: m.rows,
            cols: m.cols,
            rs: m.cols as isize,
            cs: 1,
        }
    }
}

/// `out += op(a) · op(b)` where `op` optionally transposes.
pub fn gemm_acc(out: &mut Matrix, a: &Matrix, ta: bool, b: &Matrix, tb: bool) {
    let va = view(a, ta);
    let vb = view(b, tb);
    assert_eq!(va.cols, vb.rows, "inner dimensions differ");
    assert_eq!((out.rows, out.cols), (va.rows, vb.cols), "output shape differs");
    if va.rows == 0 || vb.cols == 0 || va.cols == 0 {
        return;
    }
    // SAFETY: the views describe exactly the memory owned by `a`, `b` and
    // `out`, whose lengths were checked against their shapes on construction,
    // and `out` does not alias either input.
    unsafe {
        matrixmultiply::dgemm(
            va.rows,
            va.cols,
            vb.cols,
            1.0,
            a.data.as_ptr(),
            va.rs,
            va.cs,
            b.data.as_ptr(),
            vb.rs,
            vb.cs,
            1.0,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        );
    }
}

pub fn matmul(a: &Matrix, ta: bool, b: &Matrix, tb: bool) -> Matrix {
    let rows = if ta { a.cols } else { a.rows };
    let cols = if tb { b.rows } else { b.cols };
    let mut out = Matrix::zeros(rows, cols);
    gemm_acc(&mut out, a, ta, b, tb);
    out
}
