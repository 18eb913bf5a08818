//! Dense matrix helpers: a bounds-checked GEMM wrapper and a small
//! Cholesky factorization used by the Gram solve.

use super::Scalar;

/// Strided read-only matrix view.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major `rows x cols` view.
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        MatRef { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride;
            assert!(last < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// Row-major mutable matrix view.
#[derive(Debug)]
pub struct MatMut<'a, T> {
    pub data: &'a mut [T],
    pub rows: usize,
    pub cols: usize,
}

impl<'a, T> MatMut<'a, T> {
    pub fn new(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        assert!(rows * cols <= data.len(), "matrix view out of bounds");
        MatMut { data, rows, cols }
    }
}

/// `c = alpha * a * b + beta * c`.
pub fn gemm<T: Scalar>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: MatMut<'_, T>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension mismatch");
    assert_eq!(a.rows, c.rows, "gemm row mismatch");
    assert_eq!(b.cols, c.cols, "gemm column mismatch");
    a.check();
    b.check();
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.cols == 0 {
        for v in c.data[..c.rows * c.cols].iter_mut() {
            *v = if beta == T::zero() { T::zero() } else { *v * beta };
        }
        return;
    }
    // SAFETY: all three views were bounds-checked above.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        )
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factorizes the row-major `n x n` matrix. Returns a description of the
    /// failure when a pivot is not strictly positive or not finite.
    pub fn factor(a: &[f64], n: usize) -> Result<Self, String> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !d.is_finite() || d <= 0.0 {
                return Err(format!("Gram matrix is not positive definite (pivot {j} = {d:e})"));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A X = B` in place for the row-major `n x cols` right-hand side.
    pub fn solve_in_place(&self, b: &mut [f64], cols: usize) {
        let n = self.n;
        assert_eq!(b.len(), n * cols);
        let l = &self.lower;
        for c in 0..cols {
            for i in 0..n {
                let mut s = b[i * cols + c];
                for k in 0..i {
                    s -= l[i * n + k] * b[k * cols + c];
                }
                b[i * cols + c] = s / l[i * n + i];
            }
            for i in (0..n).rev() {
                let mut s = b[i * cols + c];
                for k in (i + 1)..n {
                    s -= l[k * n + i] * b[k * cols + c];
                }
                b[i * cols + c] = s / l[i * n + i];
            }
        }
    }
}
