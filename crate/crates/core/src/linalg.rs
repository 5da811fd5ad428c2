//! Dense row-major complex matrices backed by a blocked GEMM.

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self * other`.
    pub fn matmul(&self, other: &CMat) -> CMat {
        let mut out = CMat::zeros(self.rows, other.cols);
        gemm_into(Complex64::new(1.0, 0.0), self, other, Complex64::new(0.0, 0.0), &mut out);
        out
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: Complex64, other: &CMat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: Complex64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `c = alpha * a * b + beta * c`.
pub fn gemm_into(alpha: Complex64, a: &CMat, b: &CMat, beta: Complex64, c: &mut CMat) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!((c.rows, c.cols), (a.rows, b.cols), "output shape mismatch");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        c.scale(beta);
        return;
    }
    // SAFETY: Complex64 is repr(C) with two f64 fields, matching the
    // `[f64; 2]` layout expected by zgemm; all strides describe the
    // row-major buffers whose sizes were asserted above.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            a.rows,
            a.cols,
            b.cols,
            [alpha.re, alpha.im],
            a.data.as_ptr() as *const [f64; 2],
            a.cols as isize,
            1,
            b.data.as_ptr() as *const [f64; 2],
            b.cols as isize,
            1,
            [beta.re, beta.im],
            c.data.as_mut_ptr() as *mut [f64; 2],
            c.cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_naive() {
        let a = CMat { rows: 2, cols: 3, data: (0..6).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect() };
        let b = CMat { rows: 3, cols: 2, data: (0..6).map(|i| Complex64::new(0.5 * i as f64, 2.0)).collect() };
        let c = a.matmul(&b);
        for i in 0..2 {
            for j in 0..2 {
                let expect: Complex64 = (0..3).map(|l| a.at(i, l) * b.at(l, j)).sum();
                assert!((c.at(i, j) - expect).norm() < 1e-12);
            }
        }
    }
}
