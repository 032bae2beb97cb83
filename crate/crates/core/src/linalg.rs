//! Small dense complex matrices.

use num_complex::Complex;

use crate::scalar::{Cx, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Cx<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> Cx<T> {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = Complex::new(T::one(), T::zero());
        for c in 0..n {
            let mut piv = c;
            let mut best = a[c * n + c].norm();
            for r in c + 1..n {
                let v = a[r * n + c].norm();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == T::zero() {
                return Complex::new(T::zero(), T::zero());
            }
            if piv != c {
                for j in 0..n {
                    a.swap(c * n + j, piv * n + j);
                }
                det = -det;
            }
            let p = a[c * n + c];
            det = det * p;
            for r in c + 1..n {
                let f = a[r * n + c] / p;
                if f.re == T::zero() && f.im == T::zero() {
                    continue;
                }
                for j in c..n {
                    let v = a[c * n + j];
                    a[r * n + j] = a[r * n + j] - f * v;
                }
            }
        }
        det
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Cx<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Cx<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cx<T> {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_of_known_matrix() {
        let mut m = CMatrix::<f64>::zeros(3, 3);
        let v = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 4.0]];
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = Complex::new(v[i][j], 0.0);
            }
        }
        m[(0, 0)] = Complex::new(0.0, 1.0);
        // i·(4) − 2·(4) + 1·(−3)
        let want = Complex::new(-11.0, 4.0);
        assert!((m.det() - want).norm() < 1e-13);
    }

    #[test]
    fn identity_product() {
        let i = CMatrix::<f64>::identity(4);
        assert_eq!(i.mul(&i), i);
        assert_eq!(i.det(), Complex::new(1.0, 0.0));
    }
}
