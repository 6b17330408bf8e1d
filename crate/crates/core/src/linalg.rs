//! Small dense linear algebra for d×d systems.

use serde::{Deserialize, Serialize};

use crate::scalar::{dot, Scalar};

/// Relative pivot threshold for the symmetric factorization.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn from_row_major(dim: usize, data: Vec<T>) -> Option<Self> {
        (dim > 0 && data.len() == dim * dim).then_some(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![T::zero(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = T::one();
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// A·Aᵀ.
    pub fn gram(&self) -> Self {
        let d = self.dim;
        let mut data = vec![T::zero(); d * d];
        for i in 0..d {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                data[i * d + j] = v;
                data[j * d + i] = v;
            }
        }
        Self { dim: d, data }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.dim).map(|i| dot(self.row(i), v)).collect()
    }

    /// vᵀ A v.
    pub fn quad_form(&self, v: &[T]) -> T {
        dot(v, &self.mul_vec(v))
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    lower: Matrix<T>,
}

/// Pivot that fell below the scale-free threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotPositiveDefinite {
    pub index: usize,
    pub pivot: f64,
}

impl<T: Scalar> Cholesky<T> {
    /// Fails when a pivot is below `PIVOT_TOLERANCE` times the largest diagonal entry.
    pub fn factor(a: &Matrix<T>) -> Result<Self, NotPositiveDefinite> {
        let d = a.dim;
        let max_diag = (0..d)
            .map(|i| a.get(i, i).abs())
            .fold(T::zero(), T::max);
        let floor = T::lit(PIVOT_TOLERANCE) * max_diag;
        let mut l = vec![T::zero(); d * d];
        for j in 0..d {
            let mut pivot = a.get(j, j);
            for k in 0..j {
                pivot = pivot - l[j * d + k] * l[j * d + k];
            }
            if !(pivot > floor) {
                return Err(NotPositiveDefinite {
                    index: j,
                    pivot: pivot.as_f64(),
                });
            }
            let ljj = pivot.sqrt();
            l[j * d + j] = ljj;
            for i in j + 1..d {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s = s - l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Self {
            lower: Matrix { dim: d, data: l },
        })
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let d = self.lower.dim;
        let l = &self.lower;
        let mut y = vec![T::zero(); d];
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s = s - l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        let mut x = vec![T::zero(); d];
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in i + 1..d {
                s = s - l.get(k, i) * x[k];
            }
            x[i] = s / l.get(i, i);
        }
        x
    }
}
