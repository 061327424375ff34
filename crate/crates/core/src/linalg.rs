//! Dense Cholesky factorization for the small symmetric matrices used by the
//! density model. Matrices are stored row-major in a flat slice.

use alloc::vec;
use alloc::vec::Vec;

/// Lower-triangular factor `L` with `L * L^T = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

/// The leading minor of order `pivot + 1` was not positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    pub pivot: usize,
}

impl Cholesky {
    /// Factors the symmetric `dim x dim` matrix `a`. Only the lower triangle
    /// of `a` is read.
    pub fn factor(a: &[f64], dim: usize) -> Result<Self, NotPositiveDefinite> {
        assert_eq!(a.len(), dim * dim, "matrix must be dim x dim");
        let mut l = vec![0.0; dim * dim];
        for j in 0..dim {
            let mut d = a[j * dim + j];
            for k in 0..j {
                d -= l[j * dim + k] * l[j * dim + k];
            }
            if d.is_nan() || d <= 0.0 || d.is_infinite() {
                return Err(NotPositiveDefinite { pivot: j });
            }
            let ljj = libm::sqrt(d);
            l[j * dim + j] = ljj;
            for i in (j + 1)..dim {
                let mut s = a[i * dim + j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                l[i * dim + j] = s / ljj;
            }
        }
        Ok(Self { dim, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major lower factor; the strict upper triangle is zero.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// `ln |A| = 2 * sum(ln L_ii)`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim)
            .map(|i| libm::log(self.lower[i * self.dim + i]))
            .sum::<f64>()
    }

    /// Solves `L z = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        let n = self.dim;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, z)| l * z).sum();
            b[i] = (b[i] - s) / self.lower[i * n + i];
        }
    }

    /// `v^T A^{-1} v`, computed as `|L^{-1} v|^2`.
    pub fn quad_form_inv(&self, v: &[f64]) -> f64 {
        let mut z = v.to_vec();
        self.forward_solve(&mut z);
        z.iter().map(|x| x * x).sum()
    }
}
